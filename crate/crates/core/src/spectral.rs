//! Spectral theory of the feature Gram matrix Σ = ZᵀZ/N.
//!
//! The analytic spectral density follows from a self-consistent resolvent
//! equation. Writing ψ = D/P, φ = D/N and
//!
//! ```text
//! zψ·B = (1 + φE(B))(1 + ψE(B)),   E(B) = (η−ζ)B + ζB/(1 − ζB),
//! A = 1 + E(B),                     G(z) = (1 + ψE(B))/z,
//! ```
//!
//! multiplying through by (1 − ζB)² turns the fixed point into a quartic
//! in B:  L_φ(B)·L_ψ(B) − zψ(B − 2ζB² + ζ²B³) = 0 with
//! L_x(B) = 1 + (xη − ζ)B − xζ(η−ζ)B².
//!
//! B is the right variable numerically: its quartic has O(1) coefficients
//! for small z, where the equivalent quartic in A has coefficients spread
//! over ~t² = 1/(zψ)² and its roots turn to noise exactly where the gap and
//! the atom live. Roots come from the companion matrix. Selection uses two
//! regimes: inside a bulk the physical branch is the complex root with the
//! largest Im G (the conjugate partner has Im G < 0, spurious branches sit
//! near the real axis); inside a support gap all roots are real up to
//! ε-perturbation and only continuity in A — whose geometry reflects branch
//! distances — picks the analytic continuation. Continuity alone fails at
//! gap entry: the physical pair collapses onto a double real root and the
//! closest-root rule degenerates to a coin flip between the two separating
//! real branches.
//!
//! The density is recovered by evaluating at z = λ − iε for two small ε and
//! extrapolating linearly to ε → 0. The point mass at λ = 0 ("atom") is
//! known exactly from the rank law — rank(Σ) = min(N, P) generically and
//! min(N, P, D) for a linear activation — and its Cauchy tail
//! atom·ε/(π(λ²+ε²)) is subtracted *before* extrapolation; otherwise its
//! curvature in ε leaves a spurious residue ∝ atom/λ at small λ that
//! corrupts gap detection.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eig, EigValsh, UPLO};
use num_complex::Complex64;

/// Dimensionless parameters of the spectral problem.
#[derive(Debug, Clone, Copy)]
pub struct SpectralParams {
    /// Second Gaussian moment η = E[σ(z)²].
    pub eta: f64,
    /// Linear weight ζ = (E[σ′(z)])².
    pub zeta: f64,
    /// ψ = D/P.
    pub psi: f64,
    /// φ = D/N.
    pub phi: f64,
}

impl SpectralParams {
    pub fn new(eta: f64, zeta: f64, d: usize, n: usize, p: usize) -> Self {
        SpectralParams {
            eta,
            zeta,
            psi: d as f64 / p as f64,
            phi: d as f64 / n as f64,
        }
    }

    /// Point mass at λ = 0 from the rank law: 1 − rank(Σ)/P with
    /// rank = min(N, P) generically, min(N, P, D) when σ is linear (ζ = η).
    pub fn rank_atom(&self) -> f64 {
        let n_over_p = self.psi / self.phi;
        let d_over_p = self.psi;
        if (self.eta - self.zeta).abs() <= 1e-12 * self.eta.max(1.0) {
            1.0 - n_over_p.min(d_over_p).min(1.0)
        } else {
            1.0 - n_over_p.min(1.0)
        }
    }
}

/// Ascending coefficients of the quartic in B obtained from the fixed point
/// zψB = (1 + φE)(1 + ψE) by clearing the (1 − ζB)² denominator:
/// L_φ·L_ψ − zψ(B − 2ζB² + ζ²B³) with L_x = 1 + (xη−ζ)B − xζ(η−ζ)B².
fn quartic_coeffs(z: Complex64, p: &SpectralParams) -> [Complex64; 5] {
    let (eta, zeta, psi, phi) = (p.eta, p.zeta, p.psi, p.phi);
    let a1 = phi * eta - zeta;
    let b1 = -phi * zeta * (eta - zeta);
    let a2 = psi * eta - zeta;
    let b2 = -psi * zeta * (eta - zeta);
    let zp = z * psi;
    let mut c = [Complex64::new(0.0, 0.0); 5];
    c[0] = Complex64::new(1.0, 0.0);
    c[1] = Complex64::new(a1 + a2, 0.0) - zp;
    c[2] = Complex64::new(a1 * a2 + b1 + b2, 0.0) + 2.0 * zeta * zp;
    c[3] = Complex64::new(a1 * b2 + a2 * b1, 0.0) - zeta * zeta * zp;
    c[4] = Complex64::new(b1 * b2, 0.0);
    c
}

/// E(B) = (η−ζ)B + ζB/(1 − ζB); the tracked variable is A = 1 + E(B).
fn e_of(b: Complex64, p: &SpectralParams) -> Complex64 {
    (p.eta - p.zeta) * b + p.zeta * b / (Complex64::new(1.0, 0.0) - p.zeta * b)
}

/// Roots of a complex polynomial with ascending coefficients, via the
/// companion matrix. Leading coefficients below 1e-14 of the largest are
/// trimmed (the quartic degenerates for special parameter values).
fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mag = coeffs.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    if mag == 0.0 {
        return Err(Error::Linalg("zero polynomial in root solver".into()));
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() < 1e-14 * mag {
        deg -= 1;
    }
    if deg == 0 {
        return Ok(Vec::new());
    }
    if deg == 1 {
        return Ok(vec![-coeffs[0] / coeffs[1]]);
    }
    let lead = coeffs[deg];
    let mut comp: Array2<Complex64> = Array2::zeros((deg, deg));
    for i in 1..deg {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let (vals, _) = comp.eig()?;
    Ok(vals.to_vec())
}

fn poly_eval(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Newton-polish a companion-matrix eigenvalue on the original polynomial.
/// The B-space coefficients grow only like zψ, so Horner evaluation near a
/// root is well-conditioned and a few steps recover full precision (the
/// companion eigensolver loses digits when the root spread is many decades).
/// Keeps the best iterate, so (near-)double roots can only improve.
fn newton_polish(coeffs: &[Complex64], mut x: Complex64) -> Complex64 {
    let deriv: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect();
    let mut best = x;
    let mut best_res = poly_eval(coeffs, x).norm();
    for _ in 0..3 {
        let d = poly_eval(&deriv, x);
        if d.norm() == 0.0 {
            break;
        }
        let step = poly_eval(coeffs, x) / d;
        x -= step;
        let res = poly_eval(coeffs, x).norm();
        if res < best_res {
            best_res = res;
            best = x;
        } else {
            break;
        }
        if step.norm() <= 1e-16 * x.norm() {
            break;
        }
    }
    best
}

/// Stieltjes transform from the auxiliary variable: G = tψ(ψA + 1 − ψ).
fn g_of(a: Complex64, t: Complex64, psi: f64) -> Complex64 {
    t * psi * (psi * a + Complex64::new(1.0 - psi, 0.0))
}

/// Adaptive imaginary offsets (ε_hi, ε_lo). ε must stay well below λ so the
/// atom's Cauchy tail remains linear in ε for the extrapolation.
fn eps_pair(lam: f64) -> (f64, f64) {
    let eh = (1e-6_f64).min(lam / 100.0);
    (eh, eh / 10.0)
}

/// Candidate roots at one z: (A = 1 + E(B), relative residual of the
/// B-quartic at B, Im G). The residual is evaluated in the well-conditioned
/// B variable; A is what branch tracking compares.
fn candidates(
    z: Complex64,
    p: &SpectralParams,
) -> Result<Vec<(Complex64, f64, f64)>> {
    let coeffs = quartic_coeffs(z, p);
    let roots = poly_roots(&coeffs)?;
    let mut out = Vec::with_capacity(roots.len());
    for b in roots {
        let b = newton_polish(&coeffs, b);
        let mut scale = 1e-300_f64;
        let mut xk = 1.0_f64;
        for c in coeffs.iter() {
            scale += c.norm() * xk;
            xk *= b.norm();
        }
        let res = poly_eval(&coeffs, b).norm() / scale;
        let e = e_of(b, p);
        let a = Complex64::new(1.0, 0.0) + e;
        let img = ((Complex64::new(1.0, 0.0) + p.psi * e) / z).im;
        out.push((a, res, img));
    }
    Ok(out)
}

/// Threshold on Im G that separates "a genuinely complex physical branch
/// exists" (bulk) from "all roots are real up to ε-perturbation" (gap).
const BULK_IM_THRESHOLD: f64 = 1e-9;

/// Solve the self-consistent equation at a single z = λ − iε on the
/// physical branch: among numerical roots, the one with the largest Im G
/// (for z in the lower half-plane the physical branch has Im G ≥ 0;
/// spurious branches sit below). Returns A = 1 + E(B).
pub fn resolve_a(z: Complex64, p: &SpectralParams) -> Result<Complex64> {
    let cand = candidates(z, p)?;
    let ok: Vec<_> = cand
        .iter()
        .filter(|(_, res, img)| *res < 1e-10 && *img > -1e-7)
        .collect();
    if ok.is_empty() {
        return Err(Error::BranchSelection {
            lambda: z.re,
            tol: 1e-10,
            roots: cand.iter().map(|(a, _, _)| (a.re, a.im)).collect(),
        });
    }
    let best_im = ok
        .iter()
        .map(|(_, _, img)| *img)
        .fold(f64::NEG_INFINITY, f64::max);
    if best_im > BULK_IM_THRESHOLD {
        // Inside a bulk: the physical branch is the root with Im G > 0.
        let (a, _, _) = ok
            .iter()
            .max_by(|x, y| x.2.partial_cmp(&y.2).expect("finite Im G"))
            .expect("nonempty");
        return Ok(*a);
    }
    // Outside the support every root is real up to noise; return the branch
    // connected to the λ → ∞ asymptote A → 1.
    let t = (z * p.psi).inv();
    let a_pred = Complex64::new(1.0, 0.0) + e_of(t, p);
    let (a, _, _) = ok
        .iter()
        .min_by(|x, y| {
            let dx = (x.0 - a_pred).norm();
            let dy = (y.0 - a_pred).norm();
            dx.partial_cmp(&dy).expect("finite distance")
        })
        .expect("nonempty");
    Ok(*a)
}

/// Solve along a λ grid at fixed ε choice (`hi` or `lo`). Inside a bulk the
/// root with maximal Im G is the physical branch; inside a gap (all Im G at
/// noise level) the branch continues by closeness in A to the previous grid
/// point, anchored at the λ → ∞ asymptote.
fn solve_grid(lams: &[f64], hi: bool, p: &SpectralParams) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); lams.len()];
    let mut order: Vec<usize> = (0..lams.len()).collect();
    order.sort_by(|&i, &j| lams[j].partial_cmp(&lams[i]).expect("finite λ"));
    let mut a_prev: Option<Complex64> = None;
    for idx in order {
        let lam = lams[idx];
        let (eh, el) = eps_pair(lam);
        let eps = if hi { eh } else { el };
        let z = Complex64::new(lam, -eps);
        let cand = candidates(z, p)?;
        let ok: Vec<(Complex64, f64, f64)> = {
            let passing: Vec<_> = cand
                .iter()
                .cloned()
                .filter(|(_, res, _)| *res < 1e-10)
                .collect();
            if passing.is_empty() { cand } else { passing }
        };
        let best_im = ok
            .iter()
            .map(|c| c.2)
            .fold(f64::NEG_INFINITY, f64::max);
        let a = if best_im > BULK_IM_THRESHOLD {
            ok.iter()
                .max_by(|x, y| x.2.partial_cmp(&y.2).expect("finite Im G"))
                .expect("nonempty candidates")
                .0
        } else {
            let target = match a_prev {
                Some(a) => a,
                None => {
                    let t = Complex64::new(1.0, 0.0) / (z * p.psi);
                    Complex64::new(1.0, 0.0) + e_of(t, p)
                }
            };
            ok.iter()
                .min_by(|x, y| {
                    (x.0 - target)
                        .norm()
                        .partial_cmp(&(y.0 - target).norm())
                        .expect("finite distance")
                })
                .ok_or_else(|| Error::BranchSelection {
                    lambda: lam,
                    tol: 1e-10,
                    roots: Vec::new(),
                })?
                .0
        };
        out[idx] = a;
        a_prev = Some(a);
    }
    Ok(out)
}

/// Continuous spectral density at the given λ values (atom excluded): two-ε
/// evaluation, exact atom-pole subtraction, linear extrapolation to ε → 0,
/// clipped at zero.
pub fn density(lams: &[f64], p: &SpectralParams) -> Result<Vec<f64>> {
    let atom = p.rank_atom();
    let a_hi = solve_grid(lams, true, p)?;
    let a_lo = solve_grid(lams, false, p)?;
    let mut rho = Vec::with_capacity(lams.len());
    for i in 0..lams.len() {
        let lam = lams[i];
        let (eh, el) = eps_pair(lam);
        let th = Complex64::new(1.0, 0.0) / (Complex64::new(lam, -eh) * p.psi);
        let tl = Complex64::new(1.0, 0.0) / (Complex64::new(lam, -el) * p.psi);
        let g_hi = g_of(a_hi[i], th, p.psi).im / std::f64::consts::PI
            - atom * eh / (std::f64::consts::PI * (lam * lam + eh * eh));
        let g_lo = g_of(a_lo[i], tl, p.psi).im / std::f64::consts::PI
            - atom * el / (std::f64::consts::PI * (lam * lam + el * el));
        rho.push((g_lo + (g_lo - g_hi) * el / (eh - el)).max(0.0));
    }
    Ok(rho)
}

/// Analytic spectrum on an automatically sized log grid.
#[derive(Debug, Clone)]
pub struct AnalyticSpectrum {
    pub lambda_grid: Vec<f64>,
    /// Continuous part of the density (the atom is reported separately).
    pub density: Vec<f64>,
    /// Point mass at λ = 0 (rank law).
    pub atom_at_zero: f64,
    /// Left edge of the continuous support: smallest λ with ρ > 1e-4.
    pub gap: Option<f64>,
    /// ∫ρ dλ over the grid (should equal 1 − atom).
    pub mass: f64,
}

/// Threshold defining the numerical support edge of the continuous part.
pub const GAP_DENSITY_THRESHOLD: f64 = 1e-4;

/// First grid λ at which the density exceeds the support threshold.
pub fn spectral_gap(lams: &[f64], rho: &[f64]) -> Option<f64> {
    lams.iter()
        .zip(rho)
        .find(|(_, r)| **r > GAP_DENSITY_THRESHOLD)
        .map(|(l, _)| *l)
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn trapezoid(ys: &[f64], xs: &[f64]) -> f64 {
    ys.windows(2)
        .zip(xs.windows(2))
        .map(|(y, x)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Solve for the full continuous density on a geometric grid from 1e-8 to an
/// automatically expanded λ_max: the grid doubles (up to 12 times) until the
/// density at the right edge has decayed and the recovered continuous mass
/// is within 5e-3 of 1 − atom.
pub fn analytic_spectrum(p: &SpectralParams, npts: usize) -> Result<AnalyticSpectrum> {
    let atom = p.rank_atom();
    let mass_expected = 1.0 - atom;
    let n_over_p = p.psi / p.phi;
    let mut lam_max = 8.0 * p.eta * (1.0_f64).max(1.0 / n_over_p);
    let mut last: Option<AnalyticSpectrum> = None;
    for _ in 0..12 {
        let lams = geomspace(1e-8, lam_max, npts.max(16));
        let rho = density(&lams, p)?;
        let mass = trapezoid(&rho, &lams);
        let gap = spectral_gap(&lams, &rho);
        let edge_ok = *rho.last().expect("nonempty grid") < 1e-8;
        let spec = AnalyticSpectrum {
            lambda_grid: lams,
            density: rho,
            atom_at_zero: atom,
            gap,
            mass,
        };
        if edge_ok && mass >= mass_expected - 5e-3 {
            return Ok(spec);
        }
        last = Some(spec);
        lam_max *= 2.0;
    }
    let spec = last.expect("at least one iteration");
    Err(Error::SpectrumInconsistency {
        total: spec.mass + spec.atom_at_zero,
        tol: 5e-3,
    })
}

impl AnalyticSpectrum {
    /// CDF of the continuous part, normalized to 1, on the λ grid.
    pub fn continuous_cdf(&self) -> (Vec<f64>, Vec<f64>) {
        let mut cdf = Vec::with_capacity(self.lambda_grid.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 1..self.lambda_grid.len() {
            acc += 0.5
                * (self.density[i] + self.density[i - 1])
                * (self.lambda_grid[i] - self.lambda_grid[i - 1]);
            cdf.push(acc);
        }
        let total = acc.max(1e-300);
        for c in cdf.iter_mut() {
            *c /= total;
        }
        (self.lambda_grid.clone(), cdf)
    }
}

/// Empirical spectrum of Σ = ZᵀZ/N.
#[derive(Debug, Clone)]
pub struct EmpiricalSpectrum {
    /// Nonzero (continuous-part) eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Fraction of the P eigenvalues at (numerical) zero.
    pub atom_at_zero: f64,
    /// Smallest eigenvalue above the zero threshold.
    pub gap: Option<f64>,
    /// With `split_top_d`: the D largest eigenvalues (the linear component,
    /// which separates above the nonlinear sea for N ≥ D), ascending.
    pub linear_part: Option<Vec<f64>>,
    /// With `split_top_d`: the remaining P − D eigenvalues, ascending.
    pub nonlinear_part: Option<Vec<f64>>,
}

/// Eigenvalues of ZᵀZ/N computed through the smaller Gram side; rank
/// deficiency appears as an exact atom at zero. `split_top_d = Some(D)`
/// additionally splits off the D largest eigenvalues (requires N ≥ D for the
/// split to be meaningful; the linear component has rank min(N, D)).
pub fn empirical_spectrum(
    z: ArrayView2<f64>,
    split_top_d: Option<usize>,
) -> Result<EmpiricalSpectrum> {
    let (n, p) = (z.nrows(), z.ncols());
    let gram: Array2<f64> = if n < p {
        z.dot(&z.t()) / n as f64
    } else {
        z.t().dot(&z) / n as f64
    };
    let vals: Array1<f64> = gram.eigvalsh(UPLO::Lower)?;
    let mut evs: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    while evs.len() < p {
        evs.push(0.0); // rank-deficient side padding
    }
    evs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let lam_max = *evs.last().expect("nonempty spectrum");
    let cut = n.max(p) as f64 * f64::EPSILON * lam_max;
    let nonzero: Vec<f64> = evs.iter().copied().filter(|v| *v > cut).collect();
    let atom = 1.0 - nonzero.len() as f64 / p as f64;
    let gap = nonzero.first().copied();
    let (linear_part, nonlinear_part) = match split_top_d {
        Some(d) if d <= nonzero.len() => {
            let split = nonzero.len() - d;
            (
                Some(nonzero[split..].to_vec()),
                Some(nonzero[..split].to_vec()),
            )
        }
        Some(_) => (Some(nonzero.clone()), Some(Vec::new())),
        None => (None, None),
    };
    Ok(EmpiricalSpectrum {
        eigenvalues: nonzero,
        atom_at_zero: atom,
        gap,
        linear_part,
        nonlinear_part,
    })
}

/// Marchenko–Pastur density with ratio c and unit variance.
pub fn mp_density(lam: f64, c: f64) -> f64 {
    let (lm, lp) = mp_edges(c);
    if lam <= lm || lam >= lp {
        return 0.0;
    }
    ((lp - lam) * (lam - lm)).sqrt() / (2.0 * std::f64::consts::PI * c * lam)
}

/// Marchenko–Pastur support edges (1 ∓ √c)².
pub fn mp_edges(c: f64) -> (f64, f64) {
    let s = c.sqrt();
    ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
}

/// Locate the left support edge of the analytic density by bisection on
/// ρ(λ) > threshold within [lo, hi].
pub fn find_left_edge(p: &SpectralParams, lo: f64, hi: f64) -> Result<f64> {
    let mut lo = lo.max(1e-12);
    let mut hi = hi;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let rho = density(&[mid], p)?[0];
        if rho > GAP_DENSITY_THRESHOLD {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Wasserstein-1 distance between two CDFs given as piecewise-linear
/// functions on their own grids: ∫|F₁ − F₂| by the midpoint rule over the
/// union grid. Evaluating at interval midpoints (never at the grid points
/// themselves) keeps vertical steps — duplicated x values, e.g. empirical
/// CDF jumps — exact instead of smearing them into ramps.
pub fn wasserstein1(xs1: &[f64], f1: &[f64], xs2: &[f64], f2: &[f64]) -> f64 {
    let mut grid: Vec<f64> = xs1.iter().chain(xs2.iter()).copied().collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    let interp = |xs: &[f64], fs: &[f64], x: f64| -> f64 {
        if x <= xs[0] {
            return fs[0];
        }
        if x >= xs[xs.len() - 1] {
            return fs[fs.len() - 1];
        }
        let j = xs.partition_point(|v| *v < x).max(1);
        let (x0, x1, f0s, f1s) = (xs[j - 1], xs[j], fs[j - 1], fs[j]);
        if x1 > x0 {
            f0s + (f1s - f0s) * (x - x0) / (x1 - x0)
        } else {
            f1s
        }
    };
    grid.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (interp(xs1, f1, mid) - interp(xs2, f2, mid)).abs() * (w[1] - w[0])
        })
        .sum()
}

/// Empirical CDF of a sorted sample: F(x_i) = (i+1)/n.
pub fn empirical_cdf(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len().max(1) as f64;
    (1..=sorted.len()).map(|i| i as f64 / n).collect()
}

/// W1 between an analytic continuous part and an empirical sample, both
/// normalized to probability 1; `normalized` additionally divides by the
/// empirical mean so the distance is scale-free (spectra live on scales
/// that vary by orders of magnitude across N/D).
pub fn w1_analytic_empirical(
    spec: &AnalyticSpectrum,
    sample_sorted: &[f64],
    normalized: bool,
) -> f64 {
    let (xs, cdf) = spec.continuous_cdf();
    let fe = empirical_cdf(sample_sorted);
    let w = wasserstein1(&xs, &cdf, sample_sorted, &fe);
    if normalized {
        let mean = sample_sorted.iter().sum::<f64>() / sample_sorted.len().max(1) as f64;
        w / mean.max(1e-300)
    } else {
        w
    }
}

/// Analytic spectral gap as a function of N for fixed (η, ζ, D, P).
pub fn gap_curve(
    eta: f64,
    zeta: f64,
    d: usize,
    p: usize,
    n_grid: &[usize],
    npts: usize,
) -> Result<Vec<(usize, Option<f64>)>> {
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let params = SpectralParams::new(eta, zeta, d, n, p);
        let spec = analytic_spectrum(&params, npts)?;
        out.push((n, spec.gap));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfcore::{build_features, normal_matrix};
    use crate::ActivationSpec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TANH_ETA: f64 = 0.394294490398;
    const TANH_ZETA: f64 = 0.366879164362;

    #[test]
    fn resolve_a_tends_to_one_at_large_lambda() {
        let p = SpectralParams::new(TANH_ETA, TANH_ZETA, 100, 200, 1000);
        let a = resolve_a(Complex64::new(1e6, -1e-6), &p).unwrap();
        assert!((a - Complex64::new(1.0, 0.0)).norm() < 1e-3, "A = {a:?}");
    }

    #[test]
    fn density_matches_mp_at_zeta_zero() {
        // ζ = 0, η = 1 (abs activation): Σ behaves as white MP with c = P/N.
        let (d, n, p_) = (100, 2000, 1000);
        let c = p_ as f64 / n as f64; // 0.5
        let p = SpectralParams::new(1.0, 0.0, d, n, p_);
        let (lm, lp) = mp_edges(c);
        let span = lp - lm;
        let lams: Vec<f64> = (0..200)
            .map(|i| lm + 0.05 * span + 0.9 * span * i as f64 / 199.0)
            .collect();
        let rho = density(&lams, &p).unwrap();
        let mut sup = 0.0_f64;
        for (lam, r) in lams.iter().zip(&rho) {
            sup = sup.max((r - mp_density(*lam, c)).abs());
        }
        assert!(sup < 1e-3, "sup deviation vs MP: {sup}");
    }

    #[test]
    fn mp_edge_located_by_bisection() {
        let (d, n, p_) = (100, 2000, 1000);
        let c = p_ as f64 / n as f64;
        let p = SpectralParams::new(1.0, 0.0, d, n, p_);
        let (lm, _) = mp_edges(c);
        let edge = find_left_edge(&p, lm - 0.3, lm + 0.3).unwrap();
        assert!(
            (edge - lm).abs() < 1e-4,
            "edge {edge} vs MP {lm}: err {}",
            (edge - lm).abs()
        );
    }

    #[test]
    fn mass_and_atom_consistent_tanh() {
        // N/D = 2, P/D = 10: rank N < P leaves atom 1 − N/P = 0.8.
        let p = SpectralParams::new(TANH_ETA, TANH_ZETA, 100, 200, 1000);
        assert_abs_diff_eq!(p.rank_atom(), 0.8, epsilon = 1e-15);
        let spec = analytic_spectrum(&p, 1200).unwrap();
        assert!(
            (spec.mass - 0.2).abs() < 5e-3,
            "continuous mass {} vs 0.2",
            spec.mass
        );
    }

    #[test]
    fn rank_atom_linear_activation() {
        // Linear σ: rank min(N, P, D) — atom 1 − D/P when D is smallest.
        let p = SpectralParams::new(1.0, 1.0, 100, 500, 1000);
        assert_abs_diff_eq!(p.rank_atom(), 0.9, epsilon = 1e-15);
        // Nonlinear at same shape: rank min(N, P) = 500.
        let q = SpectralParams::new(1.0, 0.5, 100, 500, 1000);
        assert_abs_diff_eq!(q.rank_atom(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gap_matches_mp_edge_for_abs() {
        // ζ = 0: gap should sit at the MP left edge (1 − √c)².
        let (d, n, p_) = (100, 2000, 1000);
        let c = p_ as f64 / n as f64;
        let p = SpectralParams::new(1.0, 0.0, d, n, p_);
        let spec = analytic_spectrum(&p, 3000).unwrap();
        let (lm, _) = mp_edges(c);
        let gap = spec.gap.expect("gapped spectrum");
        assert!(
            (gap - lm).abs() < 0.02 * lm,
            "gap {gap} vs MP edge {lm}"
        );
    }

    #[test]
    fn gapless_at_interpolation_threshold() {
        // N = P: the nonlinear sea touches zero; the detected gap collapses
        // to the bottom of the λ grid.
        let p = SpectralParams::new(TANH_ETA, TANH_ZETA, 100, 1000, 1000);
        let spec = analytic_spectrum(&p, 1500).unwrap();
        let gap = spec.gap.expect("density present");
        assert!(gap < 1e-3, "expected gapless spectrum, gap = {gap}");
    }

    #[test]
    fn tracked_branch_agrees_with_standalone() {
        let p = SpectralParams::new(TANH_ETA, TANH_ZETA, 100, 200, 1000);
        let lams = geomspace(0.5, 5.0, 20);
        let tracked = solve_grid(&lams, true, &p).unwrap();
        for (i, lam) in lams.iter().enumerate() {
            let (eh, _) = eps_pair(*lam);
            let a = resolve_a(Complex64::new(*lam, -eh), &p).unwrap();
            assert!(
                (a - tracked[i]).norm() < 1e-8,
                "branch mismatch at λ={lam}: {a} vs {}",
                tracked[i]
            );
        }
    }

    #[test]
    fn intermediate_r_gap_closes_only_at_interpolation() {
        // r = 0.5 has well-separated linear and nonlinear bulks; tracking
        // must re-acquire the lower bulk after crossing the inter-component
        // gap. The spectral gap closes at N = P and reopens on both sides.
        let mut gaps = Vec::new();
        for n in [794_usize, 1000, 1259] {
            let p = SpectralParams::new(1.0, 0.5, 100, n, 1000);
            let spec = analytic_spectrum(&p, 1500).unwrap();
            assert!(
                (spec.mass + spec.atom_at_zero - 1.0).abs() < 5e-3,
                "mass + atom = {} at N = {n}",
                spec.mass + spec.atom_at_zero
            );
            gaps.push(spec.gap.expect("density found"));
        }
        assert!(gaps[1] < 1e-4, "gap at N = P should vanish: {}", gaps[1]);
        assert!(gaps[0] > 1e-3, "gap left of N = P: {}", gaps[0]);
        assert!(gaps[2] > 1e-3, "gap right of N = P: {}", gaps[2]);
    }

    #[test]
    fn empirical_product_wishart_matches_linear_analytic() {
        // r = 1: Σ for σ = identity is the product-Wishart ensemble.
        let (d, n, p_) = (200, 400, 100);
        let act = ActivationSpec::new(crate::Activation::Linear).unwrap();
        let mut evs: Vec<f64> = Vec::new();
        for s in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + s);
            let x = normal_matrix(&mut rng, n, d);
            let th = normal_matrix(&mut rng, p_, d);
            let z = build_features(x.view(), th.view(), &act).unwrap();
            let emp = empirical_spectrum(z.view(), None).unwrap();
            evs.extend(emp.eigenvalues);
        }
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let params = SpectralParams::new(1.0, 1.0, d, n, p_);
        let spec = analytic_spectrum(&params, 2000).unwrap();
        let w = w1_analytic_empirical(&spec, &evs, false);
        assert!(w < 0.05, "product-Wishart W1 = {w}");
    }

    #[test]
    fn empirical_atom_rank_law_tanh() {
        let (d, n, p_) = (60, 120, 600);
        let act = ActivationSpec::new(crate::Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = normal_matrix(&mut rng, n, d);
        let th = normal_matrix(&mut rng, p_, d);
        let z = build_features(x.view(), th.view(), &act).unwrap();
        let emp = empirical_spectrum(z.view(), Some(d)).unwrap();
        // rank min(N, P) = 120 → atom = 1 − 120/600.
        assert_abs_diff_eq!(emp.atom_at_zero, 0.8, epsilon = 1e-12);
        let lin = emp.linear_part.as_ref().unwrap();
        let nonlin = emp.nonlinear_part.as_ref().unwrap();
        assert_eq!(lin.len(), d);
        assert_eq!(lin.len() + nonlin.len(), emp.eigenvalues.len());
        // Split is by magnitude: min of the top-D ≥ max of the rest.
        assert!(lin[0] >= nonlin[nonlin.len() - 1]);
    }

    #[test]
    fn empirical_atom_rank_law_linear() {
        let (d, n, p_) = (50, 200, 400);
        let act = ActivationSpec::new(crate::Activation::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let x = normal_matrix(&mut rng, n, d);
        let th = normal_matrix(&mut rng, p_, d);
        let z = build_features(x.view(), th.view(), &act).unwrap();
        let emp = empirical_spectrum(z.view(), None).unwrap();
        // rank min(N, P, D) = 50 → atom = 1 − 50/400.
        assert_abs_diff_eq!(emp.atom_at_zero, 1.0 - 50.0 / 400.0, epsilon = 1e-12);
    }

    #[test]
    fn w1_of_identical_cdfs_is_zero() {
        let xs = vec![0.0, 1.0, 2.0];
        let f = vec![0.0, 0.5, 1.0];
        assert_abs_diff_eq!(wasserstein1(&xs, &f, &xs, &f), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn w1_of_shifted_step_is_shift() {
        // Point masses at 0 and at s: W1 = s.
        let xs1 = vec![0.0, 0.0];
        let f1 = vec![0.0, 1.0];
        let xs2 = vec![0.7, 0.7];
        let f2 = vec![0.0, 1.0];
        let w = wasserstein1(&xs1, &f1, &xs2, &f2);
        assert_abs_diff_eq!(w, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn analytic_matches_empirical_tanh_midrange() {
        // Desk-scale version of the headline comparison: N/D = 2.
        let (d, n, p_) = (100, 200, 1000);
        let act = ActivationSpec::new(crate::Activation::Tanh).unwrap();
        let mut evs: Vec<f64> = Vec::new();
        for s in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(90 + s);
            let x = normal_matrix(&mut rng, n, d);
            let th = normal_matrix(&mut rng, p_, d);
            let z = build_features(x.view(), th.view(), &act).unwrap();
            let emp = empirical_spectrum(z.view(), None).unwrap();
            evs.extend(emp.eigenvalues);
        }
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let params = SpectralParams::new(TANH_ETA, TANH_ZETA, d, n, p_);
        let spec = analytic_spectrum(&params, 2000).unwrap();
        let w = w1_analytic_empirical(&spec, &evs, true);
        assert!(w < 0.05, "normalized W1 = {w}");
    }
}
