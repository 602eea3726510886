//! Random-feature regression: instances, the ridge solver, and losses.
//!
//! A random-feature model fits targets with f(x) = Σᵢ aᵢ σ(⟨θᵢ, x⟩/√D).
//! The second layer a is obtained by ridge regression
//!
//! ```text
//! â = argmin_a (1/N)‖y − Z a‖² + (Pγ/D)‖a‖²,   Z_{μi} = σ(⟨θᵢ, x_μ⟩/√D)
//! ```
//!
//! solved exactly through an eigendecomposition of the smaller Gram matrix
//! (ZᵀZ for N ≥ P, ZZᵀ otherwise) with spectral filtering — direct
//! factorisation of the normal equations is unstable near the interpolation
//! threshold where Σ = ZᵀZ/N develops near-zero eigenvalues. γ = 0 falls
//! back to the minimum-norm pseudo-inverse with singular-value cutoff
//! max(N, P)·ε_machine·s_max.

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::seeds::{SeedSchedule, Stream};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Draw a rows×cols matrix of iid N(0,1) entries (row-major fill order).
pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
}

/// Draw a length-n vector of iid N(0,1) entries.
pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Problem dimensions and hyperparameters for one random-feature cell.
#[derive(Debug, Clone)]
pub struct RFProblem {
    /// Input dimension D.
    pub d: usize,
    /// Number of training samples N.
    pub n: usize,
    /// Number of random features P.
    pub p: usize,
    /// Activation with cached Gaussian moments.
    pub activation: ActivationSpec,
    /// Signal-to-noise ratio; label noise variance is 1/SNR against the
    /// unit-variance linear teacher. `f64::INFINITY` means exactly no noise.
    pub snr: f64,
    /// Ridge parameter γ ≥ 0 entering the penalty (Pγ/D)‖a‖².
    pub gamma: f64,
}

impl RFProblem {
    /// Ridge eigenvalue shift: the filter denominator is s² + N·(Pγ/D).
    pub fn lambda(&self) -> f64 {
        self.p as f64 * self.gamma / self.d as f64
    }

    /// Noise standard deviation (0 for SNR = ∞).
    pub fn noise_std(&self) -> f64 {
        if self.snr.is_finite() {
            (1.0 / self.snr).sqrt()
        } else {
            0.0
        }
    }
}

/// One sampled instance: data, features directions, teacher, labels.
#[derive(Debug, Clone)]
pub struct RFInstance {
    /// Training inputs, N×D.
    pub x: Array2<f64>,
    /// Feature directions, P×D.
    pub theta: Array2<f64>,
    /// Teacher vector, length D; the target is f*(x) = ⟨β, x⟩/√D.
    pub beta: Array1<f64>,
    /// Labels y = f*(x) + ε.
    pub y: Array1<f64>,
}

/// Sample an instance from the deterministic seed schedule.
///
/// `member` selects the feature draw within a replicate (ensembles use
/// member = 0..K; plain runs use member = 0, so a K = 1 ensemble replays a
/// plain run exactly). Data, teacher, and noise always use member 0.
pub fn sample_instance(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicate: u64,
    member: u64,
) -> RFInstance {
    let mut rx = schedule.rng(cell, replicate, Stream::Data, 0);
    let x = normal_matrix(&mut rx, problem.n, problem.d);
    let mut rt = schedule.rng(cell, replicate, Stream::Init, member);
    let theta = normal_matrix(&mut rt, problem.p, problem.d);
    let mut rb = schedule.rng(cell, replicate, Stream::Teacher, 0);
    let beta = normal_vector(&mut rb, problem.d);
    let sqrt_d = (problem.d as f64).sqrt();
    let mut y = x.dot(&beta) / sqrt_d;
    if problem.snr.is_finite() {
        let mut rn = schedule.rng(cell, replicate, Stream::Noise, 0);
        let eps = normal_vector(&mut rn, problem.n);
        let s = problem.noise_std();
        y.zip_mut_with(&eps, |yi, ei| *yi += s * ei);
    }
    RFInstance { x, theta, beta, y }
}

/// Feature matrix Z_{μi} = σ(⟨θᵢ, x_μ⟩/√D), shape N×P.
pub fn build_features(
    x: ArrayView2<f64>,
    theta: ArrayView2<f64>,
    activation: &ActivationSpec,
) -> Result<Array2<f64>> {
    let d = x.ncols();
    let mut z = x.dot(&theta.t());
    z.mapv_inplace(|v| v / (d as f64).sqrt());
    z.mapv_inplace(|v| activation.kind.apply(v));
    if let Some(((row, col), _)) = z.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::FeatureEvaluation { row, col });
    }
    Ok(z)
}

/// Reusable spectral factorisation of the ridge problem for one feature
/// matrix. Solving for many right-hand sides (noise replicates, ensembles)
/// amortises the eigendecomposition.
pub struct RidgeFilter {
    /// Eigenvectors of the factorised Gram matrix.
    basis: Array2<f64>,
    /// Filter diagonal applied in the eigenbasis.
    filt: Array1<f64>,
    /// Whether the N-side (ZZᵀ) or P-side (ZᵀZ) Gram was factorised.
    n_side: bool,
}

impl RidgeFilter {
    /// Factorise the smaller Gram matrix of Z for the given problem.
    pub fn new(problem: &RFProblem, z: ArrayView2<f64>) -> Result<Self> {
        let (n, p) = (z.nrows(), z.ncols());
        let n_side = n < p;
        let gram = if n_side {
            z.dot(&z.t())
        } else {
            z.t().dot(&z)
        };
        let (vals, vecs) = gram.eigh(UPLO::Lower)?;
        let s2 = vals.mapv(|v| v.max(0.0));
        let n_lam = n as f64 * problem.lambda();
        let filt = if problem.gamma > 0.0 {
            s2.mapv(|v| 1.0 / (v + n_lam))
        } else {
            // Minimum-norm pseudo-inverse: cutoff relative to s_max.
            let s_max = s2.iter().cloned().fold(0.0_f64, f64::max).sqrt();
            let cut = n.max(p) as f64 * f64::EPSILON * s_max;
            s2.mapv(|v| if v.sqrt() > cut { 1.0 / v } else { 0.0 })
        };
        Ok(RidgeFilter {
            basis: vecs,
            filt,
            n_side,
        })
    }

    /// Solve for one label vector.
    pub fn solve(&self, z: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        if self.n_side {
            // a = Zᵀ U diag(filt) Uᵀ y
            let u_ty = self.basis.t().dot(&y);
            z.t().dot(&self.basis.dot(&(&u_ty * &self.filt)))
        } else {
            // a = V diag(filt) Vᵀ Zᵀ y
            let zty = z.t().dot(&y);
            let v_tz = self.basis.t().dot(&zty);
            self.basis.dot(&(&v_tz * &self.filt))
        }
    }

    /// Solve for many label vectors at once (columns of `ys`, shape N×R).
    pub fn solve_multi(&self, z: ArrayView2<f64>, ys: ArrayView2<f64>) -> Array2<f64> {
        if self.n_side {
            let mut u_ty = self.basis.t().dot(&ys);
            for (mut row, f) in u_ty.axis_iter_mut(Axis(0)).zip(self.filt.iter()) {
                row.mapv_inplace(|v| v * f);
            }
            z.t().dot(&self.basis.dot(&u_ty))
        } else {
            let zty = z.t().dot(&ys);
            let mut v_tz = self.basis.t().dot(&zty);
            for (mut row, f) in v_tz.axis_iter_mut(Axis(0)).zip(self.filt.iter()) {
                row.mapv_inplace(|v| v * f);
            }
            self.basis.dot(&v_tz)
        }
    }
}

/// Second-layer weights plus the diagnostics recorded for every solve.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub a: Array1<f64>,
    /// ‖a‖.
    pub norm_a: f64,
    /// ‖Θᵀa‖ — the norm of the linearised network b = Θᵀa.
    pub norm_b: f64,
    /// Teacher overlap b·β/D.
    pub overlap: f64,
    /// Training mean-square error (1/N)‖y − Za‖².
    pub train_loss: f64,
}

/// Solve the ridge problem for one instance.
pub fn ridge_solve(
    problem: &RFProblem,
    instance: &RFInstance,
    z: ArrayView2<f64>,
) -> Result<RidgeSolution> {
    if instance.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "labels y" });
    }
    let filter = RidgeFilter::new(problem, z)?;
    let a = filter.solve(z, instance.y.view());
    Ok(diagnose(problem, instance, z, a))
}

fn diagnose(
    problem: &RFProblem,
    instance: &RFInstance,
    z: ArrayView2<f64>,
    a: Array1<f64>,
) -> RidgeSolution {
    let resid = &z.dot(&a) - &instance.y;
    let train_loss = resid.mapv(|v| v * v).mean().unwrap_or(0.0);
    let b = instance.theta.t().dot(&a);
    let norm_a = a.mapv(|v| v * v).sum().sqrt();
    let norm_b = b.mapv(|v| v * v).sum().sqrt();
    let overlap = b.dot(&instance.beta) / problem.d as f64;
    RidgeSolution {
        a,
        norm_a,
        norm_b,
        overlap,
        train_loss,
    }
}

/// Monte-Carlo test loss against the noiseless target f*(x) = ⟨β, x⟩/√D on
/// fresh Gaussian inputs. Returns (estimate, standard error).
pub fn test_loss_mc(
    problem: &RFProblem,
    instance: &RFInstance,
    a: ArrayView1<f64>,
    m_test: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let m = m_test.max(1);
    let xt = normal_matrix(rng, m, problem.d);
    let zt = build_features(xt.view(), instance.theta.view(), &problem.activation)?;
    let fhat = zt.dot(&a);
    let fstar = xt.dot(&instance.beta) / (problem.d as f64).sqrt();
    let sq = (&fhat - &fstar).mapv(|v| v * v);
    let mean = sq.mean().unwrap_or(0.0);
    let var = sq.mapv(|v| (v - mean) * (v - mean)).sum() / (m.max(2) - 1) as f64;
    Ok((mean, (var / m as f64).sqrt()))
}

/// The Gaussian-equivalence test loss L_g = ρ + Q − 2M and its pieces.
#[derive(Debug, Clone, Copy)]
pub struct GaussianEquivalentLoss {
    pub loss: f64,
    /// ρ = ‖β‖²/D.
    pub rho: f64,
    /// M = (√ζ/D)·(b·β) with b = Θᵀa.
    pub m: f64,
    /// Q = (ζ/D)‖b‖² + (η−ζ−μ₀²)‖a‖² + (μ₀ Σᵢaᵢ)².
    pub q: f64,
}

/// Closed-form Gaussian expectation of the squared error of the
/// Gaussian-equivalent network. Substituting σ(Θx/√D) → μ₀·1 + √ζ·Θx/√D +
/// √(η−ζ−μ₀²)·w with w ~ N(0, I_P) and averaging over x and w gives
///
///   L_g = ρ + ζ/D·‖b‖² − 2·(√ζ/D)·b·β + (η−ζ−μ₀²)·‖a‖² + (μ₀ Σᵢaᵢ)²,
///
/// with b = Θᵀa. Exact for σ = identity; asymptotically exact in the
/// Gaussian-equivalence regime otherwise (the readout here carries no 1/√P
/// scaling, so the ‖a‖² term is unnormalised).
pub fn gaussian_equivalent_loss(
    problem: &RFProblem,
    instance: &RFInstance,
    a: ArrayView1<f64>,
) -> GaussianEquivalentLoss {
    let d = problem.d as f64;
    let eta = problem.activation.eta;
    let zeta = problem.activation.zeta;
    let mu0 = problem.activation.mu0;
    let b = instance.theta.t().dot(&a);
    let rho = instance.beta.dot(&instance.beta) / d;
    let m = zeta.sqrt() / d * b.dot(&instance.beta);
    let perp_var = (eta - zeta - mu0 * mu0).max(0.0);
    let offset = mu0 * a.sum();
    let q = zeta / d * b.dot(&b) + perp_var * a.dot(&a) + offset * offset;
    GaussianEquivalentLoss {
        loss: rho + q - 2.0 * m,
        rho,
        m,
        q,
    }
}

/// Per-replicate scalars recorded along a sample-wise profile.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateMetrics {
    pub loss_ge: f64,
    pub loss_mc: f64,
    pub loss_mc_stderr: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub overlap: f64,
    pub train_loss: f64,
}

/// Mean/stderr aggregate of one scalar over replicates.
#[derive(Debug, Clone, Copy)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let k = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Aggregate {
        mean,
        stderr: (var / k).sqrt(),
    }
}

/// One grid point of a sample-wise profile.
#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub n: usize,
    pub cell: u64,
    pub loss_ge: Aggregate,
    pub loss_mc: Aggregate,
    pub norm_a: Aggregate,
    pub norm_b: Aggregate,
    pub overlap: Aggregate,
    pub train_loss: Aggregate,
    pub replicates: Vec<ReplicateMetrics>,
}

/// Compute all metrics for one (cell, replicate) of a profile sweep.
pub fn replicate_metrics(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicate: u64,
    m_test: usize,
) -> Result<ReplicateMetrics> {
    let instance = sample_instance(problem, schedule, cell, replicate, 0);
    let z = build_features(instance.x.view(), instance.theta.view(), &problem.activation)?;
    let sol = ridge_solve(problem, &instance, z.view())?;
    let ge = gaussian_equivalent_loss(problem, &instance, sol.a.view());
    let (mc, mc_se) = if m_test > 0 {
        let mut rt = schedule.rng(cell, replicate, Stream::Test, 0);
        test_loss_mc(problem, &instance, sol.a.view(), m_test, &mut rt)?
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ReplicateMetrics {
        loss_ge: ge.loss,
        loss_mc: mc,
        loss_mc_stderr: mc_se,
        norm_a: sol.norm_a,
        norm_b: sol.norm_b,
        overlap: sol.overlap,
        train_loss: sol.train_loss,
    })
}

/// Sample-wise profile: metrics per N over a grid, averaged over replicates.
///
/// `m_test = 0` skips the Monte-Carlo loss (the Gaussian-equivalence loss is
/// always computed; it is deterministic given seeds and much cheaper).
/// Cells × replicates run in parallel; the seed schedule keeps results
/// independent of worker count and execution order.
pub fn sample_profile(
    template: &RFProblem,
    n_grid: &[usize],
    replicates: usize,
    m_test: usize,
    schedule: &SeedSchedule,
) -> Result<Vec<ProfilePoint>> {
    let jobs: Vec<(usize, usize)> = (0..n_grid.len())
        .flat_map(|ci| (0..replicates).map(move |rep| (ci, rep)))
        .collect();
    let metrics: Vec<Result<(usize, usize, ReplicateMetrics)>> = jobs
        .into_par_iter()
        .map(|(ci, rep)| {
            let problem = RFProblem {
                n: n_grid[ci],
                ..template.clone()
            };
            let m = replicate_metrics(&problem, schedule, ci as u64, rep as u64, m_test)?;
            Ok((ci, rep, m))
        })
        .collect();
    let mut per_cell: Vec<Vec<Option<ReplicateMetrics>>> =
        vec![vec![None; replicates]; n_grid.len()];
    for r in metrics {
        let (ci, rep, m) = r?;
        per_cell[ci][rep] = Some(m);
    }
    let points = per_cell
        .into_iter()
        .enumerate()
        .map(|(ci, reps)| {
            let reps: Vec<ReplicateMetrics> = reps.into_iter().map(|m| m.unwrap()).collect();
            let col = |f: fn(&ReplicateMetrics) -> f64| -> Vec<f64> {
                reps.iter().map(f).collect()
            };
            ProfilePoint {
                n: n_grid[ci],
                cell: ci as u64,
                loss_ge: aggregate(&col(|m| m.loss_ge)),
                loss_mc: aggregate(&col(|m| m.loss_mc)),
                norm_a: aggregate(&col(|m| m.norm_a)),
                norm_b: aggregate(&col(|m| m.norm_b)),
                overlap: aggregate(&col(|m| m.overlap)),
                train_loss: aggregate(&col(|m| m.train_loss)),
                replicates: reps,
            }
        })
        .collect();
    Ok(points)
}

/// Standard 25-point sample-wise grid: N/D from 10^-0.6 to 10^1.8 in 0.1 dex
/// steps, which contains N = D and N = 10·D (= P at P/D = 10) exactly.
pub fn default_n_grid(d: usize) -> Vec<usize> {
    (0..25)
        .map(|k| {
            let nd = 10f64.powf(-0.6 + 0.1 * k as f64);
            (d as f64 * nd).round().max(1.0) as usize
        })
        .collect()
}
