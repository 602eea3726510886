//! Activation functions and their Gaussian moments.
//!
//! The two moments that control random-feature behaviour are
//! η = E[σ(z)²] and ζ = (E[σ′(z)])² for z ~ N(0, 1); their ratio
//! r = ζ/η ∈ [0, 1] is the degree of linearity. Built-in kinds carry closed
//! forms; everything else is integrated numerically against the Gaussian
//! weight. The piecewise-linear family σ_α interpolates between a pure
//! linear map (α = −1, r = 1) and a shifted absolute value (α = 1, r = 0)
//! at unit second moment.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Inverse of sqrt(2π), the Gaussian density normalizer.
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Half-width of the truncated integration domain. The N(0,1) tail mass
/// beyond |z| = 12 is ~1e-32, far below every tolerance used here.
const QUAD_CUTOFF: f64 = 12.0;

/// Default quadrature order (nodes per half-axis).
pub const DEFAULT_QUAD_ORDER: usize = 200;

/// Closed-form degree of linearity of the piecewise-linear family.
pub fn r_alpha(alpha: f64) -> f64 {
    (1.0 - alpha).powi(2) / (2.0 * (1.0 + alpha * alpha) - (2.0 / PI) * (1.0 + alpha).powi(2))
}

fn pwl_denom(alpha: f64) -> f64 {
    0.5 * (1.0 + alpha * alpha) - (1.0 + alpha).powi(2) / (2.0 * PI)
}

/// An activation function kind.
#[derive(Clone)]
pub enum Activation {
    Linear,
    Relu,
    Abs,
    Tanh,
    /// σ_α(x) = ([x]₊ + α[−x]₊ − (1+α)/√(2π)) / norm, centered and normalized
    /// to unit second Gaussian moment.
    PiecewiseLinear { alpha: f64 },
    /// User-supplied evaluator; moments are computed by quadrature with
    /// ζ obtained from E[σ′(z)] = E[z·σ(z)] (no derivative required).
    Custom {
        name: String,
        evaluator: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear => write!(f, "Linear"),
            Activation::Relu => write!(f, "Relu"),
            Activation::Abs => write!(f, "Abs"),
            Activation::Tanh => write!(f, "Tanh"),
            Activation::PiecewiseLinear { alpha } => write!(f, "PiecewiseLinear({alpha})"),
            Activation::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl Activation {
    /// Pointwise evaluation.
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Abs => x.abs(),
            Activation::Tanh => x.tanh(),
            Activation::PiecewiseLinear { alpha } => {
                let norm = pwl_denom(*alpha).sqrt();
                (x.max(0.0) + alpha * (-x).max(0.0) - (1.0 + alpha) * INV_SQRT_2PI) / norm
            }
            Activation::Custom { evaluator, .. } => evaluator(x),
        }
    }

    /// Pointwise derivative. At kinks the mean of the one-sided limits is
    /// used; this never affects Gaussian moments (measure zero) but makes
    /// pointwise evaluation reproducible.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Activation::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::PiecewiseLinear { alpha } => {
                // slope of [x]₊ + α[−x]₊: 1 for x > 0, −α for x < 0.
                let norm = pwl_denom(*alpha).sqrt();
                let s = if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -*alpha
                } else {
                    0.5 * (1.0 - *alpha)
                };
                s / norm
            }
            Activation::Custom { .. } => {
                // Central difference; Custom moments never call this.
                let h = 1e-6;
                (self.apply(x + h) - self.apply(x - h)) / (2.0 * h)
            }
        }
    }

    /// Name used in CSV output and CLI tokens.
    pub fn token(&self) -> String {
        match self {
            Activation::Linear => "linear".into(),
            Activation::Relu => "relu".into(),
            Activation::Abs => "abs".into(),
            Activation::Tanh => "tanh".into(),
            Activation::PiecewiseLinear { alpha } => format!("pwl:{alpha}"),
            Activation::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    /// Parse a CLI/config token: `linear`, `relu`, `abs`, `tanh`, `pwl:<alpha>`.
    pub fn from_token(tok: &str) -> Result<Activation> {
        let t = tok.trim().to_ascii_lowercase();
        match t.as_str() {
            "linear" | "identity" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "abs" => Ok(Activation::Abs),
            "tanh" => Ok(Activation::Tanh),
            _ => {
                if let Some(rest) = t.strip_prefix("pwl:") {
                    let alpha: f64 = rest
                        .parse()
                        .map_err(|_| Error::Config(format!("bad pwl alpha: {rest}")))?;
                    if !(-1.0..=1.0).contains(&alpha) {
                        return Err(Error::Config(format!(
                            "pwl alpha {alpha} outside [-1, 1]"
                        )));
                    }
                    Ok(Activation::PiecewiseLinear { alpha })
                } else {
                    Err(Error::Config(format!("unknown activation: {tok}")))
                }
            }
        }
    }
}

/// An activation with its cached Gaussian moments.
#[derive(Debug, Clone)]
pub struct ActivationSpec {
    pub kind: Activation,
    /// η = E[σ(z)²].
    pub eta: f64,
    /// ζ = (E[σ′(z)])².
    pub zeta: f64,
    /// Degree of linearity r = ζ/η.
    pub r: f64,
    /// μ₀ = E[σ(z)] — the Gaussian mean, needed wherever the constant
    /// Hermite mode must be split off the "purely nonlinear" part (e.g. the
    /// closed-form test loss). Zero for odd activations.
    pub mu0: f64,
}

impl ActivationSpec {
    /// Build a spec, computing moments once. Closed forms are used for the
    /// kinds that have them; Tanh and Custom go through quadrature.
    pub fn new(kind: Activation) -> Result<Self> {
        let (eta, zeta, mu0) = match &kind {
            Activation::Linear => (1.0, 1.0, 0.0),
            Activation::Relu => (0.5, 0.25, INV_SQRT_2PI),
            Activation::Abs => (1.0, 0.0, 2.0 * INV_SQRT_2PI),
            // The σ_α family is centred and variance-normalised in apply(),
            // so its Gaussian mean vanishes by construction.
            Activation::PiecewiseLinear { alpha } => (1.0, r_alpha(*alpha), 0.0),
            Activation::Tanh | Activation::Custom { .. } => {
                let (eta, zeta) = gaussian_moments(&kind, DEFAULT_QUAD_ORDER)?;
                (eta, zeta, gaussian_mean(&kind, DEFAULT_QUAD_ORDER)?)
            }
        };
        if eta < 1e-12 {
            return Err(Error::DegenerateActivation { eta });
        }
        Ok(ActivationSpec {
            kind,
            eta,
            zeta,
            r: zeta / eta,
            mu0,
        })
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        ActivationSpec::new(Activation::from_token(tok)?)
    }

    /// Convenience constructor for the piecewise-linear family.
    pub fn piecewise_linear(alpha: f64) -> Result<Self> {
        ActivationSpec::new(Activation::PiecewiseLinear { alpha })
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence (machine precision for the orders used here).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Tricomi initial guess for the k-th positive-side root.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// Integrate f against the N(0,1) density, splitting the domain at zero so
/// kinked integrands keep full quadrature accuracy.
fn gauss_expect(f: impl Fn(f64) -> f64, order: usize) -> Result<f64> {
    let (xs, ws) = gauss_legendre(order);
    let mut total = 0.0;
    for (a, b) in [(-QUAD_CUTOFF, 0.0), (0.0, QUAD_CUTOFF)] {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, w) in xs.iter().zip(&ws) {
            let z = mid + half * x;
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::MomentEvaluation { z });
            }
            total += half * w * v * (-0.5 * z * z).exp() * INV_SQRT_2PI;
        }
    }
    Ok(total)
}

/// Gaussian moments (η, ζ) of an activation kind by quadrature.
///
/// η = E[σ²]. For kinds with a known derivative, ζ = (E[σ′])²; for Custom,
/// ζ = (E[z·σ(z)])², which equals (E[σ′])² by Stein's lemma and avoids
/// differentiating the user evaluator.
pub fn gaussian_moments(kind: &Activation, order: usize) -> Result<(f64, f64)> {
    let order = order.max(32);
    let eta = gauss_expect(|z| kind.apply(z).powi(2), order)?;
    if eta < 1e-12 {
        return Err(Error::DegenerateActivation { eta });
    }
    let mean_slope = match kind {
        Activation::Custom { .. } => gauss_expect(|z| z * kind.apply(z), order)?,
        _ => gauss_expect(|z| kind.derivative(z), order)?,
    };
    Ok((eta, mean_slope * mean_slope))
}

/// Gaussian mean E[σ(z)] by quadrature (used by the centering tests).
pub fn gaussian_mean(kind: &Activation, order: usize) -> Result<f64> {
    gauss_expect(|z| kind.apply(z), order.max(32))
}
