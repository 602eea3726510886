//! Peak detection on sample-wise loss profiles.
//!
//! Profiles are analysed in log space (x = log₁₀N, y = log₁₀ loss) so
//! multiplicative structure becomes additive: a candidate is an interior
//! local maximum, its prominence is measured by the standard walk to the
//! nearest higher terrain on each side, and it is kept only when the
//! prominence clears both a statistical gate (2× the standard error of the
//! mean, propagated to log space) and an absolute floor of 0.05 dex.
//! Surviving peaks are classified by which landmark they sit on: N = D
//! (the interpolation threshold of the linearised problem) or N = P (the
//! parameter count).

use crate::{Error, Result};

/// Which landmark a detected peak belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakKind {
    /// Within 0.25 dex of N = D and closer to it than to N = P.
    Linear,
    /// Within 0.25 dex of N = P and closer to it than to N = D.
    Nonlinear,
    /// A real peak, but not on either landmark.
    Other,
}

impl std::fmt::Display for PeakKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PeakKind::Linear => write!(f, "linear"),
            PeakKind::Nonlinear => write!(f, "nonlinear"),
            PeakKind::Other => write!(f, "other"),
        }
    }
}

/// One detected peak.
#[derive(Debug, Clone)]
pub struct Peak {
    /// Sample count at the peak's grid point.
    pub n: usize,
    pub kind: PeakKind,
    /// log₁₀ of the metric at the peak.
    pub log10_height: f64,
    /// Topographic prominence, in dex.
    pub prominence_dex: f64,
    /// Width at half prominence, in dex.
    pub width_dex: f64,
}

/// Minimum prominence in dex regardless of how small the error bars are.
pub const PROMINENCE_FLOOR_DEX: f64 = 0.05;
/// A landmark match requires the peak within this many dex of it.
pub const LANDMARK_TOLERANCE_DEX: f64 = 0.25;
/// The detector needs at least this many profile points.
pub const MIN_POINTS: usize = 7;

/// Classify a sample count against the two landmarks.
pub fn classify(n: usize, d: usize, p: usize) -> PeakKind {
    let dd = (n as f64 / d as f64).log10().abs();
    let dp = (n as f64 / p as f64).log10().abs();
    if dd < dp && dd <= LANDMARK_TOLERANCE_DEX {
        PeakKind::Linear
    } else if dp < dd && dp <= LANDMARK_TOLERANCE_DEX {
        PeakKind::Nonlinear
    } else {
        PeakKind::Other
    }
}

/// Detect peaks on a (N, mean, stderr) profile of a positive metric.
///
/// Points may arrive in any order; they are sorted by N. The grid must have
/// at least [`MIN_POINTS`] points and bracket both landmarks, otherwise the
/// profile cannot support the claim that a landmark peak is absent and an
/// `InsufficientGrid` error is returned.
pub fn detect_peaks(points: &[(usize, f64, f64)], d: usize, p: usize) -> Result<Vec<Peak>> {
    let mut pts: Vec<(usize, f64, f64)> = points.to_vec();
    pts.sort_by_key(|r| r.0);
    pts.dedup_by_key(|r| r.0);
    if pts.len() < MIN_POINTS {
        return Err(Error::InsufficientGrid(format!(
            "peak detection needs at least {MIN_POINTS} profile points, got {}",
            pts.len()
        )));
    }
    let n_min = pts.first().unwrap().0;
    let n_max = pts.last().unwrap().0;
    for (name, landmark) in [("N=D", d), ("N=P", p)] {
        if landmark < n_min || landmark > n_max {
            return Err(Error::InsufficientGrid(format!(
                "profile spans N ∈ [{n_min}, {n_max}] which does not bracket {name} ({landmark})"
            )));
        }
    }
    for &(n, mean, _) in &pts {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Config(format!(
                "peak detection needs a positive finite metric; got {mean} at N = {n}"
            )));
        }
    }

    let x: Vec<f64> = pts.iter().map(|r| (r.0 as f64).log10()).collect();
    let y: Vec<f64> = pts.iter().map(|r| r.1.log10()).collect();
    // δ(log₁₀ m) = δm / (m ln 10).
    let se: Vec<f64> = pts
        .iter()
        .map(|r| r.2 / (r.1 * std::f64::consts::LN_10))
        .collect();

    let mut peaks = Vec::new();
    for i in 1..y.len() - 1 {
        // Strict rise on the left, non-strict on the right: a flat-topped
        // plateau yields exactly one candidate at its left edge.
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let (prom, lbase, rbase) = prominence(&y, i);
        if prom <= (2.0 * se[i]).max(PROMINENCE_FLOOR_DEX) {
            continue;
        }
        let width = width_at_half_prominence(&x, &y, i, prom, lbase, rbase);
        peaks.push(Peak {
            n: pts[i].0,
            kind: classify(pts[i].0, d, p),
            log10_height: y[i],
            prominence_dex: prom,
            width_dex: width,
        });
    }
    Ok(peaks)
}

/// Topographic prominence of `y[i]`: walk outward on each side until
/// strictly higher terrain (or the boundary), take the minimum seen on each
/// walk, and subtract the higher of the two minima. Returns the prominence
/// and the index of the base minimum on each side.
fn prominence(y: &[f64], i: usize) -> (f64, usize, usize) {
    let mut left_min = y[i];
    let mut lbase = i;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if y[j] > y[i] {
            break;
        }
        if y[j] < left_min {
            left_min = y[j];
            lbase = j;
        }
    }
    let mut right_min = y[i];
    let mut rbase = i;
    let mut j = i;
    while j + 1 < y.len() {
        j += 1;
        if y[j] > y[i] {
            break;
        }
        if y[j] < right_min {
            right_min = y[j];
            rbase = j;
        }
    }
    (y[i] - left_min.max(right_min), lbase, rbase)
}

/// Width of the peak at the reference height y[i] − prom/2, interpolated on
/// the log₁₀N axis and clipped to the prominence bases.
fn width_at_half_prominence(
    x: &[f64],
    y: &[f64],
    i: usize,
    prom: f64,
    lbase: usize,
    rbase: usize,
) -> f64 {
    let href = y[i] - 0.5 * prom;
    // Left crossing.
    let mut xl = x[lbase];
    for j in (lbase..i).rev() {
        if y[j] < href {
            let t = (href - y[j]) / (y[j + 1] - y[j]);
            xl = x[j] + t * (x[j + 1] - x[j]);
            break;
        }
    }
    // Right crossing.
    let mut xr = x[rbase];
    for j in i + 1..=rbase {
        if y[j] < href {
            let t = (href - y[j - 1]) / (y[j] - y[j - 1]);
            xr = x[j - 1] + t * (x[j] - x[j - 1]);
            break;
        }
    }
    xr - xl
}
