//! Monte-Carlo bias-variance decomposition over a seed lattice.
//!
//! The prediction is viewed as a random function f(x; Θ_s, ε_n, X_d) of
//! three independent sources — feature initialization Θ, label noise ε and
//! training-set sampling X — evaluated on a fixed probe set and against a
//! fixed teacher. With plug-in (population) moments over the lattice the
//! law of total variance gives an *exact* decomposition
//!
//! ```text
//! E_x E_{d,s,n}(f − f*)² = bias² + var_sampling + var_init + var_noise
//! bias²        = E_x (E_{d,s,n} f − f*)²
//! var_sampling = E_x Var_d E_{s,n} f          (outermost)
//! var_init     = E_x E_d Var_s E_n f          (middle)
//! var_noise    = E_x E_{d,s} Var_n f          (innermost)
//! ```
//!
//! Conditioning order matters: interactions are attributed to the inner
//! source. Noise is innermost, matching the physical reading of the
//! interpolation-threshold peak as an initialization×noise effect captured
//! in var_noise/var_init.
//!
//! Standard errors are delete-one jackknife over the data (d) axis; the
//! deleted estimates retain exact additivity, so the total's error is
//! consistent with the terms'. The independent `direct` estimate re-samples
//! fresh (X, Θ, ε) triples from disjoint seed coordinates.

use crate::error::{Error, Result};
use crate::rfcore::{
    build_features, normal_matrix, normal_vector, sample_instance, RFProblem, RidgeFilter,
};
use crate::seeds::{SeedSchedule, Stream};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Lattice sizes and estimator options.
#[derive(Debug, Clone)]
pub struct BiasVarConfig {
    /// Number of training-set draws (outermost axis).
    pub s_data: usize,
    /// Number of feature initializations (middle axis).
    pub s_init: usize,
    /// Number of label-noise draws (innermost axis).
    pub s_noise: usize,
    /// Probe-set size for the E_x average.
    pub m_test: usize,
    /// Apply per-source Bessel corrections S/(S−1) to the variance terms.
    /// Off by default: plug-in moments keep additivity exact.
    pub bessel: bool,
    /// Fresh (X, Θ, ε) triples for the independent total-loss check
    /// (0 disables it).
    pub direct_replicates: usize,
}

impl Default for BiasVarConfig {
    fn default() -> Self {
        BiasVarConfig {
            s_data: 10,
            s_init: 10,
            s_noise: 10,
            m_test: 10_000,
            bessel: false,
            direct_replicates: 0,
        }
    }
}

/// Point estimate with a jackknife (or replicate) standard error.
#[derive(Debug, Clone, Copy)]
pub struct TermEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Full decomposition report.
#[derive(Debug, Clone)]
pub struct BiasVarianceReport {
    pub bias2: TermEstimate,
    pub var_init: TermEstimate,
    pub var_noise: TermEstimate,
    pub var_sampling: TermEstimate,
    /// Sum of the four terms (= plug-in mean of (f − f*)² over the lattice).
    pub total: TermEstimate,
    /// Independent fresh-seed MC estimate of the same total, if requested.
    pub direct: Option<TermEstimate>,
    pub lattice: (usize, usize, usize),
}

struct PairStats {
    /// E_n f per probe point (length m).
    u: Array1<f64>,
    /// E_x Var_n f (scalar).
    varn: f64,
    /// E_x E_n (f − f*)² (scalar).
    sq: f64,
}

/// Predictions for one (data, init) pair over all noise draws, reduced to
/// the sufficient statistics. The ridge factorization is shared across the
/// noise axis (labels differ only in ε).
fn pair_stats(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    d_idx: usize,
    s_idx: usize,
    beta: &Array1<f64>,
    x_test: &Array2<f64>,
    f_star: &Array1<f64>,
    cfg: &BiasVarConfig,
) -> Result<PairStats> {
    let sqrt_d = (problem.d as f64).sqrt();
    let mut rd = schedule.rng(cell, d_idx as u64, Stream::Data, 0);
    let x = normal_matrix(&mut rd, problem.n, problem.d);
    let mut ri = schedule.rng(cell, s_idx as u64, Stream::Init, 0);
    let theta = normal_matrix(&mut ri, problem.p, problem.d);
    let z = build_features(x.view(), theta.view(), &problem.activation)?;
    let filter = RidgeFilter::new(problem, z.view())?;
    let clean = x.dot(beta) / sqrt_d;
    let noise_std = problem.noise_std();
    // All noise label vectors as columns; ε depends on (d, n) only, so the
    // same labels are replayed for every s — required by the decomposition.
    let mut ys = Array2::zeros((problem.n, cfg.s_noise));
    for n_idx in 0..cfg.s_noise {
        let mut rn = schedule.rng(cell, d_idx as u64, Stream::Noise, n_idx as u64);
        let eps = normal_vector(&mut rn, problem.n);
        let mut col = ys.column_mut(n_idx);
        col.assign(&clean);
        if noise_std > 0.0 {
            col.zip_mut_with(&eps, |y, e| *y += noise_std * e);
        }
    }
    let coeffs = filter.solve_multi(z.view(), ys.view()); // P × S_noise
    let z_test = build_features(x_test.view(), theta.view(), &problem.activation)?;
    let preds = z_test.dot(&coeffs); // m × S_noise
    let sn = cfg.s_noise as f64;
    let m = preds.nrows();
    let mut u = Array1::zeros(m);
    let mut varn_acc = 0.0;
    let mut sq_acc = 0.0;
    for i in 0..m {
        let row = preds.row(i);
        let mean: f64 = row.sum() / sn;
        let mean_sq: f64 = row.iter().map(|v| v * v).sum::<f64>() / sn;
        u[i] = mean;
        varn_acc += (mean_sq - mean * mean).max(0.0);
        let fs = f_star[i];
        sq_acc += row.iter().map(|v| (v - fs) * (v - fs)).sum::<f64>() / sn;
    }
    Ok(PairStats {
        u,
        varn: varn_acc / m as f64,
        sq: sq_acc / m as f64,
    })
}

fn mean_and_population_var(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    (mean, var)
}

/// Terms computed from per-d sufficient statistics for a subset of the data
/// axis (used for both the full estimate and the jackknife deletions).
fn terms_from(
    d_sel: &[usize],
    u: &[Vec<Array1<f64>>],   // [d][s] → E_n f per x
    v_d: &[f64],              // per-d var_init contribution
    w_d: &[f64],              // per-d var_noise contribution
    sq_d: &[f64],             // per-d E_x E_{s,n}(f−f*)²
    f_star: &Array1<f64>,
    s_init: usize,
) -> [f64; 5] {
    let m = f_star.len();
    let kd = d_sel.len() as f64;
    let si = s_init as f64;
    // m_d(x) = E_{s,n} f for each selected d.
    let mut bias2 = 0.0;
    let mut var_samp = 0.0;
    for i in 0..m {
        let mut md_vals = Vec::with_capacity(d_sel.len());
        for &d in d_sel {
            let mut acc = 0.0;
            for s in 0..s_init {
                acc += u[d][s][i];
            }
            md_vals.push(acc / si);
        }
        let (mean_d, var_d) = mean_and_population_var(&md_vals);
        let delta = mean_d - f_star[i];
        bias2 += delta * delta;
        var_samp += var_d;
    }
    bias2 /= m as f64;
    var_samp /= m as f64;
    let var_init = d_sel.iter().map(|&d| v_d[d]).sum::<f64>() / kd;
    let var_noise = d_sel.iter().map(|&d| w_d[d]).sum::<f64>() / kd;
    let total = d_sel.iter().map(|&d| sq_d[d]).sum::<f64>() / kd;
    [bias2, var_init, var_noise, var_samp, total]
}

/// Run the full lattice decomposition for one problem cell.
pub fn decompose(
    problem: &RFProblem,
    cfg: &BiasVarConfig,
    schedule: &SeedSchedule,
    cell: u64,
) -> Result<BiasVarianceReport> {
    if cfg.s_data < 2 || cfg.s_init < 2 || (problem.snr.is_finite() && cfg.s_noise < 2) {
        return Err(Error::InsufficientReplicates {
            source_name: "bias-variance lattice",
            got: cfg.s_data.min(cfg.s_init).min(cfg.s_noise),
            need: 2,
        });
    }
    let sqrt_d = (problem.d as f64).sqrt();
    let mut rb = schedule.rng(cell, 0, Stream::Teacher, 0);
    let beta = normal_vector(&mut rb, problem.d);
    let mut rt = schedule.rng(cell, 0, Stream::Test, 0);
    let x_test = normal_matrix(&mut rt, cfg.m_test, problem.d);
    let f_star = x_test.dot(&beta) / sqrt_d;

    let pairs: Vec<(usize, usize)> = (0..cfg.s_data)
        .flat_map(|d| (0..cfg.s_init).map(move |s| (d, s)))
        .collect();
    let stats: Vec<Result<((usize, usize), PairStats)>> = pairs
        .into_par_iter()
        .map(|(d, s)| {
            let st = pair_stats(
                problem, schedule, cell, d, s, &beta, &x_test, &f_star, cfg,
            )?;
            Ok(((d, s), st))
        })
        .collect();
    let mut u: Vec<Vec<Array1<f64>>> =
        vec![vec![Array1::zeros(0); cfg.s_init]; cfg.s_data];
    let mut varn: Vec<Vec<f64>> = vec![vec![0.0; cfg.s_init]; cfg.s_data];
    let mut sq: Vec<Vec<f64>> = vec![vec![0.0; cfg.s_init]; cfg.s_data];
    for r in stats {
        let ((d, s), st) = r?;
        u[d][s] = st.u;
        varn[d][s] = st.varn;
        sq[d][s] = st.sq;
    }
    // Per-d reductions.
    let m = cfg.m_test;
    let si = cfg.s_init as f64;
    let mut v_d = vec![0.0; cfg.s_data]; // E_x Var_s E_n f
    let mut w_d = vec![0.0; cfg.s_data]; // E_s E_x Var_n f
    let mut sq_d = vec![0.0; cfg.s_data];
    for d in 0..cfg.s_data {
        let mut acc = 0.0;
        for i in 0..m {
            let vals: Vec<f64> = (0..cfg.s_init).map(|s| u[d][s][i]).collect();
            let (_, var_s) = mean_and_population_var(&vals);
            acc += var_s;
        }
        v_d[d] = acc / m as f64;
        w_d[d] = varn[d].iter().sum::<f64>() / si;
        sq_d[d] = sq[d].iter().sum::<f64>() / si;
    }
    let all: Vec<usize> = (0..cfg.s_data).collect();
    let full = terms_from(&all, &u, &v_d, &w_d, &sq_d, &f_star, cfg.s_init);
    // Delete-one jackknife over the data axis.
    let mut deleted: Vec<[f64; 5]> = Vec::with_capacity(cfg.s_data);
    for j in 0..cfg.s_data {
        let sel: Vec<usize> = (0..cfg.s_data).filter(|&d| d != j).collect();
        deleted.push(terms_from(&sel, &u, &v_d, &w_d, &sq_d, &f_star, cfg.s_init));
    }
    let kd = cfg.s_data as f64;
    let jack_se = |t: usize| -> f64 {
        let mean = deleted.iter().map(|r| r[t]).sum::<f64>() / kd;
        let ss = deleted
            .iter()
            .map(|r| (r[t] - mean) * (r[t] - mean))
            .sum::<f64>();
        ((kd - 1.0) / kd * ss).sqrt()
    };
    // Optional Bessel corrections (break exact additivity; reported as-is).
    let (mut bias2, mut var_init, mut var_noise, mut var_samp, total) =
        (full[0], full[1], full[2], full[3], full[4]);
    if cfg.bessel {
        let corr_n = cfg.s_noise as f64 / (cfg.s_noise as f64 - 1.0).max(1.0);
        let corr_s = cfg.s_init as f64 / (cfg.s_init as f64 - 1.0).max(1.0);
        let corr_d = kd / (kd - 1.0).max(1.0);
        var_noise *= corr_n;
        var_init *= corr_s;
        var_samp *= corr_d;
        // bias² loses the upward variance bias when corrected terms are
        // subtracted from the (unchanged) total:
        bias2 = total - var_noise - var_init - var_samp;
    }
    let direct = if cfg.direct_replicates > 0 {
        Some(direct_total(problem, cfg, schedule, cell, &beta, &x_test, &f_star)?)
    } else {
        None
    };
    Ok(BiasVarianceReport {
        bias2: TermEstimate { value: bias2, stderr: jack_se(0) },
        var_init: TermEstimate { value: var_init, stderr: jack_se(1) },
        var_noise: TermEstimate { value: var_noise, stderr: jack_se(2) },
        var_sampling: TermEstimate { value: var_samp, stderr: jack_se(3) },
        total: TermEstimate { value: total, stderr: jack_se(4) },
        direct,
        lattice: (cfg.s_data, cfg.s_init, cfg.s_noise),
    })
}

/// Independent estimate of E_{d,s,n} E_x (f − f*)² from fresh seed
/// coordinates (replicate indices beyond the lattice range), sharing only
/// the teacher and the probe set with the lattice estimate.
fn direct_total(
    problem: &RFProblem,
    cfg: &BiasVarConfig,
    schedule: &SeedSchedule,
    cell: u64,
    beta: &Array1<f64>,
    x_test: &Array2<f64>,
    f_star: &Array1<f64>,
) -> Result<TermEstimate> {
    let offset = (cfg.s_data.max(cfg.s_noise) + 1) as u64;
    let sqrt_d = (problem.d as f64).sqrt();
    let losses: Vec<Result<f64>> = (0..cfg.direct_replicates as u64)
        .into_par_iter()
        .map(|t| {
            let rep = offset + t;
            let mut rd = schedule.rng(cell, rep, Stream::Data, 0);
            let x = normal_matrix(&mut rd, problem.n, problem.d);
            let mut ri = schedule.rng(cell, rep, Stream::Init, 0);
            let theta = normal_matrix(&mut ri, problem.p, problem.d);
            let mut y = x.dot(beta) / sqrt_d;
            if problem.snr.is_finite() {
                let mut rn = schedule.rng(cell, rep, Stream::Noise, 0);
                let eps = normal_vector(&mut rn, problem.n);
                let s = problem.noise_std();
                y.zip_mut_with(&eps, |yi, ei| *yi += s * ei);
            }
            let z = build_features(x.view(), theta.view(), &problem.activation)?;
            let filter = RidgeFilter::new(problem, z.view())?;
            let a = filter.solve(z.view(), y.view());
            let z_test = build_features(x_test.view(), theta.view(), &problem.activation)?;
            let pred = z_test.dot(&a);
            Ok((&pred - f_star).mapv(|v| v * v).mean().unwrap_or(0.0))
        })
        .collect();
    let mut vals = Vec::with_capacity(cfg.direct_replicates);
    for l in losses {
        vals.push(l?);
    }
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(TermEstimate {
        value: mean,
        stderr: (var / k).sqrt(),
    })
}

/// K-member ensemble at one (cell, replicate): members share data, teacher
/// and noise but draw independent feature matrices (member = 0..K); the
/// predictor is the member average. Returns the closed-form
/// Gaussian-equivalence loss of the ensemble and a Monte-Carlo check.
pub struct EnsembleMetrics {
    pub loss_ge: f64,
    pub loss_mc: f64,
    pub loss_mc_stderr: f64,
}

pub fn ensembled_replicate(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicate: u64,
    k: usize,
    m_test: usize,
) -> Result<EnsembleMetrics> {
    let kf = k as f64;
    let sqrt_d = (problem.d as f64).sqrt();
    let mut b_bar: Array1<f64> = Array1::zeros(problem.d);
    let mut sum_norm_a2 = 0.0;
    let mut mean_sum_a = 0.0;
    let mut rtest = schedule.rng(cell, replicate, Stream::Test, 0);
    let x_test = normal_matrix(&mut rtest, m_test.max(1), problem.d);
    let mut f_bar: Array1<f64> = Array1::zeros(x_test.nrows());
    let mut beta_keep: Option<Array1<f64>> = None;
    for member in 0..k as u64 {
        let inst = sample_instance(problem, schedule, cell, replicate, member);
        let z = build_features(inst.x.view(), inst.theta.view(), &problem.activation)?;
        let filter = RidgeFilter::new(problem, z.view())?;
        let a = filter.solve(z.view(), inst.y.view());
        b_bar = b_bar + inst.theta.t().dot(&a) / kf;
        sum_norm_a2 += a.dot(&a);
        mean_sum_a += a.sum() / kf;
        let z_test = build_features(x_test.view(), inst.theta.view(), &problem.activation)?;
        f_bar = f_bar + z_test.dot(&a) / kf;
        beta_keep = Some(inst.beta);
    }
    let beta = beta_keep.expect("k >= 1");
    let d = problem.d as f64;
    let (eta, zeta, mu0) = (
        problem.activation.eta,
        problem.activation.zeta,
        problem.activation.mu0,
    );
    let rho = beta.dot(&beta) / d;
    // Linear parts of the members add coherently into b̄ and the constant
    // offsets average; the member-independent perpendicular fluctuations
    // add in quadrature, so their term carries weight 1/K².
    let perp_var = (eta - zeta - mu0 * mu0).max(0.0);
    let offset = mu0 * mean_sum_a;
    let loss_ge = rho + zeta / d * b_bar.dot(&b_bar) - 2.0 * zeta.sqrt() / d * b_bar.dot(&beta)
        + perp_var * sum_norm_a2 / (kf * kf)
        + offset * offset;
    let f_star = x_test.dot(&beta) / sqrt_d;
    let sqerr = (&f_bar - &f_star).mapv(|v| v * v);
    let mc = sqerr.mean().unwrap_or(0.0);
    let var = sqerr.mapv(|v| (v - mc) * (v - mc)).sum() / (x_test.nrows().max(2) - 1) as f64;
    Ok(EnsembleMetrics {
        loss_ge,
        loss_mc: mc,
        loss_mc_stderr: (var / x_test.nrows() as f64).sqrt(),
    })
}

/// Mean ensemble losses (GE and MC) over replicates at fixed N.
pub fn ensembled_point(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicates: usize,
    k: usize,
    m_test: usize,
) -> Result<(TermEstimate, TermEstimate)> {
    let metrics: Vec<Result<EnsembleMetrics>> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| ensembled_replicate(problem, schedule, cell, rep, k, m_test))
        .collect();
    let mut ge = Vec::with_capacity(replicates);
    let mut mc = Vec::with_capacity(replicates);
    for m in metrics {
        let m = m?;
        ge.push(m.loss_ge);
        mc.push(m.loss_mc);
    }
    let agg = |vals: &[f64]| -> TermEstimate {
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0).max(1.0);
        TermEstimate {
            value: mean,
            stderr: (var / k).sqrt(),
        }
    };
    Ok((agg(&ge), agg(&mc)))
}
