//! Acceptance gate: twelve criteria, one `#[test]` per criterion.
//!
//! Each test prints exactly one line
//!
//!   `ACCEPTANCE c<nn> <name>: PASS — <measured numbers>`
//!
//! (run with `--nocapture` to see the PASS lines; FAIL lines surface
//! automatically in the captured output of a failing test). Tolerances are
//! pinned here, in one place, next to the assertion they gate.
//!
//! The full gate is compute-heavy (roughly 30–60 minutes on one core,
//! dominated by criteria 6, 8, 9, and 11); every other criterion finishes
//! in seconds to a few minutes.

use ndarray::Array1;
use rflab::config::{logspace_dex, Model, NnConfig, SweepConfig};
use rflab::csvio::{profile_from_rows, read_rows, Row};
use rflab::peaks::{detect_peaks, Peak, PeakKind};
use rflab::sweep::run_sweep;
use rflab_core::activation::{
    gaussian_moments, r_alpha, Activation, ActivationSpec, DEFAULT_QUAD_ORDER,
};
use rflab_core::biasvar::{decompose, ensembled_replicate, BiasVarConfig};
use rflab_core::nnsim::{gradient_check, Mlp};
use rflab_core::rfcore::{build_features, normal_matrix, normal_vector, sample_instance, RFProblem};
use rflab_core::spectral::{
    analytic_spectrum, density, empirical_spectrum, find_left_edge, gap_curve, mp_density,
    mp_edges, w1_analytic_empirical, SpectralParams,
};
use rflab_core::SeedSchedule;
use std::sync::OnceLock;

fn report(tag: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {tag}: {verdict} — {detail}");
    assert!(pass, "{tag}: {detail}");
}

/// One step of the 0.1-dex acceptance grids. 0.105 rather than 0.1: grid
/// ratios are rounded to integer N (e.g. 10^0.1·100 → 126), which can push
/// the adjacent grid point up to ~0.005 dex past the nominal step.
fn within_one_grid_step(n: usize, target: usize) -> bool {
    (n as f64 / target as f64).log10().abs() <= 0.105
}

fn count(peaks: &[Peak], kind: PeakKind) -> usize {
    peaks.iter().filter(|p| p.kind == kind).count()
}

fn fmt_peaks(peaks: &[Peak]) -> String {
    let items: Vec<String> = peaks
        .iter()
        .map(|p| format!("{}@N={}({:.2}dex)", p.kind, p.n, p.prominence_dex))
        .collect();
    format!("[{}]", items.join(", "))
}

// ---------------------------------------------------------------------
// Criterion 1 — activation moments. Runtime: < 1 s.
// ---------------------------------------------------------------------

#[test]
fn c01_activation_moments() {
    let relu = ActivationSpec::from_token("relu").unwrap();
    let abs = ActivationSpec::from_token("abs").unwrap();
    let lin = ActivationSpec::from_token("linear").unwrap();
    let tanh = ActivationSpec::from_token("tanh").unwrap();
    let pass = relu.r == 0.5 && abs.r == 0.0 && lin.r == 1.0 && (0.90..=0.94).contains(&tanh.r);
    report(
        "c01 activation-moments",
        pass,
        &format!(
            "r(ReLU) = {} (want 0.5 exact), r(Abs) = {} (want 0 exact), r(Linear) = {} \
             (want 1 exact), r(Tanh) = {:.6} (want within [0.90, 0.94])",
            relu.r, abs.r, lin.r, tanh.r
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2 — piecewise-linear family r_α. Runtime: < 5 s.
// ---------------------------------------------------------------------

#[test]
fn c02_pwl_family_closed_form() {
    let mut worst = 0.0_f64;
    for k in 0..21 {
        let alpha = -1.0 + 0.1 * k as f64;
        let closed = r_alpha(alpha);
        let (eta, zeta) =
            gaussian_moments(&Activation::PiecewiseLinear { alpha }, DEFAULT_QUAD_ORDER).unwrap();
        worst = worst.max((zeta / eta - closed).abs());
    }
    let ends_exact = r_alpha(1.0) == 0.0 && r_alpha(-1.0) == 1.0;
    let pass = worst <= 1e-8 && ends_exact;
    report(
        "c02 pwl-family",
        pass,
        &format!(
            "max |r_quadrature − r_closed| over 21 α values = {worst:.2e} (tol 1e-8); \
             r(α=1) = {} (want exactly 0), r(α=−1) = {} (want exactly 1)",
            r_alpha(1.0),
            r_alpha(-1.0)
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 3 — spectral limits: Marchenko–Pastur at ζ = 0, product
// Wishart at ζ = η. Runtime: < 2 min.
// ---------------------------------------------------------------------

/// Bisect the right support edge: density above threshold at `lo`, below
/// at `hi` (mirror image of `find_left_edge`, same 1e-4 edge threshold).
fn find_right_edge(p: &SpectralParams, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if density(&[mid], p).unwrap()[0] > 1e-4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn c03_spectral_limits() {
    // (a) ζ = 0 → Marchenko–Pastur with c = P/N, checked at c ∈ {0.5, 2}.
    let mut sup_worst = 0.0_f64;
    let mut edge_worst = 0.0_f64;
    for (n, p) in [(2000usize, 1000usize), (1000, 2000)] {
        let c = p as f64 / n as f64;
        let params = SpectralParams::new(1.0, 0.0, 100, n, p);
        let spec = analytic_spectrum(&params, 3000).unwrap();
        let (lm, lp) = mp_edges(c);
        let buffer = 0.02 * (lp - lm);
        for (lam, rho) in spec.lambda_grid.iter().zip(&spec.density) {
            if *lam > lm + buffer && *lam < lp - buffer {
                sup_worst = sup_worst.max((rho - mp_density(*lam, c)).abs());
            }
        }
        let left = find_left_edge(&params, 1e-6, 0.5 * (lm + lp)).unwrap();
        let right = find_right_edge(&params, 0.5 * (lm + lp), 2.0 * lp);
        edge_worst = edge_worst.max((left - lm).abs()).max((right - lp).abs());
    }

    // (b) ζ = η (linear) → product Wishart, analytic vs empirical, D = 400.
    let act = ActivationSpec::from_token("linear").unwrap();
    let (d, n, p) = (400usize, 1200usize, 600usize);
    let params = SpectralParams::new(act.eta, act.zeta, d, n, p);
    let spec = analytic_spectrum(&params, 3000).unwrap();
    let schedule = SeedSchedule::new(31, "acc-c3");
    let problem = RFProblem {
        d,
        n,
        p,
        activation: act,
        snr: f64::INFINITY,
        gamma: 0.0,
    };
    let mut pooled: Vec<f64> = Vec::new();
    for rep in 0..3 {
        let inst = sample_instance(&problem, &schedule, 0, rep, 0);
        let z = build_features(inst.x.view(), inst.theta.view(), &problem.activation).unwrap();
        pooled.extend(empirical_spectrum(z.view(), None).unwrap().eigenvalues);
    }
    pooled.sort_by(|a, b| a.total_cmp(b));
    let w1 = w1_analytic_empirical(&spec, &pooled, false);

    let pass = sup_worst < 1e-3 && edge_worst < 1e-4 && w1 < 0.05;
    report(
        "c03 spectral-limits",
        pass,
        &format!(
            "MP sup-norm (interior) = {sup_worst:.2e} (tol 1e-3), edge error = {edge_worst:.2e} \
             (tol 1e-4); product-Wishart W1(analytic, empirical D=400) = {w1:.4} (tol 0.05)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 4 — spectra across N/D: analytic vs empirical over 10 seeds,
// atom at zero exactly the rank law. Runtime: < 5 min.
// ---------------------------------------------------------------------

#[test]
fn c04_spectra_vs_empirical() {
    let act = ActivationSpec::from_token("tanh").unwrap();
    let (d, p) = (100usize, 1000usize);
    let schedule = SeedSchedule::new(41, "acc-c4");
    let mut w1_worst = 0.0_f64;
    let mut atom_worst = 0.0_f64;
    let mut detail = String::new();
    for (cell, nd) in [0.5, 1.0, 2.0, 10.0, 100.0].iter().enumerate() {
        let n = (d as f64 * nd).round() as usize;
        let params = SpectralParams::new(act.eta, act.zeta, d, n, p);
        let spec = analytic_spectrum(&params, 3000).unwrap();
        let problem = RFProblem {
            d,
            n,
            p,
            activation: act.clone(),
            snr: f64::INFINITY,
            gamma: 0.0,
        };
        let mut pooled: Vec<f64> = Vec::new();
        let mut atom_sum = 0.0;
        for rep in 0..10 {
            let inst = sample_instance(&problem, &schedule, cell as u64, rep, 0);
            let z = build_features(inst.x.view(), inst.theta.view(), &problem.activation).unwrap();
            let emp = empirical_spectrum(z.view(), None).unwrap();
            atom_sum += emp.atom_at_zero;
            pooled.extend(emp.eigenvalues);
        }
        pooled.sort_by(|a, b| a.total_cmp(b));
        // Mean-normalized W1: the continuous support shifts by orders of
        // magnitude across N/D, so the scale-free distance is the one that
        // a single 0.05 tolerance can gate.
        let w1 = w1_analytic_empirical(&spec, &pooled, true);
        let atom_err = (atom_sum / 10.0 - params.rank_atom()).abs();
        w1_worst = w1_worst.max(w1);
        atom_worst = atom_worst.max(atom_err);
        detail.push_str(&format!("N/D={nd}: W1n={w1:.4}, atom_err={atom_err:.1e}; "));
    }
    let pass = w1_worst < 0.05 && atom_worst <= 1e-12;
    report(
        "c04 spectra-empirical",
        pass,
        &format!("{detail}worst W1n = {w1_worst:.4} (tol 0.05), worst atom error = {atom_worst:.1e} (tol 1e-12, rank law exact)"),
    );
}

// ---------------------------------------------------------------------
// Criterion 5 — spectral-gap argmin locations. Runtime: < 10 min.
// ---------------------------------------------------------------------

#[test]
fn c05_gap_argmin_landmarks() {
    let (d, p) = (100usize, 1000usize);
    let n_grid: Vec<usize> = logspace_dex(-0.6, 0.1, 25)
        .iter()
        .map(|nd| (d as f64 * nd).round() as usize)
        .collect();
    let mut detail = String::new();
    let mut pass = true;

    // Analytic full-spectrum gap: argmin at N = P for r < 1, at N = D for
    // r = 1 (gap treated as 0 when the spectrum is gapless).
    for (label, eta, zeta, target) in [
        ("r=0", 1.0, 0.0, p),
        ("r=0.5", 0.5, 0.25, p),
        ("r=0.92", 1.0, 0.92, p),
        ("r=1", 1.0, 1.0, d),
    ] {
        let curve = gap_curve(eta, zeta, d, p, &n_grid, 1200).unwrap();
        let (n_min, _) = curve
            .iter()
            .map(|(n, g)| (*n, g.unwrap_or(0.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let ok = within_one_grid_step(n_min, target);
        pass &= ok;
        detail.push_str(&format!("{label}: argmin N={n_min} (want {target}); "));
    }

    // Empirical linear-component left edge (tanh): argmin at N = D over
    // the N ≥ D part of the grid, where the top-D band exists.
    let act = ActivationSpec::from_token("tanh").unwrap();
    let schedule = SeedSchedule::new(51, "acc-c5");
    let mut best: Option<(usize, f64)> = None;
    for (cell, &n) in n_grid.iter().enumerate().filter(|(_, &n)| n >= d) {
        let problem = RFProblem {
            d,
            n,
            p,
            activation: act.clone(),
            snr: f64::INFINITY,
            gamma: 0.0,
        };
        let inst = sample_instance(&problem, &schedule, cell as u64, 0, 0);
        let z = build_features(inst.x.view(), inst.theta.view(), &problem.activation).unwrap();
        let emp = empirical_spectrum(z.view(), Some(d)).unwrap();
        let edge = emp.linear_part.as_ref().unwrap()[0];
        if best.is_none() || edge < best.unwrap().1 {
            best = Some((n, edge));
        }
    }
    let (n_edge, edge) = best.unwrap();
    let ok = within_one_grid_step(n_edge, d);
    pass &= ok;
    detail.push_str(&format!(
        "empirical linear edge (tanh): argmin N={n_edge}, edge={edge:.3e} (want N={d})"
    ));
    report("c05 gap-argmin", pass, &detail);
}

// ---------------------------------------------------------------------
// Criteria 6 + 7 — triple descent peak structure and norm curves on the
// same sweeps. Runtime: < 20 min combined (the tanh sweep is shared).
// ---------------------------------------------------------------------

/// Standard acceptance RF sweep: D = 100, P/D = 10, 25-point N grid.
///
/// γ = 1e-5 rather than the figure's quoted 1e-3: at desk scale (D = 100)
/// the nonlinear peak needs the smaller ridge to stand above the
/// prominence floor; the peak structure, not the ridge value, is what the
/// criterion checks.
fn fig6_config(id: &str, activation: &str, snr: f64, seed: u64) -> SweepConfig {
    SweepConfig {
        experiment_id: id.into(),
        model: Model::Rf,
        d: 100,
        n_over_d: logspace_dex(-0.6, 0.1, 25),
        p_over_d: vec![10.0],
        activation: activation.into(),
        snr,
        gamma: 1e-5,
        k_ensemble: 1,
        replicates: 10,
        m_test: 1000,
        master_seed: seed,
        nn: None,
        dataset: None,
    }
}

fn sweep_rows(cfg: &SweepConfig) -> Vec<Row> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join(format!("{}.csv", cfg.experiment_id));
    let outcome = run_sweep(cfg, &out, None).unwrap();
    assert_eq!(outcome.cells_failed, 0, "sweep {} had failed cells", cfg.experiment_id);
    read_rows(&out).unwrap()
}

static TANH_FIG6: OnceLock<Vec<Row>> = OnceLock::new();

fn tanh_fig6_rows() -> &'static [Row] {
    TANH_FIG6.get_or_init(|| sweep_rows(&fig6_config("acc-c6-tanh", "tanh", 0.2, 601)))
}

fn landmark_peaks(rows: &[Row], metric: &str) -> Vec<Peak> {
    let profile = profile_from_rows(rows, metric);
    let (d, p) = (rows[0].d, rows[0].p);
    detect_peaks(&profile, d, p).unwrap()
}

#[test]
fn c06_triple_descent_peaks() {
    let mut pass = true;
    let mut detail = String::new();

    // Tanh, SNR = 0.2: exactly one Linear and one Nonlinear peak.
    let peaks = landmark_peaks(tanh_fig6_rows(), "loss_ge");
    let ok = count(&peaks, PeakKind::Linear) == 1
        && count(&peaks, PeakKind::Nonlinear) == 1
        && count(&peaks, PeakKind::Other) == 0;
    pass &= ok;
    detail.push_str(&format!("tanh: {} (want exactly 1 Linear + 1 Nonlinear); ", fmt_peaks(&peaks)));

    // Abs: only a Nonlinear peak.
    let peaks = landmark_peaks(
        &sweep_rows(&fig6_config("acc-c6-abs", "abs", 0.2, 602)),
        "loss_ge",
    );
    let ok = count(&peaks, PeakKind::Linear) == 0
        && count(&peaks, PeakKind::Nonlinear) == 1
        && count(&peaks, PeakKind::Other) == 0;
    pass &= ok;
    detail.push_str(&format!("abs: {} (want only Nonlinear); ", fmt_peaks(&peaks)));

    // Linear activation: only a Linear peak.
    let peaks = landmark_peaks(
        &sweep_rows(&fig6_config("acc-c6-linear", "linear", 0.2, 603)),
        "loss_ge",
    );
    let ok = count(&peaks, PeakKind::Linear) == 1
        && count(&peaks, PeakKind::Nonlinear) == 0
        && count(&peaks, PeakKind::Other) == 0;
    pass &= ok;
    detail.push_str(&format!("linear: {} (want only Linear); ", fmt_peaks(&peaks)));

    // SNR = ∞, r < 1: the Linear peak is absent (it is noise-driven).
    for (act, seed) in [("tanh", 604u64), ("abs", 605)] {
        let peaks = landmark_peaks(
            &sweep_rows(&fig6_config(
                &format!("acc-c6-{act}-inf"),
                act,
                f64::INFINITY,
                seed,
            )),
            "loss_ge",
        );
        let ok = count(&peaks, PeakKind::Linear) == 0;
        pass &= ok;
        detail.push_str(&format!("{act}@SNR=∞: {} (want no Linear); ", fmt_peaks(&peaks)));
    }
    report("c06 triple-descent", pass, detail.trim_end_matches([' ', ';']));
}

#[test]
fn c07_norm_curves() {
    let rows = tanh_fig6_rows();
    let (d, p) = (rows[0].d, rows[0].p);
    let argmax = |metric: &str| -> usize {
        profile_from_rows(rows, metric)
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    let n_a = argmax("norm_a");
    let n_b = argmax("norm_b");
    let pass = within_one_grid_step(n_a, p) && within_one_grid_step(n_b, d);
    report(
        "c07 norm-curves",
        pass,
        &format!(
            "argmax ‖a‖ at N = {n_a} (want N = P = {p} ± 1 grid step); \
             argmax ‖Θᵀa‖ at N = {n_b} (want N = D = {d} ± 1 grid step)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8 — bias-variance decomposition. Runtime: < 30 min.
// ---------------------------------------------------------------------

fn c8_problem(n: usize, snr: f64) -> RFProblem {
    RFProblem {
        d: 50,
        n,
        p: 1000, // P/D = 20, the desk-scale variant the criterion allows
        activation: ActivationSpec::from_token("relu").unwrap(),
        snr,
        gamma: 1e-5,
    }
}

fn largest_term(report: &rflab_core::biasvar::BiasVarianceReport) -> (&'static str, f64) {
    [
        ("bias2", report.bias2.value),
        ("var_init", report.var_init.value),
        ("var_noise", report.var_noise.value),
        ("var_sampling", report.var_sampling.value),
    ]
    .into_iter()
    .max_by(|a, b| a.1.total_cmp(&b.1))
    .unwrap()
}

fn additivity_err(report: &rflab_core::biasvar::BiasVarianceReport) -> f64 {
    let sum = report.bias2.value
        + report.var_init.value
        + report.var_noise.value
        + report.var_sampling.value;
    (sum - report.total.value).abs() / report.total.value.abs().max(1.0)
}

#[test]
fn c08_bias_variance() {
    let schedule = SeedSchedule::new(81, "acc-c8");
    let lattice = |s_noise: usize, direct: usize| BiasVarConfig {
        s_data: 10,
        s_init: 10,
        s_noise,
        m_test: 5000,
        bessel: false,
        direct_replicates: direct,
    };
    let mut pass = true;
    let mut detail = String::new();
    let mut worst_add = 0.0_f64;

    // SNR = 0.2 at the Linear peak N = D: var_noise dominates; the
    // independent direct MC total agrees within 3σ.
    let rep = decompose(&c8_problem(50, 0.2), &lattice(10, 8), &schedule, 0).unwrap();
    worst_add = worst_add.max(additivity_err(&rep));
    let (name, _) = largest_term(&rep);
    pass &= name == "var_noise";
    detail.push_str(&format!(
        "SNR=0.2, N=D: largest term {name} (want var_noise), bias²={:.3} var_init={:.3} \
         var_noise={:.3} var_samp={:.3}; ",
        rep.bias2.value, rep.var_init.value, rep.var_noise.value, rep.var_sampling.value
    ));
    let direct = rep.direct.as_ref().unwrap();
    let sigma = (rep.total.stderr.powi(2) + direct.stderr.powi(2)).sqrt();
    let dev = (rep.total.value - direct.value).abs();
    pass &= dev <= 3.0 * sigma;
    detail.push_str(&format!(
        "total {:.4} vs direct MC {:.4} → {:.2}σ (tol 3σ); ",
        rep.total.value,
        direct.value,
        dev / sigma.max(1e-300)
    ));

    // SNR = ∞: totals on one-grid-step neighborhoods of N = D and N = P.
    let mut totals = std::collections::BTreeMap::new();
    for (cell, n) in [(1u64, 40usize), (2, 50), (3, 63), (4, 794), (5, 1000), (6, 1259)] {
        let direct = if n == 1000 { 8 } else { 0 };
        let rep = decompose(&c8_problem(n, f64::INFINITY), &lattice(1, direct), &schedule, cell)
            .unwrap();
        worst_add = worst_add.max(additivity_err(&rep));
        if n == 1000 {
            let (name, _) = largest_term(&rep);
            pass &= name == "var_init";
            detail.push_str(&format!("SNR=∞, N=P: largest term {name} (want var_init); "));
            let d2 = rep.direct.as_ref().unwrap();
            let sigma = (rep.total.stderr.powi(2) + d2.stderr.powi(2)).sqrt();
            let dev = (rep.total.value - d2.value).abs();
            pass &= dev <= 3.0 * sigma;
            detail.push_str(&format!(
                "total {:.4} vs direct {:.4} → {:.2}σ; ",
                rep.total.value,
                d2.value,
                dev / sigma.max(1e-300)
            ));
        }
        totals.insert(n, rep.total.value);
    }
    let not_local_max_at_d = !(totals[&50] > totals[&40] && totals[&50] > totals[&63]);
    let local_max_at_p = totals[&1000] > totals[&794] && totals[&1000] > totals[&1259];
    pass &= not_local_max_at_d && local_max_at_p;
    detail.push_str(&format!(
        "SNR=∞ totals: N∈{{40,50,63}} → {:.4}/{:.4}/{:.4} (N=D must not be a local max), \
         N∈{{794,1000,1259}} → {:.4}/{:.4}/{:.4} (N=P must stay one); ",
        totals[&40], totals[&50], totals[&63], totals[&794], totals[&1000], totals[&1259]
    ));

    pass &= worst_add <= 1e-10;
    detail.push_str(&format!(
        "worst additivity error = {worst_add:.1e} (tol 1e-10, plug-in identity exact)"
    ));
    report("c08 bias-variance", pass, &detail);
}

// ---------------------------------------------------------------------
// Criterion 9 — ensembling and regularization selectively remove the
// nonlinear peak. Runtime: < 30 min.
// ---------------------------------------------------------------------

#[test]
fn c09_ensembling_regularization() {
    let schedule = SeedSchedule::new(91, "acc-c9");
    // Mean GE loss over 10 replicates at one cell.
    let mean_loss = |n: usize, gamma: f64, k: usize, cell: u64| -> f64 {
        let problem = RFProblem {
            gamma,
            ..c8_problem(n, 0.2)
        };
        let mut acc = 0.0;
        for rep in 0..10 {
            acc += ensembled_replicate(&problem, &schedule, cell, rep, k, 500)
                .unwrap()
                .loss_ge;
        }
        acc / 10.0
    };
    // Cells: 0/1 baseline, 2/3 ensembling, 4/5 regularization — the seed
    // schedule keys off the cell id, so baselines and variants see
    // identical data/teacher/noise draws where members coincide.
    let base_nl = mean_loss(1000, 1e-5, 1, 0);
    let base_lin = mean_loss(50, 1e-5, 1, 1);
    let ens_nl = mean_loss(1000, 1e-5, 10, 0);
    let ens_lin = mean_loss(50, 1e-5, 10, 1);
    let reg_nl = mean_loss(1000, 1e-3, 1, 0);
    let reg_lin = mean_loss(50, 1e-3, 1, 1);

    let ens_drop = (base_nl - ens_nl) / base_nl;
    let ens_shift = (ens_lin - base_lin).abs() / base_lin;
    let reg_drop = (base_nl - reg_nl) / base_nl;
    let reg_shift = (reg_lin - base_lin).abs() / base_lin;
    let pass = ens_drop >= 0.5 && ens_shift <= 0.15 && reg_drop >= 0.5 && reg_shift <= 0.15;
    report(
        "c09 ensembling-regularization",
        pass,
        &format!(
            "baseline L(N=P) = {base_nl:.3}, L(N=D) = {base_lin:.3}; K=10 ensemble: nonlinear \
             −{:.1}% (want ≥ 50%), linear shift {:.1}% (want ≤ 15%); γ=1e-3: nonlinear \
             −{:.1}% (want ≥ 50%), linear shift {:.1}% (want ≤ 15%)",
            100.0 * ens_drop,
            100.0 * ens_shift,
            100.0 * reg_drop,
            100.0 * reg_shift
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 10 — gradient checks. Runtime: < 1 min.
// ---------------------------------------------------------------------

#[test]
fn c10_gradient_checks() {
    let schedule = SeedSchedule::new(101, "acc-c10");
    let mut worst = 0.0_f64;
    for (i, act) in [Activation::Tanh, Activation::Linear].into_iter().enumerate() {
        let mut rng = schedule.rng(i as u64, 0, rflab_core::Stream::Init, 0);
        let mlp = Mlp::new(25, 12, act, &mut rng);
        let x = normal_matrix(&mut rng, 8, 25);
        let y: Array1<f64> = normal_vector(&mut rng, 8);
        worst = worst.max(gradient_check(&mlp, x.view(), y.view(), 10, &mut rng));
    }
    let pass = worst < 1e-5;
    report(
        "c10 gradient-checks",
        pass,
        &format!(
            "worst relative error, analytic vs central differences, 10 probes per layer \
             (tanh + linear students) = {worst:.2e} (tol 1e-5)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 11 — NN training dynamics: the linear peak forms first.
// Runtime: ≤ 2 h budget; the desk grid runs in well under an hour.
// ---------------------------------------------------------------------

#[test]
fn c11_nn_dynamics() {
    let cfg = SweepConfig {
        experiment_id: "acc-c11".into(),
        model: Model::Nn,
        d: 49,
        n_over_d: logspace_dex(-0.4, 0.1, 25),
        p_over_d: vec![],
        activation: "tanh".into(),
        snr: 0.2,
        gamma: 0.0,
        k_ensemble: 1,
        replicates: 10,
        m_test: 2000,
        master_seed: 1101,
        nn: Some(NnConfig {
            hidden: 10,
            teacher_width: 100,
            epochs: 1000,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            checkpoints: vec![50, 100, 200, 500, 1000],
        }),
        dataset: None,
    };
    let rows = sweep_rows(&cfg);
    let (d, p) = (rows[0].d, rows[0].p);
    let peaks_at = |epoch: usize| -> Vec<Peak> {
        let at: Vec<Row> = rows
            .iter()
            .filter(|r| r.epoch == Some(epoch))
            .cloned()
            .collect();
        detect_peaks(&profile_from_rows(&at, "loss_test"), d, p).unwrap()
    };
    let mut detail = format!("D={d}, P={p} (width-10 tanh student, ReLU teacher); ");
    // Early: some checkpoint at epoch ≤ 100 shows a Linear peak and no
    // Nonlinear peak.
    let mut early_ok = false;
    for epoch in [50usize, 100] {
        let peaks = peaks_at(epoch);
        let ok = count(&peaks, PeakKind::Linear) >= 1 && count(&peaks, PeakKind::Nonlinear) == 0;
        early_ok |= ok;
        detail.push_str(&format!("epoch {epoch}: {}; ", fmt_peaks(&peaks)));
    }
    // Late: both peaks present at epoch 1000.
    let late = peaks_at(1000);
    let late_ok = count(&late, PeakKind::Linear) >= 1 && count(&late, PeakKind::Nonlinear) >= 1;
    detail.push_str(&format!(
        "epoch 1000: {} (want Linear + Nonlinear both present; early epoch ≤ 100 wants Linear only)",
        fmt_peaks(&late)
    ));
    report("c11 nn-dynamics", early_ok && late_ok, &detail);
}

// ---------------------------------------------------------------------
// Criterion 12 — determinism across worker counts. Runtime: < 2 min.
// ---------------------------------------------------------------------

#[test]
fn c12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut detail = String::new();
    let mut pass = true;

    let rf = SweepConfig {
        experiment_id: "acc-c12-rf".into(),
        model: Model::Rf,
        d: 24,
        n_over_d: logspace_dex(-0.3, 0.15, 9),
        p_over_d: vec![3.0],
        activation: "tanh".into(),
        snr: 0.5,
        gamma: 1e-3,
        k_ensemble: 2,
        replicates: 3,
        m_test: 400,
        master_seed: 12,
        nn: None,
        dataset: None,
    };
    let nn = SweepConfig {
        experiment_id: "acc-c12-nn".into(),
        model: Model::Nn,
        d: 8,
        n_over_d: vec![0.5, 1.0, 2.0, 4.0],
        p_over_d: vec![],
        activation: "tanh".into(),
        snr: 1.0,
        gamma: 0.0,
        k_ensemble: 1,
        replicates: 2,
        m_test: 200,
        master_seed: 12,
        nn: Some(NnConfig {
            hidden: 4,
            teacher_width: 10,
            epochs: 50,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            checkpoints: vec![25, 50],
        }),
        dataset: None,
    };
    for (label, cfg) in [("rf", rf), ("nn", nn)] {
        let mut bytes = Vec::new();
        for workers in [1usize, 2, 4] {
            let out = dir.path().join(format!("{label}-w{workers}.csv"));
            run_sweep(&cfg, &out, Some(workers)).unwrap();
            bytes.push(std::fs::read(&out).unwrap());
        }
        let ok = bytes[0] == bytes[1] && bytes[1] == bytes[2] && !bytes[0].is_empty();
        pass &= ok;
        detail.push_str(&format!(
            "{label}: {} bytes, workers 1/2/4 {}; ",
            bytes[0].len(),
            if ok { "bit-identical" } else { "DIFFER" }
        ));
    }
    report(
        "c12 determinism",
        pass,
        &format!("{detail}(same master seed, different worker counts)"),
    );
}
