//! Command-line interface: subcommand definitions and dispatch.

use crate::config::{Model, SweepConfig};
use crate::csvio::{code_version, read_rows, Row, RowStamp};
use crate::peaks::detect_peaks;
use crate::recipes::recipe;
use crate::sweep::run_sweep;
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rflab_core::activation::ActivationSpec;
use rflab_core::biasvar::{decompose, BiasVarConfig};
use rflab_core::rfcore::{build_features, sample_instance};
use rflab_core::spectral::{analytic_spectrum, empirical_spectrum, SpectralParams};
use rflab_core::SeedSchedule;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "rflab",
    version,
    about = "Random-feature ridge regression laboratory: seeded sweeps, spectra, \
             bias-variance decompositions, and peak detection on loss profiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the Gaussian moments (η, ζ, r, μ₀) of an activation.
    Moments {
        /// Activation token: linear | relu | abs | tanh | pwl:<alpha>.
        #[arg(long)]
        activation: String,
    },
    /// Eigenvalue spectrum of the feature covariance ZᵀZ/N for one cell.
    Spectrum {
        #[arg(value_enum)]
        kind: SpectrumKind,
        #[arg(long)]
        activation: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// Grid points (analytic) — the empirical spectrum has P eigenvalues.
        #[arg(long, default_value_t = 2000)]
        points: usize,
        /// Master seed (empirical only).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Tag the top D eigenvalues as the linear component (empirical only).
        #[arg(long)]
        split: bool,
        /// Output CSV (stdout summary is printed either way).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample-wise RF sweep (typically one P/D value).
    RfProfile(SweepArgs),
    /// Two-axis RF sweep over the (P/D, N/D) plane.
    RfPhase(SweepArgs),
    /// Sample-wise NN sweep with per-epoch checkpoints.
    NnPhase(SweepArgs),
    /// Bias-variance decomposition over the config's N grid.
    Biasvar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training-set draws (outer lattice axis).
        #[arg(long, default_value_t = 10)]
        s_data: usize,
        /// Feature-initialization draws (middle axis).
        #[arg(long, default_value_t = 10)]
        s_init: usize,
        /// Label-noise draws (inner axis).
        #[arg(long, default_value_t = 10)]
        s_noise: usize,
        /// Probe-set size for the E_x average.
        #[arg(long, default_value_t = 10_000)]
        m_test: usize,
        /// Fresh-seed replicates for the independent total check (0 = off).
        #[arg(long, default_value_t = 0)]
        direct: usize,
        /// Master-seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert IDX images to a standardized dataset matrix.
    IngestMnist {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Target side length (images become side×side, D = side²).
        #[arg(long, default_value_t = 10)]
        side: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand a named figure recipe into fully resolved sweep configs.
    Recipe {
        /// One of the fig*/appC names (an unknown name lists them all).
        name: String,
        /// Write one JSON config per label into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Dataset path override for recipes that read ingested inputs.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Detect and classify peaks on a sweep CSV's aggregated profile.
    Peaks {
        #[arg(long)]
        csv: PathBuf,
        /// Metric to scan (its __mean/__stderr aggregate rows).
        #[arg(long, default_value = "loss_mc")]
        metric: String,
        /// Restrict to one P (needed when the CSV holds a phase sweep).
        #[arg(long)]
        p: Option<usize>,
        /// Restrict to one checkpoint epoch (NN sweeps).
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Log-log terminal plot of a profile straight from a sweep CSV.
    AsciiProfile {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "loss_mc")]
        metric: String,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        epoch: Option<usize>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SpectrumKind {
    Analytic,
    Empirical,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path (also anchors the resume sidecars).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: RFLAB_WORKERS env var, then all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Master-seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the resolved config and exit without running.
    #[arg(long)]
    pub dump_config: bool,
}

/// Dispatch a parsed command line. Errors map to exit codes in `main`.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Moments { activation } => {
            let spec = ActivationSpec::from_token(&activation)?;
            println!(
                "{}",
                serde_json::json!({
                    "activation": activation,
                    "eta": spec.eta,
                    "zeta": spec.zeta,
                    "r": spec.r,
                    "mu0": spec.mu0,
                })
            );
            Ok(())
        }
        Command::Spectrum {
            kind,
            activation,
            d,
            n,
            p,
            points,
            seed,
            split,
            out,
        } => spectrum_cmd(kind, &activation, d, n, p, points, seed, split, out),
        Command::RfProfile(args) | Command::RfPhase(args) => sweep_cmd(args, Model::Rf),
        Command::NnPhase(args) => sweep_cmd(args, Model::Nn),
        Command::Biasvar {
            config,
            out,
            s_data,
            s_init,
            s_noise,
            m_test,
            direct,
            seed,
        } => biasvar_cmd(&config, &out, s_data, s_init, s_noise, m_test, direct, seed),
        Command::IngestMnist {
            images,
            labels,
            side,
            out,
        } => {
            let report = crate::mnist::ingest(&images, &labels, side, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "out": out.display().to_string(),
                    "rows": report.rows,
                    "cols": report.cols,
                    "pre_standardization_mean": report.mean,
                    "pre_standardization_std": report.std,
                })
            );
            Ok(())
        }
        Command::Recipe {
            name,
            out_dir,
            dataset,
        } => recipe_cmd(&name, out_dir, dataset),
        Command::Peaks {
            csv,
            metric,
            p,
            epoch,
        } => {
            let (d, pk, profile) = load_profile(&csv, &metric, p, epoch)?;
            let peaks = detect_peaks(&profile, d, pk)?;
            let items: Vec<_> = peaks
                .iter()
                .map(|pk| {
                    serde_json::json!({
                        "n": pk.n,
                        "kind": pk.kind.to_string(),
                        "log10_height": pk.log10_height,
                        "prominence_dex": pk.prominence_dex,
                        "width_dex": pk.width_dex,
                    })
                })
                .collect();
            println!(
                "{}",
                serde_json::json!({"d": d, "p": pk, "metric": metric, "peaks": items})
            );
            Ok(())
        }
        Command::AsciiProfile {
            csv,
            metric,
            p,
            epoch,
            width,
            height,
        } => {
            let (d, pk, profile) = load_profile(&csv, &metric, p, epoch)?;
            print!("{}", ascii_profile(&profile, d, pk, &metric, width, height)?);
            Ok(())
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut cfg = SweepConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn sweep_cmd(args: SweepArgs, want: Model) -> Result<()> {
    let cfg = load_config(&args.config, args.seed)?;
    if cfg.model != want {
        return Err(Error::Config(format!(
            "config has model \"{}\" but this subcommand runs \"{}\" sweeps",
            cfg.model, want
        )));
    }
    if args.dump_config {
        println!("{}", cfg.pretty_json()?);
        return Ok(());
    }
    let outcome = run_sweep(&cfg, &args.out, args.workers)?;
    eprintln!(
        "wrote {} ({} cells, {} resumed, {} failed)",
        outcome.csv_path.display(),
        outcome.cells_total,
        outcome.cells_resumed,
        outcome.cells_failed
    );
    if outcome.cells_failed > 0 {
        return Err(Error::PartialFailure {
            failed: outcome.cells_failed,
            total: outcome.cells_total,
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn spectrum_cmd(
    kind: SpectrumKind,
    activation: &str,
    d: usize,
    n: usize,
    p: usize,
    points: usize,
    seed: u64,
    split: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let act = ActivationSpec::from_token(activation)?;
    match kind {
        SpectrumKind::Analytic => {
            let params = SpectralParams::new(act.eta, act.zeta, d, n, p);
            let spec = analytic_spectrum(&params, points)?;
            if let Some(path) = &out {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["lambda", "density"])?;
                for (l, rho) in spec.lambda_grid.iter().zip(&spec.density) {
                    w.write_record([l.to_string(), rho.to_string()])?;
                }
                w.flush().map_err(|e| Error::io(path.display(), e))?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "kind": "analytic",
                    "atom_at_zero": spec.atom_at_zero,
                    "gap": spec.gap,
                    "continuous_mass": spec.mass,
                })
            );
        }
        SpectrumKind::Empirical => {
            let problem = rflab_core::rfcore::RFProblem {
                d,
                n,
                p,
                activation: act,
                snr: f64::INFINITY,
                gamma: 0.0,
            };
            let schedule = SeedSchedule::new(seed, "spectrum");
            let instance = sample_instance(&problem, &schedule, 0, 0, 0);
            let z = build_features(instance.x.view(), instance.theta.view(), &problem.activation)?;
            let spec = empirical_spectrum(z.view(), split.then_some(d))?;
            if let Some(path) = &out {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["eigenvalue", "component"])?;
                match (&spec.linear_part, &spec.nonlinear_part) {
                    (Some(lin), Some(nl)) => {
                        for v in nl {
                            w.write_record([v.to_string(), "nonlinear".into()])?;
                        }
                        for v in lin {
                            w.write_record([v.to_string(), "linear".into()])?;
                        }
                    }
                    _ => {
                        for v in &spec.eigenvalues {
                            w.write_record([v.to_string(), "all".into()])?;
                        }
                    }
                }
                w.flush().map_err(|e| Error::io(path.display(), e))?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "kind": "empirical",
                    "atom_at_zero": spec.atom_at_zero,
                    "gap": spec.gap,
                    "nonzero_eigenvalues": spec.eigenvalues.len(),
                })
            );
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn biasvar_cmd(
    config: &PathBuf,
    out: &PathBuf,
    s_data: usize,
    s_init: usize,
    s_noise: usize,
    m_test: usize,
    direct: usize,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    if cfg.model != Model::Rf {
        return Err(Error::Config("bias-variance decomposition is RF-only".into()));
    }
    let bv = BiasVarConfig {
        s_data,
        s_init,
        s_noise,
        m_test,
        bessel: false,
        direct_replicates: direct,
    };
    let schedule = SeedSchedule::new(cfg.master_seed, &cfg.experiment_id);
    let act = cfg.activation_spec()?;
    let stamp = RowStamp {
        experiment_id: cfg.experiment_id.clone(),
        model: cfg.model.to_string(),
        d: cfg.d,
        r: act.r,
        eta: act.eta,
        zeta: act.zeta,
        snr: cfg.snr,
        gamma: cfg.gamma,
        k: cfg.k_ensemble,
        config_hash: cfg.hash()?,
        schedule_id: schedule.id(),
        code_version: code_version(),
    };
    let mut rows: Vec<Row> = Vec::new();
    for cell in cfg.cells() {
        let problem = cfg.rf_problem(&cell)?;
        let report = decompose(&problem, &bv, &schedule, cell.index as u64)?;
        eprintln!(
            "cell {} (N = {}): total = {:.4}",
            cell.index, cell.n, report.total.value
        );
        let mut push = |name: &str, t: &rflab_core::biasvar::TermEstimate| {
            rows.push(stamp.row(cell.n, cell.p, None, "agg", &format!("{name}__mean"), t.value));
            rows.push(stamp.row(
                cell.n,
                cell.p,
                None,
                "agg",
                &format!("{name}__stderr"),
                t.stderr,
            ));
        };
        push("bias2", &report.bias2);
        push("var_init", &report.var_init);
        push("var_noise", &report.var_noise);
        push("var_sampling", &report.var_sampling);
        push("total", &report.total);
        if let Some(dir) = &report.direct {
            push("direct", dir);
        }
    }
    let bytes = crate::csvio::rows_to_bytes(&rows, true)?;
    std::fs::write(out, bytes).map_err(|e| Error::io(out.display(), e))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn recipe_cmd(name: &str, out_dir: Option<PathBuf>, dataset: Option<String>) -> Result<()> {
    let mut expansion = recipe(name)?;
    if let Some(ds) = dataset {
        for (_, cfg) in expansion.iter_mut() {
            if cfg.dataset.is_some() {
                cfg.dataset = Some(ds.clone());
            }
        }
    }
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display(), e))?;
            for (label, cfg) in &expansion {
                let path = dir.join(format!("{name}__{label}.json"));
                let mut f =
                    std::fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
                f.write_all(cfg.pretty_json()?.as_bytes())
                    .map_err(|e| Error::io(path.display(), e))?;
                println!("{}", path.display());
            }
        }
        None => {
            let doc: serde_json::Value = serde_json::Value::Object(
                expansion
                    .iter()
                    .map(|(label, cfg)| {
                        Ok((
                            label.clone(),
                            serde_json::from_str(&cfg.canonical_json()?)?,
                        ))
                    })
                    .collect::<Result<_>>()?,
            );
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(())
}

/// Pull one aggregated profile out of a sweep CSV: rows of
/// `{metric}__mean` / `{metric}__stderr`, filtered to one P and one epoch.
fn load_profile(
    csv: &PathBuf,
    metric: &str,
    p: Option<usize>,
    epoch: Option<usize>,
) -> Result<(usize, usize, Vec<(usize, f64, f64)>)> {
    let rows = read_rows(csv)?;
    let filtered: Vec<&Row> = rows
        .iter()
        .filter(|r| p.is_none_or(|want| r.p == want))
        .filter(|r| match epoch {
            Some(e) => r.epoch == Some(e),
            None => true,
        })
        .collect();
    if filtered.is_empty() {
        return Err(Error::Config(format!(
            "no rows in {} match the p/epoch filters",
            csv.display()
        )));
    }
    let mut ps: Vec<usize> = filtered.iter().map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    if ps.len() > 1 {
        return Err(Error::Config(format!(
            "CSV holds several P values {ps:?}; pass --p to pick one"
        )));
    }
    let mut epochs: Vec<Option<usize>> = filtered.iter().map(|r| r.epoch).collect();
    epochs.sort_unstable();
    epochs.dedup();
    if epochs.len() > 1 {
        return Err(Error::Config(
            "CSV holds several checkpoint epochs; pass --epoch to pick one".into(),
        ));
    }
    let d = filtered[0].d;
    let owned: Vec<Row> = filtered.iter().map(|r| (*r).clone()).collect();
    let profile = crate::csvio::profile_from_rows(&owned, metric);
    if profile.is_empty() {
        return Err(Error::Config(format!(
            "no \"{metric}__mean\" aggregate rows found; is the metric name right?"
        )));
    }
    Ok((d, ps[0], profile))
}

/// Render a log-log profile as text. D and P landmarks are marked on the
/// axis; error bars are omitted (they are in the CSV).
fn ascii_profile(
    profile: &[(usize, f64, f64)],
    d: usize,
    p: usize,
    metric: &str,
    width: usize,
    height: usize,
) -> Result<String> {
    let width = width.max(16);
    let height = height.max(6);
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|r| ((r.0 as f64).log10(), r.1.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Config(
            "profile needs at least two positive points to plot".into(),
        ));
    }
    let (x0, x1) = pts
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &(x, _)| (a.min(x), b.max(x)));
    let (y0, y1) = pts
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &(_, y)| (a.min(y), b.max(y)));
    let yspan = (y1 - y0).max(1e-9);
    let xspan = (x1 - x0).max(1e-9);
    let col = |x: f64| (((x - x0) / xspan) * (width - 1) as f64).round() as usize;
    let row = |y: f64| (((y1 - y) / yspan) * (height - 1) as f64).round() as usize;
    let mut grid = vec![vec![' '; width]; height];
    for &(x, y) in &pts {
        grid[row(y)][col(x)] = '*';
    }
    let mut out = String::new();
    out.push_str(&format!("log10({metric}) vs log10(N)\n"));
    for (i, line) in grid.iter().enumerate() {
        let label = if i == 0 {
            format!("{y1:8.2} ")
        } else if i == height - 1 {
            format!("{y0:8.2} ")
        } else {
            " ".repeat(9)
        };
        out.push_str(&label);
        out.push('|');
        out.push_str(&line.iter().collect::<String>());
        out.push('\n');
    }
    let mut axis = vec!['-'; width];
    let dl = (d as f64).log10();
    let pl = (p as f64).log10();
    if dl >= x0 && dl <= x1 {
        axis[col(dl)] = 'D';
    }
    if pl >= x0 && pl <= x1 {
        axis[col(pl)] = 'P';
    }
    out.push_str(&" ".repeat(9));
    out.push('+');
    out.push_str(&axis.iter().collect::<String>());
    out.push('\n');
    out.push_str(&format!(
        "{}N = {} … {}  (D, P marked on axis)\n",
        " ".repeat(10),
        profile.first().unwrap().0,
        profile.last().unwrap().0
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_every_subcommand() {
        for argv in [
            vec!["rflab", "moments", "--activation", "tanh"],
            vec![
                "rflab", "spectrum", "analytic", "--activation", "tanh", "--d", "100", "--n",
                "200", "--p", "1000",
            ],
            vec![
                "rflab",
                "rf-profile",
                "--config",
                "c.json",
                "--out",
                "o.csv",
                "--workers",
                "2",
            ],
            vec!["rflab", "rf-phase", "--config", "c.json", "--out", "o.csv"],
            vec!["rflab", "nn-phase", "--config", "c.json", "--out", "o.csv"],
            vec![
                "rflab", "biasvar", "--config", "c.json", "--out", "o.csv", "--s-data", "4",
            ],
            vec![
                "rflab",
                "ingest-mnist",
                "--images",
                "i",
                "--labels",
                "l",
                "--side",
                "10",
                "--out",
                "d.mat",
            ],
            vec!["rflab", "recipe", "fig6_nonlinearities"],
            vec!["rflab", "peaks", "--csv", "o.csv", "--metric", "loss_ge"],
            vec!["rflab", "ascii-profile", "--csv", "o.csv"],
        ] {
            Cli::try_parse_from(&argv).unwrap_or_else(|e| panic!("{argv:?}: {e}"));
        }
    }

    #[test]
    fn ascii_profile_marks_landmarks_and_peaks() {
        let profile: Vec<(usize, f64, f64)> = (0..20)
            .map(|k| {
                let n = 10.0 * 10f64.powf(k as f64 * 0.15);
                let y = 1.0 + 5.0 * (-((n.log10() - 2.0) / 0.2).powi(2)).exp();
                (n as usize, y, 0.01)
            })
            .collect();
        let txt = ascii_profile(&profile, 100, 1000, "loss_mc", 48, 10).unwrap();
        assert!(txt.contains('D'));
        assert!(txt.contains('P'));
        assert!(txt.contains('*'));
        assert!(txt.lines().count() >= 12);
    }
}
