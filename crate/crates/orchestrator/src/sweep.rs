//! Deterministic parallel sweep execution with crash-safe CSV emission.
//!
//! Cells (grid points) are independent work units executed on a rayon pool;
//! a single writer appends each completed cell's rows to `<out>.partial` in
//! ascending cell order (a reorder buffer absorbs out-of-order completions,
//! so the bytes written never depend on the worker count). After a cell's
//! rows are flushed, a marker `cell=<idx> bytes=<offset>` is appended to
//! `<out>.done`; on restart the partial file is truncated to the last
//! marker and completed cells are skipped, which makes interrupted sweeps
//! resumable with byte-identical output. On completion the partial file is
//! renamed onto the final path and the sidecars are removed.

use crate::config::{Cell, Model, SweepConfig};
use crate::csvio::{code_version, rows_to_bytes, Row, RowStamp};
use crate::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use rflab_core::biasvar::ensembled_replicate;
use rflab_core::rfcore::{
    aggregate, build_features, gaussian_equivalent_loss, normal_matrix, normal_vector,
    ridge_solve, RFInstance, RFProblem, ReplicateMetrics,
};
use rflab_core::{SeedSchedule, Stream};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

/// Summary returned by [`run_sweep`].
#[derive(Debug)]
pub struct SweepOutcome {
    pub csv_path: PathBuf,
    pub cells_total: usize,
    pub cells_failed: usize,
    /// Cells skipped because a previous interrupted run completed them.
    pub cells_resumed: usize,
}

/// Short, stable class labels for per-cell failures recorded in the CSV.
fn error_class(e: &rflab_core::Error) -> &'static str {
    use rflab_core::Error as E;
    match e {
        E::MomentEvaluation { .. } | E::DegenerateActivation { .. } => "activation",
        E::FeatureEvaluation { .. } | E::NonFiniteInput { .. } => "nonfinite",
        E::Linalg(_) => "linalg",
        E::BranchSelection { .. } | E::SpectrumInconsistency { .. } => "spectral",
        E::InsufficientReplicates { .. } | E::InsufficientGrid { .. } => "insufficient",
        E::Divergence { .. } | E::DegenerateTeacher { .. } => "training",
        E::IdxFormat(_) | E::DatasetConsistency { .. } | E::ZeroVariance { .. } => "dataset",
        E::Config(_) => "config",
        _ => "other",
    }
}

/// Run a sweep. `workers = None` reads the `RFLAB_WORKERS` environment
/// variable (unset/0 = rayon default). Output is byte-identical for any
/// worker count and across resumed runs.
pub fn run_sweep(
    cfg: &SweepConfig,
    out_csv: &Path,
    workers: Option<usize>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let workers = match workers {
        Some(w) => w,
        None => std::env::var("RFLAB_WORKERS")
            .ok()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Config(format!("RFLAB_WORKERS={s} is not a number")))
            })
            .transpose()?
            .unwrap_or(0),
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
    let cells = cfg.cells();
    let dataset = match &cfg.dataset {
        Some(path) => Some(std::sync::Arc::new(crate::mnist::read_matrix(Path::new(
            path,
        ))?)),
        None => None,
    };

    let partial = sibling(out_csv, "partial");
    let done = sibling(out_csv, "done");
    let meta = sibling(out_csv, "meta.json");

    // Resume or fresh start.
    let (mut offset, completed) = prepare_files(cfg, &stamp.config_hash, &partial, &done, &meta)?;
    let resumed = completed;
    let pending: Vec<Cell> = cells.iter().copied().skip(completed).collect();

    let mut failed = 0usize;
    if !pending.is_empty() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let (tx, rx) = mpsc::channel::<(usize, std::result::Result<Vec<Row>, String>)>();

        let mut partial_file = OpenOptions::new()
            .append(true)
            .open(&partial)
            .map_err(|e| Error::io(partial.display(), e))?;
        let mut done_file = OpenOptions::new()
            .append(true)
            .open(&done)
            .map_err(|e| Error::io(done.display(), e))?;

        std::thread::scope(|scope| -> Result<()> {
            let cfg_ref = cfg;
            let stamp_ref = &stamp;
            let schedule_ref = &schedule;
            let dataset_ref = dataset.clone();
            let pending_ref = &pending;
            scope.spawn(move || {
                pool.install(|| {
                    use rayon::prelude::*;
                    pending_ref.par_iter().for_each_with(tx, |tx, cell| {
                        let rows = run_cell(
                            cfg_ref,
                            stamp_ref,
                            schedule_ref,
                            cell,
                            dataset_ref.as_deref(),
                        )
                        .map_err(|e| format!("{}: {e}", error_class(&e)));
                        // Receiver only disappears on writer error; nothing
                        // useful to do with the send failure here.
                        let _ = tx.send((cell.index, rows));
                    });
                });
            });

            // Single writer: reorder-buffer the completions, append in
            // ascending cell order, mark each cell durable after its bytes.
            let mut next = completed;
            let mut buffer: BTreeMap<usize, std::result::Result<Vec<Row>, String>> =
                BTreeMap::new();
            while next < cells.len() {
                let (idx, rows) = match rx.recv() {
                    Ok(v) => v,
                    Err(_) => break, // workers gone; buffer flush below
                };
                buffer.insert(idx, rows);
                while let Some(entry) = buffer.remove(&next) {
                    let rows = match entry {
                        Ok(rows) => rows,
                        Err(class_msg) => {
                            failed += 1;
                            error_rows(stamp_ref, &cells[next], &class_msg)
                        }
                    };
                    let bytes = rows_to_bytes(&rows, offset == 0)?;
                    partial_file
                        .write_all(&bytes)
                        .map_err(|e| Error::io(partial.display(), e))?;
                    partial_file
                        .flush()
                        .map_err(|e| Error::io(partial.display(), e))?;
                    offset += bytes.len() as u64;
                    writeln!(done_file, "cell={next} bytes={offset}")
                        .map_err(|e| Error::io(done.display(), e))?;
                    done_file
                        .flush()
                        .map_err(|e| Error::io(done.display(), e))?;
                    next += 1;
                }
            }
            if next < cells.len() {
                return Err(Error::Config(format!(
                    "sweep workers stopped early: {next} of {} cells written",
                    cells.len()
                )));
            }
            Ok(())
        })?;
    }

    std::fs::rename(&partial, out_csv).map_err(|e| Error::io(out_csv.display(), e))?;
    let _ = std::fs::remove_file(&done);
    let _ = std::fs::remove_file(&meta);
    Ok(SweepOutcome {
        csv_path: out_csv.to_path_buf(),
        cells_total: cells.len(),
        cells_failed: failed,
        cells_resumed: resumed,
    })
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}

/// Prepare the partial/done/meta sidecars. Returns (byte offset to resume
/// at, number of already-completed cells).
fn prepare_files(
    cfg: &SweepConfig,
    config_hash: &str,
    partial: &Path,
    done: &Path,
    meta: &Path,
) -> Result<(u64, usize)> {
    if meta.exists() && partial.exists() && done.exists() {
        let meta_text =
            std::fs::read_to_string(meta).map_err(|e| Error::io(meta.display(), e))?;
        let prev: serde_json::Value = serde_json::from_str(&meta_text)?;
        let prev_hash = prev["config_hash"].as_str().unwrap_or_default();
        if prev_hash != config_hash {
            return Err(Error::Config(format!(
                "output {} holds an interrupted sweep with a different config \
                 (hash {prev_hash} vs {config_hash}); remove its sidecar files or \
                 choose another output path",
                partial.display()
            )));
        }
        // Markers are written in ascending order: the last line tells how
        // many cells are durable and where their bytes end.
        let reader = BufReader::new(File::open(done).map_err(|e| Error::io(done.display(), e))?);
        let mut completed = 0usize;
        let mut offset = 0u64;
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io(done.display(), e))?;
            let mut cell = None;
            let mut bytes = None;
            for tok in line.split_whitespace() {
                if let Some(v) = tok.strip_prefix("cell=") {
                    cell = v.parse::<usize>().ok();
                }
                if let Some(v) = tok.strip_prefix("bytes=") {
                    bytes = v.parse::<u64>().ok();
                }
            }
            match (cell, bytes) {
                (Some(c), Some(b)) if c == completed => {
                    completed += 1;
                    offset = b;
                }
                _ => break, // torn/garbled marker line: resume before it
            }
        }
        // Drop any torn trailing record from the interrupted cell.
        let f = OpenOptions::new()
            .write(true)
            .open(partial)
            .map_err(|e| Error::io(partial.display(), e))?;
        f.set_len(offset)
            .map_err(|e| Error::io(partial.display(), e))?;
        let mut f = f;
        f.seek(SeekFrom::End(0))
            .map_err(|e| Error::io(partial.display(), e))?;
        return Ok((offset, completed));
    }
    // Fresh start: any stale sidecars are replaced atomically.
    let meta_doc = serde_json::json!({
        "config_hash": config_hash,
        "config": serde_json::from_str::<serde_json::Value>(&cfg.canonical_json()?)?,
    });
    let tmp = sibling(meta, "tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(&meta_doc)?)
        .map_err(|e| Error::io(tmp.display(), e))?;
    std::fs::rename(&tmp, meta).map_err(|e| Error::io(meta.display(), e))?;
    File::create(partial).map_err(|e| Error::io(partial.display(), e))?;
    File::create(done).map_err(|e| Error::io(done.display(), e))?;
    Ok((0, 0))
}

fn error_rows(stamp: &RowStamp, cell: &Cell, message: &str) -> Vec<Row> {
    // The error class rides in the metric name; the full message is not
    // CSV-friendly and belongs in logs.
    let class = message
        .split(':')
        .next()
        .unwrap_or("error")
        .trim()
        .replace(' ', "-");
    vec![stamp.row(
        cell.n,
        cell.p,
        None,
        "agg",
        &format!("error:{class}"),
        1.0,
    )]
}

/// Compute all rows for one cell (replicate rows + per-cell aggregates).
fn run_cell(
    cfg: &SweepConfig,
    stamp: &RowStamp,
    schedule: &SeedSchedule,
    cell: &Cell,
    dataset: Option<&Array2<f64>>,
) -> std::result::Result<Vec<Row>, rflab_core::Error> {
    match cfg.model {
        Model::Rf => rf_cell(cfg, stamp, schedule, cell, dataset),
        Model::Nn => nn_cell(cfg, stamp, schedule, cell),
    }
}

fn rf_cell(
    cfg: &SweepConfig,
    stamp: &RowStamp,
    schedule: &SeedSchedule,
    cell: &Cell,
    dataset: Option<&Array2<f64>>,
) -> std::result::Result<Vec<Row>, rflab_core::Error> {
    let problem = RFProblem {
        d: cfg.d,
        n: cell.n,
        p: cell.p,
        activation: cfg.activation_spec().map_err(map_cfg)?,
        snr: cfg.snr,
        gamma: cfg.gamma,
    };
    let mut rows = ratio_rows(stamp, cell);
    let mut agg: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for rep in 0..cfg.replicates as u64 {
        let tuple = schedule.seed_tuple(cell.index as u64, rep);
        let metrics: Vec<(&'static str, f64)> = if cfg.k_ensemble == 1 {
            let m = match dataset {
                None => rflab_core::rfcore::replicate_metrics(
                    &problem,
                    schedule,
                    cell.index as u64,
                    rep,
                    cfg.m_test,
                )?,
                Some(data) => {
                    dataset_replicate_metrics(&problem, schedule, cell.index as u64, rep, cfg.m_test, data)?
                }
            };
            vec![
                ("loss_ge", m.loss_ge),
                ("loss_mc", m.loss_mc),
                ("loss_mc_stderr", m.loss_mc_stderr),
                ("norm_a", m.norm_a),
                ("norm_b", m.norm_b),
                ("overlap", m.overlap),
                ("train_loss", m.train_loss),
            ]
        } else {
            let em = ensembled_replicate(
                &problem,
                schedule,
                cell.index as u64,
                rep,
                cfg.k_ensemble,
                cfg.m_test,
            )?;
            vec![
                ("loss_ge", em.loss_ge),
                ("loss_mc", em.loss_mc),
                ("loss_mc_stderr", em.loss_mc_stderr),
            ]
        };
        for (name, value) in metrics {
            rows.push(stamp.row(cell.n, cell.p, None, &tuple, name, value));
            agg.entry(name).or_default().push(value);
        }
    }
    push_aggregates(&mut rows, stamp, cell, None, &agg);
    Ok(rows)
}

fn map_cfg(e: Error) -> rflab_core::Error {
    rflab_core::Error::Config(e.to_string())
}

fn nn_cell(
    cfg: &SweepConfig,
    stamp: &RowStamp,
    schedule: &SeedSchedule,
    cell: &Cell,
) -> std::result::Result<Vec<Row>, rflab_core::Error> {
    let problem = cfg.nn_problem_template().map_err(map_cfg)?;
    let mut rows = ratio_rows(stamp, cell);
    // (metric, epoch) → replicate values.
    let mut agg: BTreeMap<(&'static str, usize), Vec<f64>> = BTreeMap::new();
    for rep in 0..cfg.replicates as u64 {
        let tuple = schedule.seed_tuple(cell.index as u64, rep);
        let records = rflab_core::nnsim::replicate_run(
            &problem,
            schedule,
            cell.index as u64,
            rep,
            cell.n,
            cfg.m_test,
        )?;
        for rec in records {
            rows.push(stamp.row(
                cell.n,
                cell.p,
                Some(rec.epoch),
                &tuple,
                "loss_test",
                rec.test_loss,
            ));
            rows.push(stamp.row(
                cell.n,
                cell.p,
                Some(rec.epoch),
                &tuple,
                "loss_train",
                rec.train_loss,
            ));
            agg.entry(("loss_test", rec.epoch)).or_default().push(rec.test_loss);
            agg.entry(("loss_train", rec.epoch)).or_default().push(rec.train_loss);
        }
    }
    for ((name, epoch), values) in agg {
        let a = aggregate(&values);
        rows.push(stamp.row(
            cell.n,
            cell.p,
            Some(epoch),
            "agg",
            &format!("{name}__mean"),
            a.mean,
        ));
        rows.push(stamp.row(
            cell.n,
            cell.p,
            Some(epoch),
            "agg",
            &format!("{name}__stderr"),
            a.stderr,
        ));
    }
    Ok(rows)
}

/// The requested (possibly non-integer) ratios recorded next to the rounded
/// integers each cell actually used.
fn ratio_rows(stamp: &RowStamp, cell: &Cell) -> Vec<Row> {
    vec![
        stamp.row(cell.n, cell.p, None, "agg", "n_over_d_requested", cell.n_over_d),
        stamp.row(cell.n, cell.p, None, "agg", "p_over_d_requested", cell.p_over_d),
    ]
}

fn push_aggregates(
    rows: &mut Vec<Row>,
    stamp: &RowStamp,
    cell: &Cell,
    epoch: Option<usize>,
    agg: &BTreeMap<&'static str, Vec<f64>>,
) {
    for (name, values) in agg {
        let a = aggregate(values);
        rows.push(stamp.row(cell.n, cell.p, epoch, "agg", &format!("{name}__mean"), a.mean));
        rows.push(stamp.row(
            cell.n,
            cell.p,
            epoch,
            "agg",
            &format!("{name}__stderr"),
            a.stderr,
        ));
    }
}

/// Replicate metrics with inputs drawn from dataset rows instead of
/// N(0, I_D): train rows are sampled without replacement from the Data
/// stream, test rows from the complement via the Test stream; teacher,
/// features and noise follow the standard streams. The closed-form loss is
/// reported for diagnostic continuity even though the Gaussian-equivalence
/// premise only holds approximately for real data.
pub fn dataset_replicate_metrics(
    problem: &RFProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicate: u64,
    m_test: usize,
    data: &Array2<f64>,
) -> std::result::Result<ReplicateMetrics, rflab_core::Error> {
    use rand::seq::index::sample;
    let rows_total = data.nrows();
    if data.ncols() != problem.d {
        return Err(rflab_core::Error::Config(format!(
            "dataset has D = {}, sweep wants D = {}",
            data.ncols(),
            problem.d
        )));
    }
    if rows_total < problem.n + 1 {
        return Err(rflab_core::Error::Config(format!(
            "dataset has {rows_total} rows, cell needs N = {}",
            problem.n
        )));
    }
    let mut rd = schedule.rng(cell, replicate, Stream::Data, 0);
    let train_idx: Vec<usize> = sample(&mut rd, rows_total, problem.n).into_vec();
    let x = data.select(Axis(0), &train_idx);

    let mut ri = schedule.rng(cell, replicate, Stream::Init, 0);
    let theta = normal_matrix(&mut ri, problem.p, problem.d);
    let mut rt = schedule.rng(cell, replicate, Stream::Teacher, 0);
    let beta = normal_vector(&mut rt, problem.d);
    let sqrt_d = (problem.d as f64).sqrt();
    let mut y: Array1<f64> = x.dot(&beta) / sqrt_d;
    if problem.snr.is_finite() {
        let mut rn = schedule.rng(cell, replicate, Stream::Noise, 0);
        let eps = normal_vector(&mut rn, problem.n);
        let s = problem.noise_std();
        y.zip_mut_with(&eps, |yi, ei| *yi += s * ei);
    }
    let instance = RFInstance {
        x: x.clone(),
        theta,
        beta,
        y,
    };
    let z = build_features(instance.x.view(), instance.theta.view(), &problem.activation)?;
    let sol = ridge_solve(problem, &instance, z.view())?;
    let ge = gaussian_equivalent_loss(problem, &instance, sol.a.view());

    // Held-out rows for the MC loss.
    let mut in_train = vec![false; rows_total];
    for &i in &train_idx {
        in_train[i] = true;
    }
    let pool: Vec<usize> = (0..rows_total).filter(|&i| !in_train[i]).collect();
    let take = m_test.max(1).min(pool.len());
    let mut rtest = schedule.rng(cell, replicate, Stream::Test, 0);
    let test_idx: Vec<usize> = sample(&mut rtest, pool.len(), take)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    let xt = data.select(Axis(0), &test_idx);
    let zt = build_features(xt.view(), instance.theta.view(), &problem.activation)?;
    let fhat = zt.dot(&sol.a);
    let fstar = xt.dot(&instance.beta) / sqrt_d;
    let sq = (&fhat - &fstar).mapv(|v| v * v);
    let mean = sq.mean().unwrap_or(0.0);
    let var = sq.mapv(|v| (v - mean) * (v - mean)).sum() / (take.max(2) - 1) as f64;

    Ok(ReplicateMetrics {
        loss_ge: ge.loss,
        loss_mc: mean,
        loss_mc_stderr: (var / take as f64).sqrt(),
        norm_a: sol.norm_a,
        norm_b: sol.norm_b,
        overlap: sol.overlap,
        train_loss: sol.train_loss,
    })
}
