//! Named experiment recipes: fully resolved desk-scale sweep configs for
//! the standard figures. Each recipe expands to one or more labeled
//! [`SweepConfig`]s; running them produces the CSVs behind the figures.
//!
//! Desk scale means: grids and replicate counts sized for a workstation
//! (minutes to tens of minutes), preserving every qualitative feature —
//! landmark peaks, spectra, bias–variance structure — of the full-size
//! experiments.

use crate::config::{Model, NnConfig, SweepConfig};
use crate::{Error, Result};

pub const RECIPE_NAMES: [&str; 10] = [
    "fig3_rf_low_snr",
    "fig3_rf_high_snr",
    "fig4_spectra",
    "fig5_spectra_r",
    "fig5bv_biasvar",
    "fig6_nonlinearities",
    "fig7_nn_reg",
    "fig8_dynamics",
    "fig9_norms",
    "appC_mnist",
];

/// The standard sample-wise grid: N/D = 10^(−0.6 + 0.1k), k = 0..24,
/// bracketing N = D (k = 6) and reaching N/D ≈ 63.
fn standard_n_grid() -> Vec<f64> {
    crate::config::logspace_dex(-0.6, 0.1, 25)
}

/// Coarser grid for two-axis phase-space sweeps.
fn phase_grid() -> Vec<f64> {
    crate::config::logspace_dex(-0.6, 0.2, 13)
}

fn rf_base(id: &str, seed: u64) -> SweepConfig {
    SweepConfig {
        experiment_id: id.into(),
        model: Model::Rf,
        d: 100,
        n_over_d: standard_n_grid(),
        p_over_d: vec![10.0],
        activation: "tanh".into(),
        snr: 0.2,
        gamma: 1e-3,
        k_ensemble: 1,
        replicates: 10,
        m_test: 10_000,
        master_seed: seed,
        nn: None,
        dataset: None,
    }
}

fn nn_base(id: &str, seed: u64) -> SweepConfig {
    SweepConfig {
        experiment_id: id.into(),
        model: Model::Nn,
        d: 49,
        // Landmark grid bracketing both N = D (49) and N = P (621 for the
        // default width-10 student counting biases).
        n_over_d: crate::config::logspace_dex(-0.4, 0.1, 25),
        p_over_d: vec![],
        activation: "tanh".into(),
        snr: 0.2,
        gamma: 0.0,
        k_ensemble: 1,
        replicates: 10,
        m_test: 10_000,
        master_seed: seed,
        nn: Some(NnConfig::default()),
        dataset: None,
    }
}

/// Expand a recipe name into labeled, fully resolved sweep configs.
pub fn recipe(name: &str) -> Result<Vec<(String, SweepConfig)>> {
    let configs = match name {
        // Phase-space sweeps over the full (P, N) plane; desk scale keeps
        // a coarse 13×13 grid.
        "fig3_rf_low_snr" | "fig3_rf_high_snr" => {
            let snr = if name == "fig3_rf_low_snr" { 0.2 } else { 2.0 };
            let mut cfg = rf_base(name, 301);
            cfg.n_over_d = phase_grid();
            cfg.p_over_d = phase_grid();
            cfg.snr = snr;
            cfg.gamma = 1e-1;
            cfg.replicates = 5;
            vec![("rf".to_string(), cfg)]
        }
        // Spectra figure: loss profile whose cells the `spectrum`
        // subcommand can be pointed at; tiny ridge so the nonlinear peak
        // and the closing spectral gap stay sharp.
        "fig4_spectra" => {
            let mut cfg = rf_base(name, 304);
            cfg.gamma = 1e-5;
            vec![("tanh".to_string(), cfg)]
        }
        // Spectra versus degree of linearity r: purely nonlinear (abs),
        // intermediate (tanh), purely linear.
        "fig5_spectra_r" => ["abs", "tanh", "linear"]
            .iter()
            .map(|act| {
                let mut cfg = rf_base(&format!("{name}__{act}"), 305);
                cfg.activation = (*act).into();
                cfg.gamma = 1e-5;
                (act.to_string(), cfg)
            })
            .collect(),
        // Bias–variance panels: vanilla / noiseless / ensembling /
        // regularizing, ReLU. Desk scale P/D = 20 (the full figure uses
        // P/D = 100); the `biasvar` subcommand decomposes the same cells.
        "fig5bv_biasvar" => {
            let base = |label: &str| {
                let mut cfg = rf_base(&format!("{name}__{label}"), 355);
                cfg.activation = "relu".into();
                cfg.d = 50;
                cfg.p_over_d = vec![20.0];
                cfg.gamma = 1e-5;
                cfg
            };
            let vanilla = base("vanilla");
            let mut noiseless = base("noiseless");
            noiseless.snr = f64::INFINITY;
            let mut ensembling = base("ensembling");
            ensembling.k_ensemble = 10;
            let mut regularizing = base("regularizing");
            regularizing.gamma = 1e-3;
            vec![
                ("vanilla".to_string(), vanilla),
                ("noiseless".to_string(), noiseless),
                ("ensembling".to_string(), ensembling),
                ("regularizing".to_string(), regularizing),
            ]
        }
        // Nonlinearity sweep: four activations, shared settings.
        "fig6_nonlinearities" => ["abs", "relu", "tanh", "linear"]
            .iter()
            .map(|act| {
                let mut cfg = rf_base(&format!("{name}__{act}"), 306);
                cfg.activation = (*act).into();
                (act.to_string(), cfg)
            })
            .collect(),
        // NN regularization: vanilla versus weight decay. (The ensembling
        // panel of the figure averages independent students; sweeps here
        // cover the single-student panels.)
        "fig7_nn_reg" => {
            let vanilla = nn_base(&format!("{name}__vanilla"), 307);
            let mut reg = nn_base(&format!("{name}__decay"), 307);
            if let Some(nn) = reg.nn.as_mut() {
                nn.weight_decay = 0.05;
            }
            vec![
                ("vanilla".to_string(), vanilla),
                ("decay".to_string(), reg),
            ]
        }
        // Training dynamics: checkpointed profiles for Tanh and ReLU
        // students with weight decay 0.05.
        "fig8_dynamics" => ["tanh", "relu"]
            .iter()
            .map(|act| {
                let mut cfg = nn_base(&format!("{name}__{act}"), 308);
                cfg.activation = (*act).into();
                if let Some(nn) = cfg.nn.as_mut() {
                    nn.weight_decay = 0.05;
                }
                (act.to_string(), cfg)
            })
            .collect(),
        // Norm/overlap profiles (already recorded on every RF sweep row).
        "fig9_norms" => {
            let mut cfg = rf_base(name, 309);
            cfg.gamma = 1e-1;
            vec![("rf".to_string(), cfg)]
        }
        // MNIST inputs: run `ingest-mnist --side 10` first and point the
        // dataset field at its output (CLI: --dataset overrides).
        "appC_mnist" => {
            let mut cfg = rf_base(name, 310);
            cfg.gamma = 1e-5;
            cfg.dataset = Some("mnist-d100.mat".into());
            vec![("mnist".to_string(), cfg)]
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown recipe {name:?}; valid names: {}",
                RECIPE_NAMES.join(", ")
            )))
        }
    };
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_recipe_names_expand_and_validate() {
        for name in RECIPE_NAMES {
            let expansion = recipe(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!expansion.is_empty());
            for (label, cfg) in &expansion {
                // appC_mnist points at a dataset that exists only after
                // ingestion, which validate() does not check; everything
                // else must be runnable as-is.
                cfg.validate()
                    .unwrap_or_else(|e| panic!("{name}/{label}: {e}"));
            }
        }
    }

    #[test]
    fn unknown_recipe_lists_valid_names() {
        let err = recipe("fig99").unwrap_err();
        let msg = err.to_string();
        for name in RECIPE_NAMES {
            assert!(msg.contains(name), "error should list {name}: {msg}");
        }
    }

    #[test]
    fn fig6_matches_the_pinned_settings() {
        let expansion = recipe("fig6_nonlinearities").unwrap();
        let labels: Vec<&str> = expansion.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["abs", "relu", "tanh", "linear"]);
        for (_, cfg) in &expansion {
            assert_eq!(cfg.d, 100);
            assert_eq!(cfg.p_over_d, vec![10.0]);
            assert_eq!(cfg.snr, 0.2);
            assert_eq!(cfg.gamma, 1e-3);
            assert_eq!(cfg.replicates, 10);
        }
    }

    #[test]
    fn fig4_uses_small_ridge() {
        let expansion = recipe("fig4_spectra").unwrap();
        assert_eq!(expansion[0].1.gamma, 1e-5);
        assert_eq!(expansion[0].1.snr, 0.2);
        assert_eq!(expansion[0].1.activation, "tanh");
    }

    #[test]
    fn nn_recipes_bracket_both_landmarks() {
        for name in ["fig7_nn_reg", "fig8_dynamics"] {
            for (label, cfg) in recipe(name).unwrap() {
                let p = cfg.nn_problem_template().unwrap().param_count();
                let d = cfg.d;
                let n_min = (d as f64 * cfg.n_over_d[0]).round() as usize;
                let n_max =
                    (d as f64 * cfg.n_over_d.last().unwrap()).round() as usize;
                assert!(n_min <= d && d <= n_max, "{name}/{label}: D outside grid");
                assert!(n_min <= p && p <= n_max, "{name}/{label}: P outside grid");
            }
        }
    }
}
