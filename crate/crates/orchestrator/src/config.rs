//! Sweep configuration: a single JSON document with a documented schema.
//! CLI flags override individual fields; `--dump-config` prints the fully
//! resolved document. The sha-256 hash of the canonical (compact) JSON is
//! the provenance `config_hash` carried by every output row.

use crate::{Error, Result};
use rflab_core::activation::Activation;
use rflab_core::nnsim::{NNProblem, TrainConfig};
use rflab_core::rfcore::RFProblem;
use rflab_core::ActivationSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which model family a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Rf,
    Nn,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Rf => write!(f, "rf"),
            Model::Nn => write!(f, "nn"),
        }
    }
}

/// Neural-network block of the config (required when `model = "nn"`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnConfig {
    /// Hidden width of the 3-layer student.
    pub hidden: usize,
    /// Hidden width of the fixed teacher.
    pub teacher_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which metrics are recorded (1-based full-batch updates).
    pub checkpoints: Vec<usize>,
}

impl Default for NnConfig {
    fn default() -> Self {
        NnConfig {
            hidden: 10,
            teacher_width: 100,
            epochs: 1000,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            checkpoints: vec![50, 100, 200, 500, 1000],
        }
    }
}

/// JSON serialization for SNR that survives SNR = ∞ (JSON has no infinity
/// literal): numbers pass through, the string "inf" means noiseless.
mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "snr must be a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

fn default_k() -> usize {
    1
}
fn default_m_test() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}

/// The sweep grid and experiment parameters. `n_over_d` (and `p_over_d` for
/// RF) are explicit ratio vectors; implied sizes are rounded per cell as
/// N = round(D·(N/D)), P = round(D·(P/D)) and the requested ratios are
/// recorded in the output next to the integers actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment_id: String,
    pub model: Model,
    pub d: usize,
    pub n_over_d: Vec<f64>,
    /// RF only; each entry spawns a row of cells. NN derives P from the
    /// architecture instead.
    #[serde(default)]
    pub p_over_d: Vec<f64>,
    /// Activation token: linear | relu | abs | tanh | pwl:<alpha>.
    pub activation: String,
    /// Signal-to-noise ratio; label noise variance is 1/SNR ("inf" = none).
    #[serde(with = "snr_serde", default = "default_seed_snr")]
    pub snr: f64,
    /// Ridge coefficient γ (the solver applies λ = Pγ/D). RF only.
    #[serde(default)]
    pub gamma: f64,
    /// Ensemble size K (prediction averaging over K feature draws).
    #[serde(default = "default_k")]
    pub k_ensemble: usize,
    pub replicates: usize,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub nn: Option<NnConfig>,
    /// Optional path to an ingested dataset (see `mnist`); inputs are then
    /// drawn from its rows instead of N(0, I_D).
    #[serde(default)]
    pub dataset: Option<String>,
}

fn default_seed_snr() -> f64 {
    f64::INFINITY
}

/// One grid cell after rounding.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub n_over_d: f64,
    pub p_over_d: f64,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return Err(Error::Config("experiment_id must be nonempty".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be ≥ 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be ≥ 1".into()));
        }
        if self.k_ensemble == 0 {
            return Err(Error::Config("k_ensemble must be ≥ 1".into()));
        }
        if self.n_over_d.is_empty() {
            return Err(Error::Config("n_over_d must be nonempty".into()));
        }
        for &v in self.n_over_d.iter().chain(self.p_over_d.iter()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("grid ratio {v} must be positive")));
            }
        }
        if self.snr <= 0.0 {
            return Err(Error::Config("snr must be positive (or \"inf\")".into()));
        }
        Activation::from_token(&self.activation)
            .map_err(|e| Error::Config(format!("activation: {e}")))?;
        match self.model {
            Model::Rf => {
                if self.p_over_d.is_empty() {
                    return Err(Error::Config("rf sweeps need a nonempty p_over_d".into()));
                }
                if self.gamma < 0.0 {
                    return Err(Error::Config("gamma must be ≥ 0".into()));
                }
            }
            Model::Nn => {
                let nn = self
                    .nn
                    .as_ref()
                    .ok_or_else(|| Error::Config("nn sweeps need an \"nn\" block".into()))?;
                if nn.hidden == 0 || nn.teacher_width == 0 || nn.epochs == 0 {
                    return Err(Error::Config(
                        "nn.hidden, nn.teacher_width, nn.epochs must be ≥ 1".into(),
                    ));
                }
                if self.dataset.is_some() {
                    return Err(Error::Config("dataset inputs are RF-only".into()));
                }
            }
        }
        Ok(())
    }

    pub fn activation_spec(&self) -> Result<ActivationSpec> {
        Ok(ActivationSpec::from_token(&self.activation)?)
    }

    /// Cells in deterministic order: P/D major, N/D minor (NN has a single
    /// implicit P/D row). The cell index is the seed-schedule cell id.
    pub fn cells(&self) -> Vec<Cell> {
        let d = self.d as f64;
        let round = |ratio: f64| ((d * ratio).round() as usize).max(1);
        match self.model {
            Model::Rf => {
                let mut out = Vec::with_capacity(self.p_over_d.len() * self.n_over_d.len());
                for (pi, &pd) in self.p_over_d.iter().enumerate() {
                    for (ni, &nd) in self.n_over_d.iter().enumerate() {
                        out.push(Cell {
                            index: pi * self.n_over_d.len() + ni,
                            n: round(nd),
                            p: round(pd),
                            n_over_d: nd,
                            p_over_d: pd,
                        });
                    }
                }
                out
            }
            Model::Nn => {
                let p = self.nn_problem_template().map(|t| t.param_count());
                let p = p.unwrap_or(0);
                self.n_over_d
                    .iter()
                    .enumerate()
                    .map(|(ni, &nd)| Cell {
                        index: ni,
                        n: round(nd),
                        p,
                        n_over_d: nd,
                        p_over_d: p as f64 / d,
                    })
                    .collect()
            }
        }
    }

    /// RF problem for one cell.
    pub fn rf_problem(&self, cell: &Cell) -> Result<RFProblem> {
        Ok(RFProblem {
            d: self.d,
            n: cell.n,
            p: cell.p,
            activation: self.activation_spec()?,
            snr: self.snr,
            gamma: self.gamma,
        })
    }

    /// NN problem template (N varies per cell).
    pub fn nn_problem_template(&self) -> Result<NNProblem> {
        let nn = self
            .nn
            .as_ref()
            .ok_or_else(|| Error::Config("missing nn block".into()))?;
        Ok(NNProblem {
            d: self.d,
            h: nn.hidden,
            student_activation: Activation::from_token(&self.activation)?,
            teacher_width: nn.teacher_width,
            snr: self.snr,
            train: TrainConfig {
                epochs: nn.epochs,
                learning_rate: nn.learning_rate,
                momentum: nn.momentum,
                weight_decay: nn.weight_decay,
                checkpoints: nn.checkpoints.clone(),
            },
        })
    }

    /// Canonical compact JSON (field order fixed by the struct definition).
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn pretty_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// First 16 hex chars of sha-256 over the canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_json()?.as_bytes());
        let digest = h.finalize();
        Ok(hex_prefix(&digest, 16))
    }
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// log₁₀-spaced ratio grid: `count` points from 10^lo_dex in steps of
/// `step_dex`. The standard profile grid is `logspace_dex(-0.6, 0.1, 25)`
/// (hits N = D and N = 10·D exactly).
pub fn logspace_dex(lo_dex: f64, step_dex: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| 10f64.powf(lo_dex + step_dex * k as f64))
        .collect()
}
