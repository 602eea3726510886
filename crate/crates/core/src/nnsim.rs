//! Small fully connected networks trained by full-batch gradient descent.
//!
//! Architecture: D → H → H → 1 with the same activation after both hidden
//! layers and a linear output. Training minimizes the mean squared error
//! (no ½ factor) with heavy-ball momentum and optional weight decay:
//!
//! ```text
//! g ← ∇L + wd·w (weights only),   v ← mom·v + g,   w ← w − lr·v.
//! ```
//!
//! The teacher is an *untrained* ReLU network of width 100 whose output is
//! rescaled to unit variance over a fixed Gaussian probe set, so that the
//! SNR convention (noise variance = 1/SNR) matches the random-feature side.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::rfcore::{aggregate, normal_matrix, normal_vector, Aggregate};
use crate::seeds::{SeedSchedule, Stream};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One fully connected layer y = x Wᵀ + b.
#[derive(Debug, Clone)]
pub struct Layer {
    /// Weights, fan_out × fan_in.
    pub w: Array2<f64>,
    /// Biases, fan_out.
    pub b: Array1<f64>,
}

impl Layer {
    /// Initialize weights and biases Uniform(−1/√fan_in, 1/√fan_in).
    fn init(fan_out: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Layer {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
        let b = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
        Layer { w, b }
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.dim()),
        }
    }
}

/// Three-layer perceptron D → H → H → 1.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: [Layer; 3],
    pub activation: Activation,
}

/// Gradients with the same shapes as the parameters.
pub struct Gradients {
    pub layers: [Layer; 3],
}

/// Intermediate activations kept for the backward pass.
struct ForwardPass {
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    out: Array1<f64>,
}

impl Mlp {
    /// Fresh network with Uniform(±1/√fan_in) weights and biases.
    pub fn new(d: usize, h: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Mlp {
        Mlp {
            layers: [
                Layer::init(h, d, rng),
                Layer::init(h, h, rng),
                Layer::init(1, h, rng),
            ],
            activation,
        }
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    fn forward_full(&self, x: ArrayView2<f64>) -> ForwardPass {
        let a1 = x.dot(&self.layers[0].w.t()) + &self.layers[0].b;
        let h1 = a1.mapv(|v| self.activation.apply(v));
        let a2 = h1.dot(&self.layers[1].w.t()) + &self.layers[1].b;
        let h2 = a2.mapv(|v| self.activation.apply(v));
        let out = h2.dot(&self.layers[2].w.row(0)) + self.layers[2].b[0];
        ForwardPass { a1, h1, a2, h2, out }
    }

    /// Network outputs for a batch of inputs (N×D → N).
    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward_full(x).out
    }

    /// Mean squared error (1/N)‖f(X) − y‖².
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let out = self.forward(x);
        (&out - &y).mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Loss and analytic parameter gradients on a batch.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
    ) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let fp = self.forward_full(x);
        let resid = &fp.out - &y;
        let loss = resid.mapv(|v| v * v).mean().unwrap_or(0.0);
        // dL/dout = 2(out − y)/N
        let dout = resid.mapv(|v| 2.0 * v / n);
        // Output layer.
        let gw3 = fp.h2.t().dot(&dout);
        let gb3 = dout.sum();
        // Hidden layer 2.
        let w3 = self.layers[2].w.row(0);
        let mut da2 = Array2::from_shape_fn(fp.a2.dim(), |(i, j)| dout[i] * w3[j]);
        da2.zip_mut_with(&fp.a2, |g, a| *g *= self.activation.derivative(*a));
        let gw2 = da2.t().dot(&fp.h1);
        let gb2 = da2.sum_axis(Axis(0));
        // Hidden layer 1.
        let mut da1 = da2.dot(&self.layers[1].w);
        da1.zip_mut_with(&fp.a1, |g, a| *g *= self.activation.derivative(*a));
        let gw1 = da1.t().dot(&x);
        let gb1 = da1.sum_axis(Axis(0));
        let mut gw3m = Array2::zeros((1, gw3.len()));
        gw3m.row_mut(0).assign(&gw3);
        (
            loss,
            Gradients {
                layers: [
                    Layer { w: gw1, b: gb1 },
                    Layer { w: gw2, b: gb2 },
                    Layer {
                        w: gw3m,
                        b: Array1::from_elem(1, gb3),
                    },
                ],
            },
        )
    }
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 coupling applied to weight matrices (not biases).
    pub weight_decay: f64,
    /// Epochs at which to record checkpoint metrics (1-based; an epoch is
    /// one full-batch update). Values beyond `epochs` are ignored.
    pub checkpoints: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            checkpoints: vec![50, 100, 200, 500, 1000],
        }
    }
}

/// Metrics recorded at one checkpoint epoch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Test error against the *noiseless* teacher on held-out inputs.
    pub test_loss: f64,
}

/// Train in place with heavy-ball gradient descent, recording checkpoints.
/// Divergence (non-finite loss) aborts with an error naming the epoch.
pub fn train(
    mlp: &mut Mlp,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    x_test: ArrayView2<f64>,
    f_test: ArrayView1<f64>,
    cfg: &TrainConfig,
) -> Result<Vec<CheckpointRecord>> {
    let mut velocity: Vec<Layer> = mlp.layers.iter().map(|l| l.zeros_like()).collect();
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        let (loss, grads) = mlp.loss_and_gradients(x, y);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        for (li, grad) in grads.layers.iter().enumerate() {
            let v = &mut velocity[li];
            let layer = &mut mlp.layers[li];
            // v ← mom·v + (g + wd·w); w ← w − lr·v (weights)
            v.w.zip_mut_with(&grad.w, |vv, g| *vv = cfg.momentum * *vv + g);
            if cfg.weight_decay != 0.0 {
                v.w.zip_mut_with(&layer.w, |vv, w| *vv += cfg.weight_decay * w);
            }
            layer
                .w
                .zip_mut_with(&v.w, |w, vv| *w -= cfg.learning_rate * vv);
            v.b.zip_mut_with(&grad.b, |vv, g| *vv = cfg.momentum * *vv + g);
            layer
                .b
                .zip_mut_with(&v.b, |b, vv| *b -= cfg.learning_rate * vv);
        }
        if cfg.checkpoints.contains(&epoch) {
            let pred = mlp.forward(x_test);
            let test_loss = (&pred - &f_test).mapv(|v| v * v).mean().unwrap_or(0.0);
            if !test_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            records.push(CheckpointRecord {
                epoch,
                train_loss: mlp.loss(x, y),
                test_loss,
            });
        }
    }
    Ok(records)
}

/// A normalized teacher: an untrained ReLU network rescaled to unit output
/// variance over a fixed Gaussian probe set.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub net: Mlp,
    pub scale: f64,
}

impl Teacher {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.net.forward(x).mapv(|v| v * self.scale)
    }
}

/// Build the teacher from its own RNG; the probe set (100k points) is drawn
/// from the same stream so the normalization is deterministic per seed.
pub fn make_teacher(d: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<Teacher> {
    let net = Mlp::new(d, width, Activation::Relu, rng);
    let probe = normal_matrix(rng, 100_000, d);
    let out = net.forward(probe.view());
    let mean = out.mean().unwrap_or(0.0);
    let var = out.mapv(|v| (v - mean) * (v - mean)).mean().unwrap_or(0.0);
    if var < 1e-18 {
        return Err(Error::DegenerateTeacher { var });
    }
    Ok(Teacher {
        net,
        scale: 1.0 / var.sqrt(),
    })
}

/// Relative error between analytic and central finite-difference gradients
/// on `probes` random parameters per layer tensor. Returns the worst case.
pub fn gradient_check(
    mlp: &Mlp,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let h = 1e-5;
    let (_, grads) = mlp.loss_and_gradients(x, y);
    let mut worst = 0.0_f64;
    for li in 0..3 {
        for tensor in 0..2 {
            let len = if tensor == 0 {
                mlp.layers[li].w.len()
            } else {
                mlp.layers[li].b.len()
            };
            for _ in 0..probes {
                let idx = rng.random_range(0..len);
                let mut plus = mlp.clone();
                let mut minus = mlp.clone();
                {
                    let (p, m) = (&mut plus.layers[li], &mut minus.layers[li]);
                    if tensor == 0 {
                        let pw = p.w.as_slice_mut().expect("contiguous");
                        pw[idx] += h;
                        let mw = m.w.as_slice_mut().expect("contiguous");
                        mw[idx] -= h;
                    } else {
                        p.b[idx] += h;
                        m.b[idx] -= h;
                    }
                }
                let numeric = (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * h);
                let analytic = if tensor == 0 {
                    grads.layers[li].w.as_slice().expect("contiguous")[idx]
                } else {
                    grads.layers[li].b[idx]
                };
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    worst
}

/// Serializable checkpoint: JSON with shapes and flat row-major arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub d: usize,
    pub h: usize,
    pub activation: String,
    pub epoch: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn to_checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint {
            schema: "mlp-checkpoint-v1".into(),
            d: self.layers[0].w.ncols(),
            h: self.layers[0].w.nrows(),
            activation: self.activation.token(),
            epoch,
            weights: self
                .layers
                .iter()
                .map(|l| l.w.iter().copied().collect())
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| l.b.iter().copied().collect())
                .collect(),
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Mlp> {
        if cp.schema != "mlp-checkpoint-v1" {
            return Err(Error::Config(format!(
                "unknown checkpoint schema '{}'",
                cp.schema
            )));
        }
        let activation = Activation::from_token(&cp.activation)?;
        let (d, h) = (cp.d, cp.h);
        let shapes = [(h, d), (h, h), (1, h)];
        let mut layers = Vec::with_capacity(3);
        for (i, (rows, cols)) in shapes.iter().enumerate() {
            let w = Array2::from_shape_vec((*rows, *cols), cp.weights[i].clone())
                .map_err(|e| Error::Config(format!("checkpoint weight shape: {e}")))?;
            let b = Array1::from_vec(cp.biases[i].clone());
            if b.len() != *rows {
                return Err(Error::Config("checkpoint bias shape mismatch".into()));
            }
            layers.push(Layer { w, b });
        }
        Ok(Mlp {
            layers: layers
                .try_into()
                .map_err(|_| Error::Config("expected 3 layers".into()))?,
            activation,
        })
    }
}

/// Problem template for network sample-wise profiles.
#[derive(Debug, Clone)]
pub struct NNProblem {
    pub d: usize,
    /// Hidden width of the student.
    pub h: usize,
    pub student_activation: Activation,
    pub teacher_width: usize,
    pub snr: f64,
    pub train: TrainConfig,
}

impl NNProblem {
    /// Trainable parameter count of the student (interpolation threshold).
    pub fn param_count(&self) -> usize {
        let (d, h) = (self.d, self.h);
        (d * h + h) + (h * h + h) + (h + 1)
    }
}

/// One profile point: per-checkpoint aggregates at a given N.
#[derive(Debug, Clone)]
pub struct NNProfilePoint {
    pub n: usize,
    pub cell: u64,
    /// (epoch, test-loss aggregate, train-loss aggregate).
    pub checkpoints: Vec<(usize, Aggregate, Aggregate)>,
}

/// Run one (cell, replicate): sample teacher/data/init from the seed
/// schedule, train, and return checkpoint records.
pub fn replicate_run(
    problem: &NNProblem,
    schedule: &SeedSchedule,
    cell: u64,
    replicate: u64,
    n: usize,
    m_test: usize,
) -> Result<Vec<CheckpointRecord>> {
    let mut rt = schedule.rng(cell, replicate, Stream::Teacher, 0);
    let teacher = make_teacher(problem.d, problem.teacher_width, &mut rt)?;
    let mut rd = schedule.rng(cell, replicate, Stream::Data, 0);
    let x = normal_matrix(&mut rd, n, problem.d);
    let mut y = teacher.predict(x.view());
    if problem.snr.is_finite() {
        let mut rn = schedule.rng(cell, replicate, Stream::Noise, 0);
        let eps = normal_vector(&mut rn, n);
        let s = (1.0 / problem.snr).sqrt();
        y.zip_mut_with(&eps, |yi, ei| *yi += s * ei);
    }
    let mut rtest = schedule.rng(cell, replicate, Stream::Test, 0);
    let x_test = normal_matrix(&mut rtest, m_test, problem.d);
    let f_test = teacher.predict(x_test.view());
    let mut ri = schedule.rng(cell, replicate, Stream::Init, 0);
    let mut student = Mlp::new(
        problem.d,
        problem.h,
        problem.student_activation.clone(),
        &mut ri,
    );
    train(
        &mut student,
        x.view(),
        y.view(),
        x_test.view(),
        f_test.view(),
        &problem.train,
    )
}

/// Sample-wise profile of the network test loss over an N grid, averaged
/// over replicates, resolved per checkpoint epoch.
pub fn nn_profile(
    problem: &NNProblem,
    n_grid: &[usize],
    replicates: usize,
    m_test: usize,
    schedule: &SeedSchedule,
) -> Result<Vec<NNProfilePoint>> {
    let jobs: Vec<(usize, usize)> = (0..n_grid.len())
        .flat_map(|ci| (0..replicates).map(move |rep| (ci, rep)))
        .collect();
    let runs: Vec<Result<(usize, usize, Vec<CheckpointRecord>)>> = jobs
        .into_par_iter()
        .map(|(ci, rep)| {
            let recs = replicate_run(
                problem,
                schedule,
                ci as u64,
                rep as u64,
                n_grid[ci],
                m_test,
            )?;
            Ok((ci, rep, recs))
        })
        .collect();
    let mut per_cell: Vec<Vec<Option<Vec<CheckpointRecord>>>> =
        vec![vec![None; replicates]; n_grid.len()];
    for r in runs {
        let (ci, rep, recs) = r?;
        per_cell[ci][rep] = Some(recs);
    }
    let mut out = Vec::with_capacity(n_grid.len());
    for (ci, reps) in per_cell.into_iter().enumerate() {
        let reps: Vec<Vec<CheckpointRecord>> = reps.into_iter().map(|r| r.unwrap()).collect();
        let epochs: Vec<usize> = reps[0].iter().map(|r| r.epoch).collect();
        let mut checkpoints = Vec::with_capacity(epochs.len());
        for (ei, &epoch) in epochs.iter().enumerate() {
            let test: Vec<f64> = reps.iter().map(|r| r[ei].test_loss).collect();
            let train_l: Vec<f64> = reps.iter().map(|r| r[ei].train_loss).collect();
            checkpoints.push((epoch, aggregate(&test), aggregate(&train_l)));
        }
        out.push(NNProfilePoint {
            n: n_grid[ci],
            cell: ci as u64,
            checkpoints,
        });
    }
    Ok(out)
}
