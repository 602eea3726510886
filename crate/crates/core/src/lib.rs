//! Numerical laboratory for sample-wise double and triple descent in
//! random-feature ridge regression and small neural networks.
//!
//! The library is organized around the quantities that control the
//! phenomenon:
//!
//! * [`activation`] — activation functions and their Gaussian moments
//!   η = E[σ(z)²], ζ = (E[σ′(z)])², and the degree of linearity r = ζ/η;
//! * [`rfcore`] — random-feature instances, the exact SVD-filtered ridge
//!   solver, Monte-Carlo and Gaussian-equivalence test losses, and
//!   sample-wise profiles;
//! * [`spectral`] — the eigenvalue density of the feature Gram matrix
//!   Σ = ZᵀZ/N, both analytic (implicit resolvent equation with branch
//!   tracking) and empirical, with spectral gaps and the linear/nonlinear
//!   component split;
//! * [`biasvar`] — Monte-Carlo decomposition of the test loss into bias²
//!   plus initialization, noise, and sampling variances over a seed
//!   lattice, and prediction ensembling;
//! * [`nnsim`] — a from-scratch teacher–student multilayer perceptron
//!   trained by full-batch gradient descent with momentum and weight decay;
//! * [`seeds`] — deterministic derivation of every RNG stream from a master
//!   seed, so results are bit-identical across runs and worker counts.

// Link an optimized BLAS for ndarray's matrix products (ndarray-linalg
// already links LAPACK through the same OpenBLAS build).
use blas_src as _;

pub mod activation;
pub mod biasvar;
pub mod error;
pub mod nnsim;
pub mod rfcore;
pub mod seeds;
pub mod spectral;

pub use activation::{Activation, ActivationSpec};
pub use error::{Error, Result};
pub use seeds::{SeedSchedule, Stream};
