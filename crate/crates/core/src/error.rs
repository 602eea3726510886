//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An activation evaluator produced a non-finite value at a quadrature node.
    #[error("activation evaluation produced a non-finite value at z = {z}")]
    MomentEvaluation { z: f64 },

    /// Activation has (numerically) zero second Gaussian moment.
    #[error("degenerate activation: second Gaussian moment {eta} below tolerance")]
    DegenerateActivation { eta: f64 },

    /// A feature matrix entry came out non-finite.
    #[error("non-finite feature value at row {row}, column {col}")]
    FeatureEvaluation { row: usize, col: usize },

    /// Input vector/matrix contained a non-finite entry.
    #[error("non-finite input: {what}")]
    NonFiniteInput { what: &'static str },

    /// LAPACK / linear-algebra backend failure.
    #[error("linear algebra error: {0}")]
    Linalg(String),

    /// No root of the resolvent equation lies on the physical branch.
    #[error(
        "branch selection failed at lambda = {lambda:.6e}: no root with residual < {tol:.1e} \
         and nonnegative Im G; roots = {roots:?}"
    )]
    BranchSelection {
        lambda: f64,
        tol: f64,
        roots: Vec<(f64, f64)>,
    },

    /// The analytic spectrum failed its normalization invariant.
    #[error("spectrum inconsistency: integral + atom = {total} deviates from 1 by more than {tol}")]
    SpectrumInconsistency { total: f64, tol: f64 },

    /// Too few replicates for a variance estimate.
    #[error("insufficient replicates: {source_name} has {got}, need at least {need}")]
    InsufficientReplicates {
        source_name: &'static str,
        got: usize,
        need: usize,
    },

    /// Peak detection requires a minimum grid size.
    #[error("insufficient grid: {got} points, need at least {need} spanning N = D and N = P")]
    InsufficientGrid { got: usize, need: usize },

    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    /// Teacher network has (numerically) zero output variance.
    #[error("degenerate teacher: probe variance {var} below tolerance; re-seed")]
    DegenerateTeacher { var: f64 },

    /// IDX dataset parsing problems.
    #[error("IDX format error: {0}")]
    IdxFormat(String),

    /// Images/labels disagree on the number of records.
    #[error("dataset consistency error: {images} images vs {labels} labels")]
    DatasetConsistency { images: usize, labels: usize },

    /// Standardization impossible (zero variance).
    #[error("zero-variance data: global standard deviation {std} below tolerance")]
    ZeroVariance { std: f64 },

    /// Configuration problems (bad field values, unknown names).
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem / IO.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
