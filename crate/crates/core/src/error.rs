use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Each variant maps to a
/// module-qualified code (see [`Error::code`]) so the command-line front end
/// can emit a single machine-parsable line.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {index} has zero variance")]
    ZeroVarianceColumn { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("fewer than two strictly positive weights")]
    DegenerateWeights,

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("{what} = {value} out of range: {reason}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        reason: String,
    },

    #[error("cannot select {requested} items: only {eligible} are eligible")]
    InfeasibleSize { requested: usize, eligible: usize },

    #[error("calibration system is singular (rank {rank} of {dim})")]
    SingularSystem { rank: usize, dim: usize },

    #[error("mean of g-weights is zero")]
    ZeroMean,

    #[error("all {iterations} bagging iterations failed")]
    AllIterationsFailed { iterations: usize },

    #[error("population total is zero")]
    ZeroTotal,

    #[error("at least {required} runs are needed, got {got}")]
    InsufficientRuns { required: usize, got: usize },

    #[error("synthetic population misses its targets: {0}")]
    InfeasibleSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Module-qualified error code, e.g. `calibration.singular_system`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroVarianceColumn { .. } => "matrixops.zero_variance_column",
            Error::DimensionMismatch { .. } => "matrixops.dimension_mismatch",
            Error::DegenerateWeights => "matrixops.degenerate_weights",
            Error::NotSymmetric { .. } => "matrixops.not_symmetric",
            Error::NoConvergence { .. } => "matrixops.no_convergence",
            Error::OutOfRange { .. } => "pca.out_of_range",
            Error::InfeasibleSize { .. } => "varsampling.infeasible_size",
            Error::SingularSystem { .. } => "calibration.singular_system",
            Error::ZeroMean => "calibration.zero_mean",
            Error::AllIterationsFailed { .. } => "bagcal.all_iterations_failed",
            Error::ZeroTotal => "simulation.zero_total",
            Error::InsufficientRuns { .. } => "simulation.insufficient_runs",
            Error::InfeasibleSpec(_) => "simulation.infeasible_spec",
            Error::InvalidConfig(_) => "config.invalid",
        }
    }

    pub(crate) fn out_of_range(what: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            value,
            reason: reason.into(),
        }
    }
}
