use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value {value} at node {coords:?}")]
    NonFinite { coords: Vec<f64>, value: f64 },

    #[error("node {0} is not interior")]
    NotInterior(usize),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("phase at branch: |Im det| = {im:.3e} relative to |det| = {abs:.3e}")]
    PhaseAtBranch { im: f64, abs: f64 },

    #[error("phase {theta} outside (0, pi) at node {coords:?}")]
    PhaseBranch { coords: Vec<f64>, theta: f64 },

    #[error("eigen decomposition did not converge after {0} sweeps")]
    EigenFailure(usize),

    #[error("stability collapse at t = {t}: {rejections} consecutive step rejections")]
    StabilityCollapse { t: f64, rejections: usize },

    #[error("invariant violation at t = {t}: {detail}")]
    Invariant { t: f64, detail: String },

    #[error("linear solver did not converge: {0}")]
    LinearSolver(String),

    #[error("Newton stall at iteration {iteration}: damping fell below {min_damping:e} (residual {residual:.3e})")]
    NewtonStall {
        iteration: usize,
        residual: f64,
        min_damping: f64,
    },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("snapshot error at offset {offset}: {msg}")]
    Snapshot { offset: usize, msg: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures of the numerical scheme itself (as opposed to bad
    /// input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::PhaseAtBranch { .. }
                | Error::PhaseBranch { .. }
                | Error::EigenFailure(_)
                | Error::StabilityCollapse { .. }
                | Error::LinearSolver(_)
                | Error::NewtonStall { .. }
                | Error::NotHermitian(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
