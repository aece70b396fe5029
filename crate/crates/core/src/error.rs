use thiserror::Error;

/// A device or solver parameter violates its invariant.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: String,
    pub reason: String,
}

impl ParamError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SllgError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("magnetization became non-finite at step {step} (t = {time:e} s)")]
    NonFinite { step: u64, time: f64 },
    #[error("{failed} of {total} trajectories did not settle within t_max (first: #{first})")]
    NotConverged { failed: usize, total: usize, first: usize },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} samples to fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no linear window: {0}")]
    NoLinearWindow(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MultiplierError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("input amplitude {value:e} V exceeds the {limit:e} V cap")]
    AmplitudeTooLarge { value: f64, limit: f64 },
    #[error("gate voltage {v_gate:.4} V outside the linear window [{lo:.4}, {hi:.4}] V")]
    OutOfWindow { v_gate: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sllg(#[from] SllgError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(
        "matrix size {n} exceeds N_max = {n_max} (synapse length {length_nm:.0} nm / \
         {step_nm:.0} nm per full-scale pulse)"
    )]
    TooLarge { n: usize, n_max: usize, length_nm: f64, step_nm: f64 },
    #[error("integer {value} at ({row}, {col}) outside encodable range [{min}, {max}]")]
    OutOfRange { value: i64, row: usize, col: usize, min: i64, max: i64 },
    #[error("matrix parse error: {0}")]
    Parse(String),
    #[error("nonvolatility violated: {0}")]
    Nonvolatility(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error in `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sllg(#[from] SllgError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
