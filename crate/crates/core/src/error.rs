use thiserror::Error;

/// A broken parameter invariant: which type, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{type_name}: {rule}")]
pub struct Violation {
    pub type_name: &'static str,
    pub rule: &'static str,
}

impl Violation {
    pub fn new(type_name: &'static str, rule: &'static str) -> Self {
        Self { type_name, rule }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    Invalid(Violation),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("self-consistency residual is not finite at f_qd = {f_qd} GHz")]
    NonFiniteResidual { f_qd: f64 },
    #[error("no self-consistent QD frequency in [{lo}, {hi}] GHz (residual has no sign change)")]
    NoRoot { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(&'static str),
    #[error("solver failed at f_laser = {f_laser} GHz: {source}")]
    Solver {
        f_laser: f64,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("spectra are sampled on different frequency grids")]
    GridMismatch,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChargeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid pump schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("invalid time grid: {0}")]
    InvalidGrid(&'static str),
    #[error("integration became unstable at t = {t} (q = {q}); use a step smaller than {step}")]
    Unstable { t: f64, q: f64, step: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("power-law fit needs strictly positive data (offending index {index})")]
    NonPositive { index: usize },
    #[error("power-law fit needs at least two distinct abscissae")]
    Degenerate,
}
