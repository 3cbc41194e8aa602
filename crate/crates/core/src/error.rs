use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid {what}: {reason}")]
    Invariant { what: &'static str, reason: String },

    #[error("endpoint constraint violated ({constraint}): residual {residual:.3e} exceeds {tolerance:.1e}")]
    Constraint {
        constraint: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("time {t:.6e} s outside pulse support [0, {t_f:.6e}] s")]
    TimeOutOfRange { t: f64, t_f: f64 },

    #[error("sample grid too coarse: {intervals} intervals over t_f (need at least {required})")]
    GridTooCoarse { intervals: usize, required: usize },

    #[error("unknown frame '{0}'")]
    UnknownFrame(String),

    #[error("integrator step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("density matrix left the physical set at t = {t:.6e} s: {reason}")]
    Positivity { t: f64, reason: String },

    #[error("ensemble member at detuning {detuning_hz:.1} Hz failed: {source}")]
    Member {
        detuning_hz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol iteration N = {n} failed: {source}")]
    Iteration {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("division by zero fidelity at N = {0}")]
    ZeroFidelity(usize),

    #[error("peak fit failed in group {group} (peak {peak}): {reason}")]
    FitFailed {
        group: usize,
        peak: usize,
        reason: String,
    },

    #[error("total qubit population is zero")]
    ZeroPopulation,

    #[error("optimizer found no feasible point: {0}")]
    NoFeasiblePoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invariant(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invariant {
            what,
            reason: reason.into(),
        }
    }

    /// True for errors that come from numerical integration rather than input validation.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepUnderflow { .. }
            | Error::TooManySteps(_)
            | Error::Positivity { .. }
            | Error::ZeroFidelity(_)
            | Error::FitFailed { .. }
            | Error::ZeroPopulation
            | Error::NoFeasiblePoint(_) => true,
            Error::Member { source, .. } | Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
