use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid axis {0} has no interior node")]
    NoInteriorNode(usize),

    #[error("band width {delta} outside (0, {max})")]
    InvalidDelta { delta: f64, max: f64 },

    #[error("interior band at width {0} contains no nodes")]
    EmptyBand(f64),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("field diverged at t = {t:.6} (max |u| = {max_abs:.3e})")]
    Diverged { t: f64, max_abs: f64 },

    #[error("timestep degenerate or non-finite: {0:.3e}")]
    DegenerateTimestep(f64),

    #[error("no steady state by t = {t:.3} (probe drift {drift:.3e} per unit time)")]
    TimedOut { t: f64, drift: f64 },

    #[error("discount ladder did not settle to requested tolerance")]
    NonCauchy,

    #[error("found {found} usable samples, need at least {need}")]
    InsufficientSamples { found: usize, need: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no sign change bracketed up to {0}")]
    NoBracket(f64),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
