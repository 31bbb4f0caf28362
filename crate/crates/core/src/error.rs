use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid too coarse: L_{m} integrates to {integral} (tolerance 1e-4)")]
    Resolution { m: usize, integral: f64 },

    #[error("{what} = {value} lies outside the grid horizon {t_max}")]
    Range {
        what: &'static str,
        value: f64,
        t_max: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("coincidence approximation violated: P_coinc = {0} >= 1")]
    ApproximationViolated(f64),

    #[error("transition row `{row}` sums to {sum}")]
    ModelConsistency { row: String, sum: f64 },

    #[error("insufficient data: {got} outcomes, need at least {need}")]
    InsufficientData { got: u64, need: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
