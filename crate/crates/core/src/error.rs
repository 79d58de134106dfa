use thiserror::Error;

/// Errors raised by the library. Every fallible operation returns one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The composed gain is not below one. `margin` is `1 - composed` (so `<= 0`),
    /// or the natural-unit margin of the failing region inequality.
    #[error("small-gain condition violated: {condition} (margin {margin})")]
    SmallGain { condition: String, margin: f64 },

    #[error("non-finite derivative in component {component} at t = {t}")]
    Numeric { component: usize, t: f64 },

    #[error("leader input peak {peak} exceeds the certified bound {bound}")]
    CertifiedRegime { peak: f64, bound: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
