use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tone at {frequency_hz} Hz aliases at sample rate {sample_rate} Hz")]
    Aliasing { frequency_hz: f64, sample_rate: f64 },

    #[error("signal has zero energy")]
    ZeroEnergy,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("round-trip delay of {delay_samples:.3} samples plus a {pulse_len}-sample pulse exceeds the {window_len}-sample receive window")]
    DelayExceedsWindow {
        delay_samples: f64,
        pulse_len: usize,
        window_len: usize,
    },

    #[error("disambiguation failed: nearest two-tone peak is {distance_s:.3e} s from the coarse lag (half lobe spacing {half_spacing_s:.3e} s)")]
    DisambiguationFailure { distance_s: f64, half_spacing_s: f64 },

    #[error("expected {expected} range estimates, got {got}")]
    WindowSize { expected: usize, got: usize },

    #[error("controller input is not a number")]
    NanInput,

    #[error("no grid gain produced a sustained oscillation")]
    NoOscillation,

    #[error("unsupported coherence probability {0}")]
    UnsupportedProbability(f64),

    #[error("trace: {0}")]
    Trace(String),

    #[error("run aborted at interval {interval}: {reason}")]
    Aborted { interval: usize, reason: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
