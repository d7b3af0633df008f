use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
    Saturation,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Saturation => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} = {value} is out of range ({bound})")]
    OutOfRange {
        field: String,
        value: f64,
        bound: &'static str,
    },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("argument outside the model domain: {0}")]
    Domain(String),

    #[error("no data: {0}")]
    EmptyData(&'static str),

    #[error("time {time_ps} ps precedes the stream origin {t0_ps} ps")]
    NegativeTime { time_ps: u64, t0_ps: u64 },

    #[error("timestamp {0} ps does not fit in an unsigned 64-bit picosecond counter")]
    TimestampOverflow(f64),

    #[error("clock metadata mismatch: {0}")]
    ClockMismatch(String),

    #[error("invalid histogram binning: {0}")]
    InvalidBinning(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("histogram is multimodal: secondary peak is {ratio:.3} of the main peak")]
    Multimodal { ratio: f64 },

    #[error("quota of {quota} events not reached within a budget of {budget} slots")]
    NonConvergence { quota: u64, budget: u64 },

    #[error("timestamp stream is not monotone at index {index}")]
    NonMonotone { index: u64 },

    #[error("bad stream file magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported stream file version {0}")]
    UnsupportedVersion(u16),

    #[error("stream file truncated: header declares {expected} events, payload holds {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("TDC saturated: sustained input rate {rate_cps:.3e} cps exceeds {max_cps:.3e} cps")]
    Saturation { rate_cps: f64, max_cps: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn out_of_range(field: impl Into<String>, value: f64, bound: &'static str) -> Self {
        Error::OutOfRange {
            field: field.into(),
            value,
            bound,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::OutOfRange { .. } | Error::ConfigParse { .. } | Error::Config(_) => {
                ErrorClass::Config
            }
            Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::BadMagic(_)
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::NonMonotone { .. } => ErrorClass::Io,
            Error::Saturation { .. } => ErrorClass::Saturation,
            Error::DivisionByZero(_)
            | Error::Domain(_)
            | Error::EmptyData(_)
            | Error::NegativeTime { .. }
            | Error::TimestampOverflow(_)
            | Error::ClockMismatch(_)
            | Error::InvalidBinning(_)
            | Error::DegenerateFit(_)
            | Error::Multimodal { .. }
            | Error::NonConvergence { .. } => ErrorClass::Numeric,
        }
    }
}
