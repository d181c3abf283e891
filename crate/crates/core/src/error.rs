use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("value {value} does not fit a {width}-bit {} integer", if *.signed { "signed" } else { "unsigned" })]
    OutOfRange { value: i128, width: u32, signed: bool },

    #[error("bitwidth {0} is outside the supported range 1..={max}", max = crate::fxp::MAX_WIDTH)]
    InvalidWidth(u32),

    #[error("signedness mismatch between operands")]
    SignednessMismatch,

    #[error("subtraction requires signed operands")]
    UnsignedSubtraction,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{dim} = {value} is not divisible by 2^{r}")]
    Divisibility { dim: &'static str, value: usize, r: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stream mismatch: {0}")]
    Stream(String),

    /// A datapath value exceeded the width the architecture allocated for it.
    #[error("datapath overflow at {port}: value {value} exceeds {width}-bit signed range")]
    WidthOverflow { port: String, value: i128, width: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
