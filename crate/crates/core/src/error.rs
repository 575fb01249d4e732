use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid stage sequence: {0}")]
    InvalidStages(String),

    #[error("sequence has zero likelihood under every class")]
    ZeroLikelihood,

    #[error("instance too large for enumeration (m={m}, r={r}; limits m<=12, r<=4)")]
    InstanceTooLarge { m: usize, r: usize },

    #[error("END action unreachable: rejection rate exceeded {0}% over 10000 attempts")]
    UnreachableEnd(u32),

    #[error("label out of range: {0}")]
    LabelOutOfRange(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("empty class: no sequence assigned to class {0}")]
    EmptyClass(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
