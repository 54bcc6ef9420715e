use thiserror::Error;

/// Errors raised by the caching, modem, analysis and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("invalid cache profile: {0}")]
    InvalidCacheProfile(String),
    #[error("invalid demands: {0}")]
    InvalidDemands(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("library of {bits} bits exceeds the enumeration limit of {limit} bits")]
    TooManyBits { bits: u64, limit: u64 },
    #[error("invalid modulation: {0}")]
    InvalidModulation(String),
    #[error("piece of {len} bits does not fit a {m}-bit label")]
    PieceTooLong { len: usize, m: u32 },
    #[error("piece length mismatch for user {user}: expected {expected} bits, got {got}")]
    PieceLengthMismatch {
        user: usize,
        expected: usize,
        got: usize,
    },
    #[error("missing piece of user {0}")]
    MissingPiece(usize),
    #[error("user {user} is not served by subset {subset}")]
    UserNotInSubset { user: usize, subset: String },
    #[error("block {block} of subset {subset} carries nothing for user {user}")]
    UselessBlock {
        subset: String,
        block: usize,
        user: usize,
    },
    #[error("no block {block} in subset {subset}")]
    NoSuchBlock { subset: String, block: usize },
    #[error("label {label} out of range for {m} bits per symbol")]
    LabelOutOfRange { label: u32, m: u32 },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("subconstellation has {0} point(s); minimum distance undefined")]
    DegenerateSubconstellation(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("placement does not match the plan: {0}")]
    PlacementMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
