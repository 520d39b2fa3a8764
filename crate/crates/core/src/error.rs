use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("index {index} out of range (member_count = {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("degenerate time range: {0}")]
    DegenerateRange(String),

    #[error("enumeration refused: N = {0} exceeds the 2^N oracle limit of 20 spins")]
    EnumerationTooLarge(usize),

    #[error("unsupported moment order k = {0} (supported range 1..=8)")]
    UnsupportedMomentOrder(usize),

    #[error("unsupported perturbation order {0} (supported: 2, 3, 4)")]
    UnsupportedOrder(usize),

    #[error("spin groups do not partition the bath: {0}")]
    NotAPartition(String),

    #[error("coarse-graining time must be positive, got {0}")]
    NonPositiveTau(f64),

    #[error("tau grid is empty")]
    EmptyTauGrid,

    #[error("memory kernel transform must be strictly proper (deg num < deg den)")]
    ImproperKernel,

    #[error("partial-fraction residue reconstruction failed: max error {0:e}")]
    ResidueReconstruction(f64),

    #[error("polynomial root finding did not converge")]
    RootFinding,

    #[error("method `{0}` unavailable: {1}")]
    MethodUnavailable(String, String),

    #[error("trajectory grids do not match")]
    GridMismatch,

    #[error("empty method list")]
    EmptyMethodList,

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI process exit code: 2 for configuration/parse problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. }
            | Error::DegenerateRange(_)
            | Error::EmptyMethodList
            | Error::UnknownMethod(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
