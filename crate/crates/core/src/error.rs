use crate::{ClassId, SampleId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid subspace: {0}")]
    InvalidSubspace(String),

    #[error("subspace bank is empty")]
    EmptyBank,

    #[error("assignment to unknown novel class {0}")]
    UnknownAssignment(ClassId),

    #[error("pseudo-labeler needs at least one class")]
    EmptyClassSet,

    #[error("duplicate class id {0}")]
    DuplicateClass(ClassId),

    #[error("label {0} is not one of the labeler's classes")]
    UnknownLabel(ClassId),

    #[error("threshold calibration needs at least 2 validation scores, got {0}")]
    InsufficientValidation(usize),

    #[error("budget {budget} exceeds pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("unknown sample id {0}")]
    UnknownSample(SampleId),

    #[error("duplicate sample id {0}")]
    DuplicateSample(SampleId),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("class {class} has too few samples: needed {needed}, available {available}")]
    InsufficientSamples {
        class: ClassId,
        needed: usize,
        available: usize,
    },

    #[error("invalid old:new ratio {0}:{1}")]
    InvalidRatio(u32, u32),

    #[error("could not place {n_classes} means at separation {separation} after {attempts} attempts")]
    InfeasibleSeparation {
        n_classes: usize,
        separation: f64,
        attempts: usize,
    },

    #[error("AUROC needs both positive and negative samples")]
    SingleClassInput,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
