use thiserror::Error;

use crate::numeric::NumericError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("unknown product id `{0}`")]
    UnknownProduct(String),
    #[error("unknown consumer id `{0}`")]
    UnknownConsumer(String),
    #[error("duplicate product id `{0}` in catalog")]
    DuplicateProduct(String),
    #[error("product `{id}` has non-positive or non-finite price {price}")]
    InvalidPrice { id: String, price: f64 },
    #[error("product `{id}` has {got} attribute values, expected {expected}")]
    AttributeCount {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("attribute index {index} out of range for {count} attributes")]
    AttributeOutOfRange { index: usize, count: usize },
    #[error("transaction log is empty")]
    EmptyLog,
    #[error("no transactions fall inside the window [{start}, {end})")]
    EmptyWindow { start: i64, end: i64 },
    #[error("empty reference set for consumer `{0}`")]
    EmptyReferenceSet(String),
    #[error("held-out item `{item}` is missing from the candidate set of consumer `{consumer}`")]
    HeldOutNotCandidate { consumer: String, item: String },
    #[error("ranked lists differ in size ({left} vs {right})")]
    SizeMismatch { left: usize, right: usize },
    #[error("ranked lists must contain the same items")]
    ItemMismatch,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged {
        epoch: usize,
        batch: usize,
        reason: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
