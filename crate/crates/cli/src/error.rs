use std::fmt;

/// A failed command, classified for the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config file or option combination.
    Config(String),
    /// Input files that are missing, malformed or inconsistent.
    Data(String),
    /// Everything that goes wrong after inputs were accepted.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<arcrec::Error> for Failure {
    fn from(e: arcrec::Error) -> Self {
        use arcrec::Error as E;
        let message = e.to_string();
        match e {
            E::Config(_) | E::AttributeOutOfRange { .. } => Failure::Config(message),
            E::Numeric(_) | E::Diverged { .. } | E::SizeMismatch { .. } | E::ItemMismatch => {
                Failure::Runtime(message)
            }
            _ => Failure::Data(message),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
