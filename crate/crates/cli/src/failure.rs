use std::fmt;

use ddgate_core::Error;

/// A command failure and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration or input files.
    Config(String),
    /// The requested design or bath could not be produced.
    Infeasible(String),
    /// A bath exceeds the dense engine.
    Capacity(String),
    /// A stored design did not re-verify.
    Verification(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Capacity(_) => 4,
            Failure::Verification(_) => 5,
        }
    }

    /// Classify a core error raised while loading inputs.
    pub fn input(context: &str, e: Error) -> Self {
        Failure::Config(format!("{context}: {e}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Capacity(m) => write!(f, "capacity error: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Domain(_) | Error::Validation(_) | Error::Unsupported(_) | Error::Json(_) => Failure::Config(m),
            Error::Infeasible { .. } | Error::DesignFailure(_) | Error::Selection(_) => Failure::Infeasible(m),
            Error::Capacity { .. } => Failure::Capacity(m),
            Error::Io(_) => Failure::Runtime(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
