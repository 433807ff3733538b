//! Failure classes, their exit codes, and the JSON record printed on stderr.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Bad arguments or unknown subcommand.
    Usage,
    /// Config document malformed or violating constraints.
    Config,
    /// Input file missing or unreadable.
    MissingInput,
    /// Input file readable but its records are malformed.
    BadInput,
    /// A computation rejected its inputs or failed.
    Compute,
    /// Output could not be written.
    Output,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Config => 3,
            Kind::MissingInput => 4,
            Kind::BadInput => 5,
            Kind::Compute => 6,
            Kind::Output => 7,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: Kind,
    pub exit_code: i32,
    pub messages: Vec<String>,
}

impl Failure {
    pub fn new(kind: Kind, messages: Vec<String>) -> Self {
        Self { kind, exit_code: kind.exit_code(), messages }
    }

    pub fn one(kind: Kind, message: impl fmt::Display) -> Self {
        Self::new(kind, vec![message.to_string()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "error": self })).expect("failure records serialize")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.messages.join("; "))
    }
}

impl From<depthmine_core::Error> for Failure {
    fn from(e: depthmine_core::Error) -> Self {
        Failure::one(Kind::Compute, e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub trait Context<T> {
    fn or_fail(self, kind: Kind, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: fmt::Display> Context<T> for std::result::Result<T, E> {
    fn or_fail(self, kind: Kind, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure::one(kind, format!("{what}: {e}")))
    }
}
