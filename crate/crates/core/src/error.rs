use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("requested {requested} facts but the name space only holds {available}")]
    NameSpaceExhausted { requested: u128, available: u128 },

    #[error("question collision across mixture groups persisted after {retries} retries")]
    QuestionCollision { retries: usize },

    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    OutOfVocab { id: u32, vocab: usize },

    #[error("sequence of length {len} exceeds context length {context}")]
    SequenceTooLong { len: usize, context: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "selection starved: alpha={alpha} kept {kept} of {drawn} drawn records \
         (keep rate {keep_rate:.4}) after {rounds} rounds, needed {target}"
    )]
    Starvation {
        alpha: f64,
        keep_rate: f64,
        kept: usize,
        drawn: usize,
        rounds: usize,
        target: usize,
    },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },

    #[error("toy world support of {states} states exceeds the limit of {limit}")]
    SupportTooLarge { states: u128, limit: u128 },

    #[error("output {0} already exists; pass --force to overwrite")]
    AlreadyExists(PathBuf),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Starvation { .. } => 3,
            Error::NonFinite { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
