use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DfaError {
    #[error("state {state} out of range for a {num_states}-state DFA")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("malformed DFA: {0}")]
    Malformed(String),
    #[error("character {0:?} is not in the alphabet {{a, b, c}}")]
    BadSymbol(char),
    #[error("no valid DFA after {0} proposals")]
    RejectionCapExceeded(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("sampling exhausted after {0} consecutive rejections")]
    SamplingExhausted(usize),
    #[error("DFA rejected: {0}")]
    DfaRejected(String),
    #[error(transparent)]
    Dfa(#[from] DfaError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("no 3-state DFA is consistent with the instance")]
    NoConsistentDfa,
    #[error("unknown predictor {0:?}")]
    UnknownPredictor(String),
    #[error("predictor {predictor} does not apply to {kind} tasks")]
    WrongTask { predictor: String, kind: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt format {format} cannot render a {kind} instance")]
    FormatMismatch { format: String, kind: String },
    #[error("unknown prompt format {0:?}")]
    UnknownFormat(String),
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint error after {attempts} attempt(s): {message}")]
    Endpoint { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("bad endpoint config: {0}")]
    Config(String),
    #[error("cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no DFA has a defined accuracy")]
    EmptyInput,
    #[error("score vectors cover different DFA sets")]
    MismatchedDfaSets,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: recorded hash {expected} but found {actual}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("unsupported schema version {0}")]
    SchemaVersionUnsupported(String),
    #[error("incomplete run in {0}: manifest.json is missing")]
    IncompleteRun(PathBuf),
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}
