use thiserror::Error;

use crate::structures::Task;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sentence {sentence_id}: {message}")]
    Structure { sentence_id: String, message: String },

    #[error("sentence {sentence_id}: tree leaves {leaves:?} do not match utterance {utterance:?}")]
    Alignment {
        sentence_id: String,
        leaves: Vec<String>,
        utterance: Vec<String>,
    },

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("dataset examples must all be {expected}, found {found}")]
    TaskMismatch { expected: Task, found: Task },

    #[error("state has no legal action")]
    NoLegalAction,

    #[error("structure is not derivable: {0}")]
    Derivation(String),

    #[error("derivation exceeded the step budget of {limit} actions")]
    StepBudget { limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot train on an empty dataset")]
    EmptyDataset,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that failed.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
