//! File formats, parallel training and the `desm` command line built on
//! [`desm_core`].

pub mod cli;
pub mod config;
pub mod formats;
pub mod hogwild;
pub mod pipeline;
pub mod synth;

pub use desm_core as core;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] formats::FormatError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Train(#[from] desm_core::cbow::TrainError),
    #[error(transparent)]
    Vocab(#[from] desm_core::corpus::VocabError),
    #[error(transparent)]
    Embedding(#[from] desm_core::embeddings::EmbeddingError),
    #[error(transparent)]
    Desm(#[from] desm_core::desm::DesmError),
    #[error(transparent)]
    Lexical(#[from] desm_core::lexical::LexicalError),
    #[error(transparent)]
    Eval(#[from] desm_core::eval::EvalError),
    #[error(transparent)]
    Mixture(#[from] desm_core::mixture::MixtureError),
    #[error(transparent)]
    Analysis(#[from] desm_core::analysis::AnalysisError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Short stable name used in command line error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(e) if e.is_not_found() => "missing-file",
            Error::Config(config::ConfigError::File(e)) if e.is_not_found() => "missing-file",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Train(_) => "train",
            Error::Vocab(_) => "vocabulary",
            Error::Embedding(_) => "embedding",
            Error::Desm(_) => "desm",
            Error::Lexical(_) => "lexical",
            Error::Eval(_) => "eval",
            Error::Mixture(_) => "mixture",
            Error::Analysis(_) => "analysis",
            Error::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(config::ConfigError::Invalid { .. } | config::ConfigError::Missing(_)) => 2,
            _ => 1,
        }
    }
}
