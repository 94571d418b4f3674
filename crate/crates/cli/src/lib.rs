//! Configuration-driven pipeline around the `synprobe` library: probe
//! training per layer, evaluation on minimal-pair sentences, the joins and
//! statistical tests, and the report.

use std::path::{Path, PathBuf};

pub mod artifacts;
pub mod config;
pub mod fixture;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use pipeline::{run_all, Context, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Library(#[from] synprobe::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for validation failures, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            _ => 3,
        }
    }
}
