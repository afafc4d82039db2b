use std::path::{Path, PathBuf};

use atsdf::{FormatError, MeshError, SemanticError, SynthError, TextureError, VolumeError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<PipelineError> },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Self::Format { path: path.to_path_buf(), source }
    }

    pub fn input(path: &Path, msg: impl Into<String>) -> Self {
        Self::Input { path: path.to_path_buf(), msg: msg.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Input { .. } => "input",
            Self::Volume(_) => "volume",
            Self::Mesh(_) => "mesh",
            Self::Texture(_) => "texture",
            Self::Semantic(_) => "semantic",
            Self::Synth(_) => "synthetic",
            Self::Stage { source, .. } => source.kind(),
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Self::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Exit status for the CLI: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { stage: self.stage().map(str::to_string), kind: self.kind().to_string(), message: self.to_string() }
    }
}

/// Machine-readable failure record written as `error.json`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct ErrorReport {
    pub stage: Option<String>,
    pub kind: String,
    pub message: String,
}
