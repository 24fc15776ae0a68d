use std::path::PathBuf;

/// Broad failure class, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: schema error: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing {kind} embedding for `{subject_id}`")]
    MissingEmbedding { subject_id: String, kind: String },

    #[error("alignment undefined: {0}")]
    UndefinedAlignment(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("malformed labeler response: {message} (raw payload: {raw})")]
    Response { message: String, raw: String },

    #[error("labeler transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("composition error: {0}")]
    Composition(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Schema { .. }
            | Error::Input(_)
            | Error::Data(_)
            | Error::MissingEmbedding { .. }
            | Error::UndefinedAlignment(_)
            | Error::Response { .. }
            | Error::Checkpoint(_) => ErrorClass::Data,
            Error::Parameter(_) | Error::Config(_) | Error::Template(_) => ErrorClass::Usage,
            Error::Dimension(_)
            | Error::Transport { .. }
            | Error::Divergence { .. }
            | Error::Training(_)
            | Error::Inference(_)
            | Error::Composition(_) => ErrorClass::Runtime,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
