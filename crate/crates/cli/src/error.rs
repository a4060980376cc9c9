use std::path::Path;

/// Anything that aborts a command. `exit_code` maps the failure families
/// onto the documented process exit codes; usage errors never reach this
/// type because argument parsing happens before any command runs.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed scenario or data file.
    #[error("{0}")]
    Input(String),
    /// The physics or fitting layer rejected the request.
    #[error(transparent)]
    Model(#[from] phononwalk::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for bad input or a model error, 3 when the data cannot constrain
    /// a fit at all.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(phononwalk::Error::DegenerateData(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
