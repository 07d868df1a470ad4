use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input values: malformed boxes, non-positive radii, ratio shortfalls.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A detector plugin exited unsuccessfully.
    #[error("plugin `{name}` failed ({status}): {stderr}")]
    PluginFailed {
        name: String,
        status: String,
        stderr: String,
    },

    /// A detector plugin spoke the wire protocol incorrectly.
    #[error("plugin `{name}` protocol violation{}: {message}", tile_suffix(*.tile_id))]
    Protocol {
        name: String,
        tile_id: Option<u32>,
        message: String,
    },

    /// Input handed to an operation in the wrong coordinate frame.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn tile_suffix(tile_id: Option<u32>) -> String {
    match tile_id {
        Some(id) => format!(" on tile {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit status the command-line front end reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Contract(_) => 2,
            Error::PluginFailed { .. } | Error::Protocol { .. } => 3,
            Error::Io { .. } | Error::Image { .. } | Error::Json { .. } => 4,
        }
    }
}
