use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<AppError>,
    },
    #[error(transparent)]
    Core(#[from] rbmdyn_core::Error),
}

impl AppError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Self::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// 1 usage, 2 data or IO, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use rbmdyn_core::Error as E;
        match self {
            Self::Usage(_) => 1,
            Self::Io { .. } | Self::Data(_) => 2,
            Self::Numerical(_) => 3,
            Self::Stage { source, .. } => source.exit_code(),
            Self::Core(E::Argument(_)) => 1,
            Self::Core(E::Dimension { .. } | E::Data(_)) => 2,
            Self::Core(E::Numerical(_)) => 3,
        }
    }
}

/// Attaches a stage name to errors of a fallible step.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T, E: Into<AppError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(stage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_category() {
        assert_eq!(AppError::usage("x").exit_code(), 1);
        assert_eq!(AppError::data("x").exit_code(), 2);
        assert_eq!(AppError::io("f", io::Error::other("x")).exit_code(), 2);
        assert_eq!(AppError::Numerical("x".into()).exit_code(), 3);
        let nested = AppError::Numerical("nan".into()).in_stage("train-rbm");
        assert_eq!(nested.exit_code(), 3);
        assert_eq!(nested.to_string(), "stage train-rbm: nan");
        assert_eq!(AppError::from(rbmdyn_core::Error::Numerical("x".into())).exit_code(), 3);
    }
}
