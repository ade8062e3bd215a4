use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] eps_planner::Error),
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use eps_planner::Error as E;
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Io { .. } | HarnessError::Parse { .. } | HarnessError::Data(_) => 2,
            HarnessError::Core(e) => match e {
                E::EmptyDataset
                | E::DimensionMismatch { .. }
                | E::InvalidLabel { .. }
                | E::FeatureNorm { .. } => 2,
                E::Domain { .. } | E::UnknownLoss(_) => 1,
                _ => 3,
            },
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
