use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{failed} of {total} sweep points failed")]
    PartialSweep { failed: usize, total: usize },

    #[error("{0} bound checks failed")]
    Violations(usize),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) | CliError::Violations(_) => 4,
            CliError::PartialSweep { .. } => 5,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<anonrep::Error> for CliError {
    fn from(e: anonrep::Error) -> Self {
        use anonrep::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Numeric(_) | E::Diverged { .. } => CliError::Numeric(e.to_string()),
            E::Shape(_) | E::Input(_) | E::State(_) | E::Parse { .. } | E::Io(_) | E::Json(_) => {
                CliError::Data(e.to_string())
            }
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
