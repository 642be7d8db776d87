use std::fmt;

/// Failure classes with stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Data(String),
    Mode(String),
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
            CliError::Mode(_) => 5,
            CliError::Integrity(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config error", m),
            CliError::Io(m) => ("i/o error", m),
            CliError::Data(m) => ("data error", m),
            CliError::Mode(m) => ("mode mismatch", m),
            CliError::Integrity(m) => ("integrity error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<psim_core::Error> for CliError {
    fn from(e: psim_core::Error) -> Self {
        use psim_core::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::InvalidParameter { .. } | E::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<psim_gan::Error> for CliError {
    fn from(e: psim_gan::Error) -> Self {
        use psim_gan::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Net(psim_autonet::Error::Integrity { .. }) | E::Checkpoint(_) => CliError::Integrity(e.to_string()),
            E::Net(psim_autonet::Error::Checkpoint(_)) | E::Net(psim_autonet::Error::Json(_)) => {
                CliError::Integrity(e.to_string())
            }
            E::Mode { .. } => CliError::Mode(e.to_string()),
            E::Spec { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<psim_autonet::Error> for CliError {
    fn from(e: psim_autonet::Error) -> Self {
        psim_gan::Error::from(e).into()
    }
}

/// Attaches a path to an I/O failure.
pub fn io_err(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
