use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] tpgate::Error),

    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 2 usage/config, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use tpgate::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(e) => match e {
                E::Config(_) | E::UnknownGate(_) => 2,
                E::Io(_) => 4,
                _ => 3,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
