use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("spectrum violates conjugate symmetry (relative defect {0:.3e})")]
    Asymmetric(f64),

    #[error("CFL number {cfl:.4} exceeds {limit} with {steps} time steps; {proposed} steps needed")]
    Cfl {
        cfl: f64,
        limit: f64,
        steps: usize,
        proposed: usize,
    },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("trajectory cache does not match the supplied velocity")]
    StaleCache,

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
