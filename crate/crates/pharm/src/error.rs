use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("point coincides with the center of the reflecting circle")]
    AtCenter,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("meshing failed: {0}")]
    Meshing(String),
    #[error("degenerate triangle {0} (non-positive area)")]
    DegenerateTriangle(usize),
    #[error("maps live on different meshes or exponents")]
    MeshMismatch,
    #[error("boundary data is not cyclically monotone: {0}")]
    NonMonotone(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 2 for bad input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Unsupported(_)
            | Error::Precondition(_)
            | Error::MeshMismatch
            | Error::NonMonotone(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::AtCenter | Error::Meshing(_) | Error::DegenerateTriangle(_) | Error::Numerical(_) => 3,
        }
    }
}
