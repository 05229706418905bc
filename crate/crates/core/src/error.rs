use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no moire pattern: the two layer lattices coincide")]
    NoMoire,

    #[error("singular lattice basis (det = {det:e})")]
    SingularBasis { det: f64 },

    #[error("Burgers triplet index {0} is out of range 1..=3")]
    TripletIndex(usize),

    #[error("GSFE model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite energy or gradient encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("ambiguous line cut: {0}")]
    AmbiguousCut(String),

    #[error("unresolved domain wall: {0}")]
    UnresolvedWall(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field file: {0}")]
    FieldFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
