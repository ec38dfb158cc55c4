use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff must be positive and finite, got {0}")]
    InvalidCutoff(f64),

    #[error("degenerate cell: {0}")]
    DegenerateCell(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("incompatible bases: {0}")]
    IncompatibleBasis(String),

    #[error("negative density {value:e} at grid point {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("infeasible electron count {n} for {levels} levels")]
    InfeasibleElectronCount { n: f64, levels: usize },

    #[error("occupation {value} at index {index} lies outside [0, 1]")]
    OccupationOutOfRange { index: usize, value: f64 },

    #[error("orbitals are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("projection annihilates occupied orbital {index} (projected norm {norm:e})")]
    ProjectionAnnihilates { index: usize, norm: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    EigensolverNotConverged { iterations: usize, residual: f64 },

    #[error("requested {requested} eigenpairs from a basis of size {size}")]
    TooManyEigenpairs { requested: usize, size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("perturbation is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("chi - I is singular (smallest singular value {0:e})")]
    SingularResponse(f64),

    #[error("vanishing denominator {0:e} in the chemical-potential component")]
    ZeroDenominator(f64),

    #[error("response context requires a converged state (residual {0:e})")]
    NotConverged(f64),
}
