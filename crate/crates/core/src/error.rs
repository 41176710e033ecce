use thiserror::Error;

/// Errors raised by the measure, bound and oracle routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("measure is not integrable: mass keeps growing past radius {radius}")]
    NonIntegrable { radius: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("Hessian is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NonSymmetricHessian { asymmetry: f64 },

    #[error("infimum over the cell is only sampled, not certified")]
    UncertifiedInfimum,

    #[error("potential is unbounded on the cell; cap it before using the capped-ratio bound")]
    UnboundedPotential,

    #[error("no candidate in the shift/kappa grid satisfies the feasibility condition")]
    EmptyFeasibleGrid,

    #[error("no local bound method is applicable on this cell")]
    NoApplicableMethod,

    #[error("measure is not log-concave on the cell: {0}")]
    NotLogConcave(String),

    #[error("dimension {0} is too small for the radial gap bounds (use the one-dimensional bound)")]
    DimensionTooSmall(usize),

    #[error("one-dimensional bound requires a cell symmetric about the origin")]
    NotCentered,

    #[error("no certified Poincaré constant available: {0}")]
    NoCertifiedEstimate(String),

    #[error("lattice pitch too coarse: balls of radius {radius} do not cover a lattice cell of pitch {pitch}")]
    PitchTooCoarse { pitch: f64, radius: f64 },

    #[error("missing local report for cell {index}")]
    MissingCellReport { index: usize },

    #[error("mesh refinement did not converge: {0}")]
    MeshNotConverged(String),

    #[error("node weight underflowed in the grid discretization")]
    SingularMass,

    #[error("trial function has zero variance")]
    ZeroVariance,

    #[error("branch mismatch: {0}")]
    BranchMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
