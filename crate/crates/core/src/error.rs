use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Error conditions surfaced by model construction, geometry, partition
/// refinement, and the counting estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not unimodular: |det| = {0}")]
    NotUnimodular(i128),
    #[error("spectrum has no eigenvalue of modulus > 1")]
    NoUnstableDirection,
    #[error("spectrum has no eigenvalue of modulus < 1")]
    NoStableDirection,
    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(String),
    #[error("word window [{have_lo}, {have_hi}] does not determine indices [{need_lo}, {need_hi}]")]
    WindowTooShort {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },
    #[error("|steps| = {0} exceeds the configured maximum {1}")]
    StepsOutOfRange(i64, i64),
    #[error("integer overflow while forming matrix power {0}")]
    MatrixPowerOverflow(i64),
    #[error("points lie on different leaf pieces")]
    DifferentLeaf,
    #[error("operation needs a {expected}-dimensional leaf, model has {got} expanding directions")]
    UnsupportedLeafDimension { expected: usize, got: usize },
    #[error("partition diameter {diameter} exceeds the scale bound {epsilon0}")]
    DiameterExceeded { diameter: f64, epsilon0: f64 },
    #[error("leaf segment length {segment} must exceed the partition diameter {diameter}")]
    LeafTooShort { segment: f64, diameter: f64 },
    #[error("estimated crossing count {estimate} exceeds the budget {budget}")]
    BudgetExceeded { estimate: u64, budget: u64 },
    #[error("name lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("theta = {theta} must lie in (0, 1/(2k)) for k = {k}")]
    ThetaTooLarge { theta: f64, k: u32 },
    #[error("epsilon = {0} must lie in (0, 1/2]")]
    EpsilonOutOfRange(f64),
    #[error("itinerary cells carry mass {0}, expected 1 within 1e-9")]
    MassDeficit(f64),
    #[error("candidate set cannot cover mass {target}, at most {reachable} reachable")]
    CoverageImpossible { target: f64, reachable: f64 },
    #[error("certified search is limited to {max} candidates, got {got}")]
    TooManyCandidates { max: usize, got: usize },
    #[error("region does not intersect the conditional support")]
    RegionOutsideSupport,
    #[error("scheme is incompatible with the system or measure: {0}")]
    IncompatibleScheme(String),
    #[error("query point lies on a trace boundary or in a zero-mass cell")]
    ZeroMassCell,
    #[error("rate window holds {0} rows, need at least 3")]
    WindowTooSmall(usize),
    #[error("invalid probability data: {0}")]
    InvalidStochastic(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
