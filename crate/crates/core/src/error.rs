use thiserror::Error;

/// Errors raised by map construction and the geometric solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown map family `{0}`")]
    UnknownFamily(String),
    #[error("missing map parameter `{0}`")]
    MissingParam(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("linear part has determinant {0}, expected +-1")]
    NonUnimodularMatrix(i64),
    #[error("epsilon {epsilon} is not admissible: {reason}")]
    InadmissibleEpsilon { epsilon: f64, reason: String },
    #[error("inverse iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("splitting frame is degenerate (|det| = {0:.3e})")]
    DegenerateFrame(f64),
    #[error("rates do not separate: ss {ss:.6}, c {c:.6}, uu {uu:.6}")]
    NoSeparation { uu: f64, c: f64, ss: f64 },
    #[error("no power N <= {0} certifies domination")]
    NotDominatedWithinBudget(usize),
    #[error("plaque iterate has length {length:.4e}, above scale {eps0:.4e}")]
    ScaleExceeded { length: f64, eps0: f64 },
    #[error("node budget exceeded: {needed} nodes requested, cap {cap}")]
    BudgetExceeded { needed: usize, cap: usize },
    #[error("tolerance {tol} must be positive and below {limit}")]
    InvalidTolerance { tol: f64, limit: f64 },
    #[error("frame evaluation failed along a plaque: {0}")]
    FrameFailure(String),
    #[error("shooting solve found no intersection (residual {residual:.3e})")]
    NoIntersection { residual: f64 },
    #[error("point is {distance:.3e} away from the plaque")]
    NotOnPlaque { distance: f64 },
    #[error("unstable leaf through a target misses the patch")]
    LeafMiss,
    #[error("no s-u-s chain between the plaques")]
    NoChain,
    #[error("point lies on the brush (center offset {0:.3e})")]
    OnBrush(f64),
    #[error("cs pairing lost at t = {0}")]
    PairingLost(f64),
    #[error("close-encounter search exceeded its budget of {0} candidates")]
    SearchBudgetExceeded(usize),
    #[error("phi never reaches the required value {0:.4e}")]
    NoCrossing(f64),
    #[error("ratio error {error:.4} exceeds delta {delta}")]
    RatioBlowup { error: f64, delta: f64 },
    #[error("drift step budget exhausted after {0} steps")]
    StepBudgetExceeded(usize),
    #[error("no candidate with lambda > 1 (best {0:.6})")]
    NoCandidate(f64),
    #[error("pushforward needs {needed} nodes, cap {cap}")]
    NodeBudgetExceeded { needed: usize, cap: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
