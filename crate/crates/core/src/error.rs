use thiserror::Error;

/// Errors raised by the geometric and numerical routines of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("unreduced coordinate: {0} is outside [0, 1)")]
    UnreducedCoordinate(f64),
    #[error("parameter out of range: p = {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("invalid perturbation profile: {0}")]
    InvalidProfile(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no epsilon in {candidates:?} passes the cone check")]
    CalibrationFailed { candidates: Vec<f64> },
    #[error("stop rule unreachable after {iterations} iterations")]
    StopRuleUnreachable { iterations: usize },
    #[error("segments disjoint")]
    SegmentsDisjoint,
    #[error("partition malformed: {0}")]
    PartitionMalformed(String),
    #[error("itinerary not realized")]
    ItineraryNotRealized,
    #[error("ambiguous cylinder: {clusters} separated survivor clusters")]
    AmbiguousCylinder { clusters: usize },
    #[error("cylinder refinement exceeded {limit} candidate boxes")]
    CylinderBudget { limit: usize },
    #[error("shadowing diverged: residual {residual:e} after {iterations} Newton iterations")]
    ShadowingDiverged { residual: f64, iterations: usize },
    #[error("conjugacy point unresolved: {0}")]
    ConjugacyUnresolved(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
