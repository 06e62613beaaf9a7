use std::fmt;

use serde::Serialize;

/// Where a logarithm hit the branch cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum BranchCutSite {
    Element,
    Edge(usize),
    Plaquette(usize),
}

impl fmt::Display for BranchCutSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchCutSite::Element => write!(f, "group element"),
            BranchCutSite::Edge(e) => write!(f, "edge {e}"),
            BranchCutSite::Plaquette(p) => write!(f, "plaquette {p}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("lattice extent {extent} along axis {axis} is below 2")]
    DegenerateDimension { axis: usize, extent: usize },
    #[error("lattice spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("cell count overflows the index type")]
    CellCountOverflow,
    #[error("interval on axis {axis} wraps onto itself")]
    SelfWrap { axis: usize },
    #[error("interval on axis {axis} has no strictly interior vertices")]
    RegionTooSmall { axis: usize },
    #[error("interval on axis {axis} does not fit inside the lattice")]
    RegionOutOfBounds { axis: usize },
    #[error("ball regions require a periodic or box lattice")]
    UnsupportedParent,
    #[error("logarithm at the branch cut ({0})")]
    BranchCut(BranchCutSite),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{op} is undefined for degree {degree}")]
    DegreeOutOfRange { op: &'static str, degree: usize },
    #[error("operands live on different complexes")]
    ComplexMismatch,
    #[error("tangential link {edge} deviates from the prescribed boundary by {deviation:e}")]
    BoundaryMismatch { edge: usize, deviation: f64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("field is not in Coulomb gauge (residual {residual:e})")]
    NotGaugeFixed { residual: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("branch cut on face {face} at interpolation parameter t = {t}")]
    InterpolationBranchCut { t: f64, face: usize },
    #[error("group mismatch: expected {expected}, found {found}")]
    GroupMismatch { expected: String, found: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
