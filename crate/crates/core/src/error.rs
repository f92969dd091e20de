use alloc::string::String;
use core::fmt;

/// Errors surfaced by geometry, assembly and solver operations.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A coefficient matrix failed the ellipticity or block-structure checks.
    BadCoefficient(String),
    /// A map was evaluated outside its domain (e.g. inverse square-root map
    /// with `xi < 0`, or a graph function off its grid).
    OutOfDomain(String),
    /// Grid shapes or frames are inconsistent for the requested operation.
    GridMismatch(String),
    /// A requested region is not covered by the grid, or too coarse to
    /// quadrate reliably.
    RegionUnresolved(String),
    /// Degenerate input where a ratio or normalizer would divide by zero.
    DegenerateInput(String),
    /// Iterative solver failed to reach tolerance within its iteration cap.
    SolverDiverged { iterations: usize, residual: f64 },
    /// Least-squares normal equations too ill-conditioned to invert.
    IllConditioned(String),
    /// A pipeline stage hypothesis check failed; carries the stage name.
    HypothesisFailed { stage: String, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BadCoefficient(m) => write!(f, "bad coefficient field: {m}"),
            Error::OutOfDomain(m) => write!(f, "out of domain: {m}"),
            Error::GridMismatch(m) => write!(f, "grid mismatch: {m}"),
            Error::RegionUnresolved(m) => write!(f, "region unresolved: {m}"),
            Error::DegenerateInput(m) => write!(f, "degenerate input: {m}"),
            Error::SolverDiverged { iterations, residual } => {
                write!(f, "solver did not converge in {iterations} iterations (residual {residual:.3e})")
            }
            Error::IllConditioned(m) => write!(f, "ill-conditioned system: {m}"),
            Error::HypothesisFailed { stage, detail } => {
                write!(f, "hypothesis check failed at stage {stage}: {detail}")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
