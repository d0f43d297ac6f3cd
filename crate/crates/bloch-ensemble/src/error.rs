use thiserror::Error;

use crate::bracket::DescentReport;
use crate::halving::CycleReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("eps = {eps} is not below the minimal Dirac gap {gap}")]
    EpsTooLargeForGaps { eps: f64, gap: f64 },
    #[error("grid node {0} lies outside [0, pi]")]
    GridOutsideHalfPeriod(f64),

    #[error("zero spectrum")]
    ZeroSpectrum,
    #[error("no admissible cutoff k <= {n_max} (tail estimate {tail:.3e}, N = {norm:.3e})")]
    NoValidK { n_max: usize, tail: f64, norm: f64 },
    #[error("precondition violated: {quantity} = {value}")]
    PreconditionViolated { quantity: String, value: f64 },
    #[error("cycle conclusion violated: {0}")]
    ConclusionViolated(String),
    #[error("tolerance not reached after {} cycles", reports.len())]
    MaxCyclesExceeded { reports: Vec<CycleReport> },

    #[error("tau = {tau} gives a pulse angle {angle} >= pi/2")]
    TauTooLarge { tau: f64, angle: f64 },
    #[error("state is degenerate (constant on the grid)")]
    DegenerateState,
    #[error("no decreasing step after {halvings} halvings")]
    BacktrackFailed { halvings: usize },
    #[error("state already at the pole")]
    AlreadyAtPole,
    #[error("H1 tolerance not reached after {} iterations", reports.len())]
    MaxIterExceeded { reports: Vec<DescentReport> },

    #[error("no polynomial of degree <= {deg_max} reaches residual {target:.3e} (best {best:.3e})")]
    DegreeInsufficient { deg_max: usize, target: f64, best: f64 },
    #[error("mollifier width fell below {0:.3e}")]
    EpsUnderflow(f64),

    #[error("control too large: ||w||_L2 = {norm:.6} >= {bound:.6}")]
    ControlTooLarge { norm: f64, bound: f64 },
    #[error("fixed-point iteration did not converge in {0} iterations")]
    NoConvergence(usize),

    #[error("eps = {eps} makes 1 - eps^2 y^2 nonpositive (max |eps y| = {peak})")]
    EpsTooLarge { eps: f64, peak: f64 },
    #[error("Newton iteration diverged (residual {0:.3e})")]
    NewtonDiverged(f64),
    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the inputs rather than by the library.
    pub fn is_precondition(&self) -> bool {
        !matches!(
            self,
            Error::NoConvergence(_) | Error::ConclusionViolated(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
