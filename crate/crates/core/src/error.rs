use alloc::boxed::Box;
use alloc::string::String;

use crate::eigensolve::SpectrumResult;
use crate::hardy::HardyReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an input parameter was violated. The message names
    /// the violated condition.
    #[error("{0}")]
    Parameter(String),

    #[error("inputs do not match: {0}")]
    Mismatch(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("factorization of K - {shift}·M broke down at pivot {pivot}")]
    Factorization { shift: f64, pivot: usize },

    /// The iteration cap was reached. `partial` holds whatever pairs met the
    /// tolerance, plus the best unconverged estimates.
    #[error("eigensolver did not converge: {converged} of {requested} pairs within tolerance")]
    NoConvergence {
        converged: usize,
        requested: usize,
        partial: Box<SpectrumResult>,
    },

    #[error("only {found} usable points, at least {needed} required")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("Hardy constant estimate {c_est:.3e} is not positive (discretization failure)")]
    NonPositiveEstimate { c_est: f64, report: Box<HardyReport> },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
