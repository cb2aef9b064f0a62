use thiserror::Error;

use crate::model::{ConductionState, Topology};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter invariant does not hold. The message names the field.
    #[error("{name} must be {requirement}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
    },

    #[error("infeasible operating point: {0}")]
    InfeasibleOperatingPoint(String),

    #[error("unreachable target: {0}")]
    UnreachableTarget(String),

    #[error("conduction state {cond:?} is not valid for {topology:?} topology")]
    InconsistentState {
        cond: ConductionState,
        topology: Topology,
    },

    #[error("simulation diverged at t = {t:e} s")]
    Divergence { t: f64 },

    #[error("no steady state after {periods} periods (residual {residual:e})")]
    ConvergenceFailure { periods: usize, residual: f64 },

    #[error("t_end too small: {t_end:e} s is shorter than one switching period ({ts:e} s)")]
    TEndTooSmall { t_end: f64, ts: f64 },

    #[error("config: {0}")]
    Config(String),
}
