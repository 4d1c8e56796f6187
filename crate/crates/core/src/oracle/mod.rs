//! Benchmarks and verification computations: expected-quantity curves,
//! pacing multipliers, optimal liquid welfare and hindsight multipliers.

pub mod curves;
pub mod hindsight;
pub mod lp;
pub mod welfare;

pub use curves::{
    auxiliary_h, pacing_multipliers, pacing_sequence, single_round_outcome, uniform_grid,
    CompetingBid, CurvePoint, EvalMode, ExpectedCurves, HValues, JointAtom, PacingBenchmark,
    PacingPath,
};
pub use hindsight::{
    best_fixed_multiplier, replay_fixed_multiplier, FixedMultiplier, MultiplierSearch,
};
pub use lp::{lp_solve, LinearConstraint, LinearProgram, LpError, LpSolution, Relation};
pub use welfare::{
    ex_ante_from_atoms, ex_ante_optimal_welfare, hindsight_optimal_welfare, OptimalWelfare,
};

use thiserror::Error;

use crate::environment::EnvError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact evaluation needs an enumerable support")]
    ContinuousSupport,
    #[error("Monte Carlo needs at least {min} samples, got {got}")]
    SampleBudgetTooSmall { got: usize, min: usize },
    #[error("{curve} is not monotone near mu = {mu} (increase of {excess})")]
    MonotonicityViolated {
        curve: &'static str,
        mu: f64,
        excess: f64,
    },
    #[error("instance too large: {vars} allocation variables (limit {limit}) or tableau over the cell cap")]
    InstanceTooLarge { vars: usize, limit: usize },
    #[error("invalid oracle input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl From<EnvError> for OracleError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::ContinuousSupport => OracleError::ContinuousSupport,
            other => OracleError::Invalid(other.to_string()),
        }
    }
}
