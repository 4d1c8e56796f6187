//! Best fixed multiplier in hindsight against an oblivious competition
//! script.
//!
//! Total spend is non-increasing in `mu` and the ROI slack is
//! non-decreasing on `[0, gamma - 1]` and non-negative beyond, so the set of
//! multipliers satisfying both constraints over the whole horizon is an
//! up-set. Value is non-increasing, so the smallest feasible multiplier is
//! optimal.

use serde::{Deserialize, Serialize};

use super::curves::{single_round_outcome, uniform_grid};
use super::OracleError;
use crate::auction::AuctionConfig;
use crate::environment::CompetitionScript;
use crate::ledger::AUDIT_TOLERANCE;
use crate::strategies::AgentSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MultiplierSearch {
    /// Evenly spaced grid on `[0, safe multiplier]`.
    Grid { points: usize },
    /// Bisection for the smallest feasible multiplier, then snapping to the
    /// exact breakpoint.
    Bisection { tol: f64 },
}

impl Default for MultiplierSearch {
    fn default() -> Self {
        MultiplierSearch::Grid { points: 2001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedMultiplier {
    pub mu: f64,
    pub value: f64,
    pub spend: f64,
    pub roi_slack: f64,
    pub feasible: bool,
}

/// Replays `script` bidding `v / (1 + mu)` every round.
pub fn replay_fixed_multiplier(
    script: &CompetitionScript,
    spec: &AgentSpec,
    auction: &AuctionConfig,
    wins_ties: bool,
    mu: f64,
) -> FixedMultiplier {
    let (mut value, mut spend, mut roi_slack) = (0.0, 0.0, 0.0);
    for r in &script.rounds {
        let (x, p) = single_round_outcome(
            r.value / (1.0 + mu),
            r.competing_bid,
            auction.alpha,
            wins_ties,
        );
        value += r.value * x;
        spend += p;
        roi_slack += r.value * x - spec.gamma * p;
    }
    let feasible = spend <= spec.budget.as_f64() + AUDIT_TOLERANCE && roi_slack >= -AUDIT_TOLERANCE;
    FixedMultiplier {
        mu,
        value,
        spend,
        roi_slack,
        feasible,
    }
}

/// Highest-value multiplier in `[0, max{gamma - 1, vbar/rho - 1}]` that keeps
/// both constraints over the whole script.
pub fn best_fixed_multiplier(
    script: &CompetitionScript,
    spec: &AgentSpec,
    auction: &AuctionConfig,
    wins_ties: bool,
    search: MultiplierSearch,
) -> Result<FixedMultiplier, OracleError> {
    let upper = spec.safe_multiplier();
    let replay = |mu: f64| replay_fixed_multiplier(script, spec, auction, wins_ties, mu);
    match search {
        MultiplierSearch::Grid { points } => {
            if points < 2 {
                return Err(OracleError::Invalid(format!(
                    "multiplier grid needs >= 2 points, got {points}"
                )));
            }
            let mut best: Option<FixedMultiplier> = None;
            for mu in uniform_grid(0.0, upper, points) {
                let r = replay(mu);
                if r.feasible && best.is_none_or(|b| r.value > b.value) {
                    best = Some(r);
                }
            }
            best.ok_or_else(|| OracleError::Invalid("no feasible multiplier on the grid".into()))
        }
        MultiplierSearch::Bisection { tol } => {
            if tol.is_nan() || tol <= 0.0 {
                return Err(OracleError::Invalid(format!(
                    "bisection tolerance {tol} must be > 0"
                )));
            }
            let first = replay(0.0);
            if first.feasible || upper <= 0.0 {
                return Ok(first);
            }
            let top = replay(upper);
            if !top.feasible {
                return Err(OracleError::Invalid(
                    "the safe multiplier is infeasible".into(),
                ));
            }
            let (mut lo, mut hi, mut best) = (0.0, upper, top);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let r = replay(mid);
                if r.feasible {
                    hi = mid;
                    best = r;
                } else {
                    lo = mid;
                }
            }
            // The exact minimizer is usually the multiplier at which some
            // round is lost: mu = v / d - 1.
            let mut breakpoints: Vec<f64> = script
                .rounds
                .iter()
                .filter(|r| r.competing_bid > 0.0)
                .map(|r| r.value / r.competing_bid - 1.0)
                .filter(|&mu| mu >= lo && mu < hi)
                .collect();
            breakpoints.sort_by(f64::total_cmp);
            breakpoints.dedup();
            for mu in breakpoints {
                let r = replay(mu);
                if r.feasible {
                    if r.value >= best.value {
                        best = r;
                    }
                    break;
                }
            }
            Ok(best)
        }
    }
}
