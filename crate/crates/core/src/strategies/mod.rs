//! Bidding algorithms.
//!
//! Every algorithm follows the same two-phase round contract: [`Bidder::bid`]
//! is computed from the state before the round, and [`Bidder::observe`]
//! consumes the realized `(x, p)` of exactly that bid. Bidders only ever see
//! their own value, allocation and payment.

mod baselines;
mod pacing;

pub use baselines::{arm_grid, BanditBidder, LagrangianBidder, SafeBidder, ARM_COUNT};
pub use pacing::{dual_pacer_step, roi_pacer_step, safe_bid, MultiplierState, PacingBidder};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("value {value} outside [0, vbar = {vbar}]")]
    ValueOutOfRange { value: f64, vbar: f64 },
    #[error("learning rate {name} = {eta} exceeds the ex-post safe limit {limit}")]
    LearningRateTooLarge {
        name: &'static str,
        eta: f64,
        limit: f64,
    },
    #[error("invalid agent spec: {0}")]
    InvalidSpec(String),
    #[error("epsilon {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("feedback delivered without a pending bid")]
    NoPendingBid,
}

/// Total budget over the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Finite(f64),
    Infinite,
}

impl Budget {
    pub fn as_f64(&self) -> f64 {
        match self {
            Budget::Finite(b) => *b,
            Budget::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Budget::Finite(_))
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Budget::Finite(b) => serializer.serialize_f64(*b),
            Budget::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(b) => Ok(Budget::Finite(b)),
            Raw::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinite" | "infinity" => Ok(Budget::Infinite),
                other => Err(serde::de::Error::custom(format!(
                    "budget must be a number or \"inf\", got {other:?}"
                ))),
            },
        }
    }
}

/// One bidder's constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// ROI parameter, `theta / w >= 1`.
    pub gamma: f64,
    pub budget: Budget,
    /// Maximum per-click bid.
    pub theta: f64,
    /// Upper bound on the effective values this agent can receive.
    pub vbar: f64,
    pub horizon: u64,
}

impl AgentSpec {
    pub fn new(
        gamma: f64,
        budget: Budget,
        theta: f64,
        vbar: f64,
        horizon: u64,
    ) -> Result<Self, StrategyError> {
        let spec = Self {
            gamma,
            budget,
            theta,
            vbar,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |msg: String| Err(StrategyError::InvalidSpec(msg));
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return bad(format!("gamma = {} must be finite and >= 1", self.gamma));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta = {} must be > 0", self.theta));
        }
        if !(self.vbar.is_finite() && self.vbar > 0.0) {
            return bad(format!("vbar = {} must be > 0", self.vbar));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if let Budget::Finite(b) = self.budget {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("budget = {b} must be > 0 or \"inf\""));
            }
        }
        Ok(())
    }

    /// Per-round budget `B / T`, `None` when the budget is infinite.
    pub fn rho(&self) -> Option<f64> {
        match self.budget {
            Budget::Finite(b) => Some(b / self.horizon as f64),
            Budget::Infinite => None,
        }
    }

    pub fn rho_or_inf(&self) -> f64 {
        self.rho().unwrap_or(f64::INFINITY)
    }

    /// Largest multiplier any pacing benchmark or safe bid needs:
    /// `max{gamma - 1, vbar / rho - 1}`.
    pub fn safe_multiplier(&self) -> f64 {
        let roi = self.gamma - 1.0;
        match self.rho() {
            Some(rho) => roi.max(self.vbar / rho - 1.0),
            None => roi,
        }
    }

    pub fn check_value(&self, value: f64) -> Result<(), StrategyError> {
        if value.is_finite() && value >= 0.0 && value <= self.vbar {
            Ok(())
        } else {
            Err(StrategyError::ValueOutOfRange {
                value,
                vbar: self.vbar,
            })
        }
    }

    /// Default learning rates: `eta_R = 1/(vbar sqrt T)` and
    /// `eta_B = 1/(rho sqrt T)`, the latter capped at `1/vbar` so that the
    /// ex-post guarantees apply.
    pub fn default_rates(&self) -> LearningRates {
        let sqrt_t = (self.horizon as f64).sqrt();
        let eta_r = 1.0 / (self.vbar * sqrt_t);
        let eta_b = self
            .rho()
            .map(|rho| (1.0 / (rho * sqrt_t)).min(1.0 / self.vbar));
        LearningRates {
            eta_r: Some(eta_r),
            eta_b,
        }
    }
}

/// Allocation and payment delivered to one bidder after a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub allocation: f64,
    pub payment: f64,
}

impl Feedback {
    pub const NOTHING: Feedback = Feedback {
        allocation: 0.0,
        payment: 0.0,
    };

    pub fn new(allocation: f64, payment: f64) -> Self {
        Self {
            allocation,
            payment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningRates {
    #[serde(rename = "eta_R", default, skip_serializing_if = "Option::is_none")]
    pub eta_r: Option<f64>,
    #[serde(rename = "eta_B", default, skip_serializing_if = "Option::is_none")]
    pub eta_b: Option<f64>,
}

impl LearningRates {
    /// Fills unspecified rates from [`AgentSpec::default_rates`].
    pub fn resolve(&self, spec: &AgentSpec) -> LearningRates {
        let defaults = spec.default_rates();
        LearningRates {
            eta_r: self.eta_r.or(defaults.eta_r),
            eta_b: self.eta_b.or(defaults.eta_b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum StrategyKind {
    Safe,
    RoiPacer,
    DualPacer,
    Greedy,
    EpsilonGreedy { epsilon: f64 },
    DualLagrangian { eta: f64 },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Safe => "safe",
            StrategyKind::RoiPacer => "roi_pacer",
            StrategyKind::DualPacer => "dual_pacer",
            StrategyKind::Greedy => "greedy",
            StrategyKind::EpsilonGreedy { .. } => "epsilon_greedy",
            StrategyKind::DualLagrangian { .. } => "dual_lagrangian",
        }
    }

    pub fn is_pacer(&self) -> bool {
        matches!(self, StrategyKind::RoiPacer | StrategyKind::DualPacer)
    }
}

/// A bidding algorithm driven one round at a time.
pub trait Bidder: Send {
    /// Bid for `value` from the pre-round state.
    fn bid(&mut self, value: f64) -> Result<f64, StrategyError>;

    /// Consumes the outcome of the most recent bid.
    fn observe(&mut self, feedback: Feedback) -> Result<(), StrategyError>;

    /// Bid the current state would place for `value`, without side effects.
    fn frozen_bid(&self, value: f64) -> f64;

    /// Live pacing multipliers, for pacing bidders.
    fn multipliers(&self) -> Option<MultiplierState> {
        None
    }
}

/// Builds the bidder for `kind`. With `strict` set, pacing learning rates
/// above the ex-post safe limits are rejected.
pub fn build_bidder(
    kind: StrategyKind,
    spec: &AgentSpec,
    rates: LearningRates,
    rng: Stream,
    strict: bool,
) -> Result<Box<dyn Bidder>, StrategyError> {
    spec.validate()?;
    let rates = rates.resolve(spec);
    Ok(match kind {
        StrategyKind::Safe => Box::new(SafeBidder::new(spec.clone())),
        StrategyKind::RoiPacer => Box::new(PacingBidder::roi(
            spec.clone(),
            rates.eta_r.unwrap_or_default(),
            strict,
        )?),
        StrategyKind::DualPacer => Box::new(PacingBidder::dual(spec.clone(), rates, strict)?),
        StrategyKind::Greedy => Box::new(BanditBidder::new(spec.clone(), 0.0, rng)?),
        StrategyKind::EpsilonGreedy { epsilon } => {
            Box::new(BanditBidder::new(spec.clone(), epsilon, rng)?)
        }
        StrategyKind::DualLagrangian { eta } => Box::new(LagrangianBidder::new(spec.clone(), eta)?),
    })
}
