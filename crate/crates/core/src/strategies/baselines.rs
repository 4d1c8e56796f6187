//! Baseline bidders: the always-safe bid, bandit templates over a fixed
//! multiplier grid, and a projected dual-ascent Lagrangian bidder.

use rand::Rng;

use super::{safe_bid, AgentSpec, Bidder, Feedback, StrategyError};
use crate::rng::Stream;

pub const ARM_COUNT: usize = 33;

/// Multiplier arms `mu_i` with `1 + mu_i = (1 + M)^(i / 32)`, where
/// `M = max{gamma - 1, vbar / rho - 1, 1}`. Spans `[0, M]` with bid scale
/// factors `1 / (1 + mu)` evenly spaced on a log scale.
pub fn arm_grid(spec: &AgentSpec) -> Vec<f64> {
    let top = spec.safe_multiplier().max(1.0);
    let last = (ARM_COUNT - 1) as f64;
    (0..ARM_COUNT)
        .map(|i| (1.0 + top).powf(i as f64 / last) - 1.0)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SafeBidder {
    spec: AgentSpec,
    pending: bool,
}

impl SafeBidder {
    pub fn new(spec: AgentSpec) -> Self {
        Self {
            spec,
            pending: false,
        }
    }
}

impl Bidder for SafeBidder {
    fn bid(&mut self, value: f64) -> Result<f64, StrategyError> {
        let bid = safe_bid(&self.spec, value)?;
        self.pending = true;
        Ok(bid)
    }

    fn observe(&mut self, _feedback: Feedback) -> Result<(), StrategyError> {
        if !std::mem::take(&mut self.pending) {
            return Err(StrategyError::NoPendingBid);
        }
        Ok(())
    }

    fn frozen_bid(&self, value: f64) -> f64 {
        safe_bid(&self.spec, value.clamp(0.0, self.spec.vbar)).unwrap_or(0.0)
    }
}

/// Greedy (`epsilon = 0`) and epsilon-greedy over [`arm_grid`].
///
/// The reward of a pull is the value won, `v x`. Exploitation pulls every
/// arm once in index order before trusting empirical means. Constraints are
/// not enforced beyond stopping once the budget is spent.
#[derive(Debug, Clone)]
pub struct BanditBidder {
    spec: AgentSpec,
    epsilon: f64,
    arms: Vec<f64>,
    pulls: Vec<u64>,
    reward_sums: Vec<f64>,
    spend: f64,
    rng: Stream,
    pending: Option<(Option<usize>, f64)>,
}

impl BanditBidder {
    pub fn new(spec: AgentSpec, epsilon: f64, rng: Stream) -> Result<Self, StrategyError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(StrategyError::InvalidEpsilon(epsilon));
        }
        let arms = arm_grid(&spec);
        Ok(Self {
            pulls: vec![0; arms.len()],
            reward_sums: vec![0.0; arms.len()],
            arms,
            spec,
            epsilon,
            spend: 0.0,
            rng,
            pending: None,
        })
    }

    pub fn arms(&self) -> &[f64] {
        &self.arms
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    fn exhausted(&self) -> bool {
        self.spend >= self.spec.budget.as_f64()
    }

    fn exploit_arm(&self) -> usize {
        if let Some(unpulled) = self.pulls.iter().position(|&n| n == 0) {
            return unpulled;
        }
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        for (i, (&sum, &n)) in self.reward_sums.iter().zip(&self.pulls).enumerate() {
            let mean = sum / n as f64;
            if mean > best_mean {
                best = i;
                best_mean = mean;
            }
        }
        best
    }
}

impl Bidder for BanditBidder {
    fn bid(&mut self, value: f64) -> Result<f64, StrategyError> {
        self.spec.check_value(value)?;
        if self.exhausted() {
            self.pending = Some((None, value));
            return Ok(0.0);
        }
        let arm = if self.epsilon > 0.0 && self.rng.random::<f64>() < self.epsilon {
            self.rng.random_range(0..self.arms.len())
        } else {
            self.exploit_arm()
        };
        self.pending = Some((Some(arm), value));
        Ok(value / (1.0 + self.arms[arm]))
    }

    fn observe(&mut self, feedback: Feedback) -> Result<(), StrategyError> {
        let (arm, value) = self.pending.take().ok_or(StrategyError::NoPendingBid)?;
        self.spend += feedback.payment;
        if let Some(arm) = arm {
            self.pulls[arm] += 1;
            self.reward_sums[arm] += value * feedback.allocation;
        }
        Ok(())
    }

    fn frozen_bid(&self, value: f64) -> f64 {
        if self.exhausted() {
            0.0
        } else {
            value / (1.0 + self.arms[self.exploit_arm()])
        }
    }
}

/// Lagrangian bidder with projected dual ascent on both constraints:
/// bid `v (1 + l_R) / (1 + l_B + gamma l_R)`, duals move by `eta` times the
/// per-round constraint excess and are clipped at zero.
#[derive(Debug, Clone)]
pub struct LagrangianBidder {
    spec: AgentSpec,
    eta: f64,
    lambda_b: f64,
    lambda_r: f64,
    spend: f64,
    pending: Option<f64>,
}

impl LagrangianBidder {
    pub fn new(spec: AgentSpec, eta: f64) -> Result<Self, StrategyError> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(StrategyError::InvalidSpec(format!(
                "dual step eta = {eta} must be > 0"
            )));
        }
        Ok(Self {
            spec,
            eta,
            lambda_b: 0.0,
            lambda_r: 0.0,
            spend: 0.0,
            pending: None,
        })
    }

    pub fn duals(&self) -> (f64, f64) {
        (self.lambda_b, self.lambda_r)
    }

    fn shaded(&self, value: f64) -> f64 {
        if self.spend >= self.spec.budget.as_f64() {
            return 0.0;
        }
        value * (1.0 + self.lambda_r) / (1.0 + self.lambda_b + self.spec.gamma * self.lambda_r)
    }
}

impl Bidder for LagrangianBidder {
    fn bid(&mut self, value: f64) -> Result<f64, StrategyError> {
        self.spec.check_value(value)?;
        self.pending = Some(value);
        Ok(self.shaded(value))
    }

    fn observe(&mut self, feedback: Feedback) -> Result<(), StrategyError> {
        let value = self.pending.take().ok_or(StrategyError::NoPendingBid)?;
        let p = feedback.payment;
        self.spend += p;
        if let Some(rho) = self.spec.rho() {
            self.lambda_b = (self.lambda_b + self.eta * (p - rho)).max(0.0);
        }
        self.lambda_r = (self.lambda_r
            + self.eta * (self.spec.gamma * p - value * feedback.allocation))
            .max(0.0);
        Ok(())
    }

    fn frozen_bid(&self, value: f64) -> f64 {
        self.shaded(value)
    }
}
