use serde::{Deserialize, Serialize};

use super::{AgentSpec, Bidder, Feedback, LearningRates, StrategyError};

/// Bid that can never violate either constraint: `min{v, v/gamma, rho}`.
pub fn safe_bid(spec: &AgentSpec, value: f64) -> Result<f64, StrategyError> {
    spec.check_value(value)?;
    Ok(value.min(value / spec.gamma).min(spec.rho_or_inf()))
}

/// Live multipliers of a pacing bidder.
///
/// The stored multipliers are never clamped: `mu_r - (gamma - 1)` is exactly
/// `eta_r` times the accumulated ROI slack `sum(gamma p - v x)`, and likewise
/// for `mu_b` with the budget slack. Negative values only get clamped to zero
/// when a bid is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub mu_r: f64,
    /// `None` when the budget is infinite (or the bidder ignores it).
    pub mu_b: Option<f64>,
    pub eta_r: f64,
    pub eta_b: Option<f64>,
}

impl MultiplierState {
    /// ROI-only start: `mu_R = gamma - 1`.
    pub fn roi_initial(spec: &AgentSpec, eta_r: f64) -> Self {
        Self {
            mu_r: spec.gamma - 1.0,
            mu_b: None,
            eta_r,
            eta_b: None,
        }
    }

    /// Joint start: `mu_R = gamma - 1`, `mu_B = vbar / rho - 1`. The budget
    /// multiplier is disabled when the budget is infinite.
    pub fn dual_initial(spec: &AgentSpec, eta_r: f64, eta_b: Option<f64>) -> Self {
        match spec.rho() {
            Some(rho) => Self {
                mu_r: spec.gamma - 1.0,
                mu_b: Some(spec.vbar / rho - 1.0),
                eta_r,
                eta_b: Some(
                    eta_b.unwrap_or_else(|| spec.default_rates().eta_b.unwrap_or_default()),
                ),
            },
            None => Self::roi_initial(spec, eta_r),
        }
    }

    /// The multiplier that sets the bid: `max{mu_R, mu_B, 0}`.
    pub fn effective(&self) -> f64 {
        match self.mu_b {
            Some(mu_b) => self.mu_r.max(mu_b).max(0.0),
            None => self.mu_r.max(0.0),
        }
    }

    pub fn bid(&self, value: f64) -> f64 {
        value / (1.0 + self.effective())
    }

    /// Applies one round of feedback. Both multipliers move, whichever of
    /// them determined the bid.
    pub fn update(&self, gamma: f64, rho: Option<f64>, value: f64, feedback: Feedback) -> Self {
        let mut next = *self;
        next.mu_r =
            self.mu_r + self.eta_r * (gamma * feedback.payment - value * feedback.allocation);
        if let (Some(mu_b), Some(eta_b), Some(rho)) = (self.mu_b, self.eta_b, rho) {
            next.mu_b = Some(mu_b + eta_b * (feedback.payment - rho));
        }
        next
    }

    /// Checks the learning-rate preconditions of the ex-post guarantees:
    /// `eta_R <= 1/vbar` and `eta_B <= min{1/rho, 1/vbar}`.
    pub fn check_rates(&self, spec: &AgentSpec) -> Result<(), StrategyError> {
        let roi_limit = 1.0 / spec.vbar;
        if !(self.eta_r > 0.0 && self.eta_r <= roi_limit) {
            return Err(StrategyError::LearningRateTooLarge {
                name: "eta_R",
                eta: self.eta_r,
                limit: roi_limit,
            });
        }
        if let (Some(eta_b), Some(rho)) = (self.eta_b, spec.rho()) {
            let limit = (1.0 / rho).min(1.0 / spec.vbar);
            if !(eta_b > 0.0 && eta_b <= limit) {
                return Err(StrategyError::LearningRateTooLarge {
                    name: "eta_B",
                    eta: eta_b,
                    limit,
                });
            }
        }
        Ok(())
    }
}

/// One round of ROI-only pacing: bid `v / (1 + max{mu_R, 0})`, then
/// `mu_R += eta_R (gamma p - v x)` from the realized outcome.
pub fn roi_pacer_step(
    state: &MultiplierState,
    spec: &AgentSpec,
    value: f64,
    feedback: Feedback,
) -> Result<(f64, MultiplierState), StrategyError> {
    spec.check_value(value)?;
    let state = MultiplierState {
        mu_b: None,
        eta_b: None,
        ..*state
    };
    state.check_rates(spec)?;
    Ok((
        state.bid(value),
        state.update(spec.gamma, None, value, feedback),
    ))
}

/// One round of joint ROI and budget pacing.
pub fn dual_pacer_step(
    state: &MultiplierState,
    spec: &AgentSpec,
    value: f64,
    feedback: Feedback,
) -> Result<(f64, MultiplierState), StrategyError> {
    spec.check_value(value)?;
    state.check_rates(spec)?;
    Ok((
        state.bid(value),
        state.update(spec.gamma, spec.rho(), value, feedback),
    ))
}

/// Pacing bidder: ROI-only or joint ROI and budget.
#[derive(Debug, Clone)]
pub struct PacingBidder {
    spec: AgentSpec,
    state: MultiplierState,
    pending: Option<f64>,
}

impl PacingBidder {
    pub fn roi(spec: AgentSpec, eta_r: f64, strict: bool) -> Result<Self, StrategyError> {
        let state = MultiplierState::roi_initial(&spec, eta_r);
        Self::with_state(spec, state, strict)
    }

    pub fn dual(
        spec: AgentSpec,
        rates: LearningRates,
        strict: bool,
    ) -> Result<Self, StrategyError> {
        let rates = rates.resolve(&spec);
        let state =
            MultiplierState::dual_initial(&spec, rates.eta_r.unwrap_or_default(), rates.eta_b);
        Self::with_state(spec, state, strict)
    }

    pub fn with_state(
        spec: AgentSpec,
        state: MultiplierState,
        strict: bool,
    ) -> Result<Self, StrategyError> {
        if strict {
            state.check_rates(&spec)?;
        }
        Ok(Self {
            spec,
            state,
            pending: None,
        })
    }

    pub fn state(&self) -> &MultiplierState {
        &self.state
    }
}

impl Bidder for PacingBidder {
    fn bid(&mut self, value: f64) -> Result<f64, StrategyError> {
        self.spec.check_value(value)?;
        self.pending = Some(value);
        Ok(self.state.bid(value))
    }

    fn observe(&mut self, feedback: Feedback) -> Result<(), StrategyError> {
        let value = self.pending.take().ok_or(StrategyError::NoPendingBid)?;
        let rho = if self.state.mu_b.is_some() {
            self.spec.rho()
        } else {
            None
        };
        self.state = self.state.update(self.spec.gamma, rho, value, feedback);
        Ok(())
    }

    fn frozen_bid(&self, value: f64) -> f64 {
        self.state.bid(value)
    }

    fn multipliers(&self) -> Option<MultiplierState> {
        Some(self.state)
    }
}
