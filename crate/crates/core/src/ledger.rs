//! Per-agent accounting and post-hoc metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::RoundOutcome;
use crate::strategies::{AgentSpec, Budget};

/// Absolute tolerance for constraint audits.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least 3 points with distinct horizons, got {0}")]
    TooFewPoints(usize),
    #[error("regret {regret} at T = {horizon} is not positive")]
    NonPositiveRegret { horizon: u64, regret: f64 },
    #[error("horizons must be distinct")]
    DuplicateHorizon,
    #[error("empty sequence")]
    Empty,
}

/// Running constraint aggregates for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLedger {
    pub gamma: f64,
    pub budget: Budget,
    pub cum_value: f64,
    pub cum_spend: f64,
    /// `sum(v x - gamma p)`, accumulated term by term.
    pub roi_slack: f64,
}

impl AgentLedger {
    pub fn new(spec: &AgentSpec) -> Self {
        Self {
            gamma: spec.gamma,
            budget: spec.budget,
            cum_value: 0.0,
            cum_spend: 0.0,
            roi_slack: 0.0,
        }
    }

    pub fn record(&mut self, value: f64, allocation: f64, payment: f64) {
        let won = value * allocation;
        self.cum_value += won;
        self.cum_spend += payment;
        self.roi_slack += won - self.gamma * payment;
        debug_assert!(
            (self.roi_slack - (self.cum_value - self.gamma * self.cum_spend)).abs()
                <= 1e-9 * (1.0 + self.cum_value + self.gamma * self.cum_spend)
        );
    }

    pub fn budget_slack(&self) -> f64 {
        self.budget.as_f64() - self.cum_spend
    }

    /// Willingness to pay for what was won: `min{B, cum_value / gamma}`.
    pub fn liquid_value(&self) -> f64 {
        self.budget.as_f64().min(self.cum_value / self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub roi_ok: bool,
    pub budget_ok: bool,
    pub roi_violation: f64,
    pub budget_violation: f64,
    pub roi_slack: f64,
    pub budget_slack: f64,
}

pub fn constraint_audit(ledger: &AgentLedger) -> ConstraintAudit {
    let roi_violation = (ledger.gamma * ledger.cum_spend - ledger.cum_value).max(0.0);
    let budget_violation = (ledger.cum_spend - ledger.budget.as_f64()).max(0.0);
    ConstraintAudit {
        roi_ok: roi_violation <= AUDIT_TOLERANCE,
        budget_ok: budget_violation <= AUDIT_TOLERANCE,
        roi_violation,
        budget_violation,
        roi_slack: ledger.cum_value - ledger.gamma * ledger.cum_spend,
        budget_slack: ledger.budget_slack(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub per_agent: Vec<f64>,
    pub total: f64,
    pub revenue: f64,
    pub benchmark: Option<f64>,
    pub ratio: Option<f64>,
}

impl WelfareReport {
    pub fn with_benchmark(mut self, benchmark: Option<f64>) -> Self {
        self.benchmark = benchmark;
        self.ratio = benchmark.filter(|b| *b > 0.0).map(|b| self.total / b);
        self
    }
}

/// Liquid welfare `sum_k min{B_k, cum_value_k / gamma_k}` of finished ledgers.
pub fn liquid_welfare(ledgers: &[AgentLedger]) -> WelfareReport {
    let per_agent: Vec<f64> = ledgers.iter().map(AgentLedger::liquid_value).collect();
    WelfareReport {
        total: per_agent.iter().sum(),
        per_agent,
        revenue: ledgers.iter().map(|l| l.cum_spend).sum(),
        benchmark: None,
        ratio: None,
    }
}

/// Total variation `sum |s[t+1] - s[t]|`.
pub fn path_length(seq: &[f64]) -> Result<f64, MetricsError> {
    if seq.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

pub fn revenue(outcomes: &[RoundOutcome]) -> f64 {
    outcomes.iter().map(RoundOutcome::revenue).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
    pub points_dropped: usize,
}

/// Least squares of `ln regret` on `ln T`; the slope is the exponent.
pub fn fit_regret_exponent(points: &[(u64, f64)]) -> Result<ExponentFit, MetricsError> {
    if let Some(&(horizon, regret)) = points.iter().find(|(_, r)| r.is_nan() || *r <= 0.0) {
        return Err(MetricsError::NonPositiveRegret { horizon, regret });
    }
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    let mut horizons: Vec<u64> = points.iter().map(|p| p.0).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() != points.len() {
        return Err(MetricsError::DuplicateHorizon);
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    // A flat series is fit perfectly by a zero slope.
    let r_squared = if syy <= f64::EPSILON * n {
        1.0
    } else {
        1.0 - sse / syy
    };
    Ok(ExponentFit {
        exponent,
        intercept,
        r_squared,
        points_used: points.len(),
        points_dropped: 0,
    })
}

/// Drops non-positive regrets before fitting and reports how many.
pub fn fit_regret_exponent_with_floor(points: &[(u64, f64)]) -> Result<ExponentFit, MetricsError> {
    let kept: Vec<(u64, f64)> = points.iter().copied().filter(|(_, r)| *r > 0.0).collect();
    let dropped = points.len() - kept.len();
    let mut fit = fit_regret_exponent(&kept)?;
    fit.points_dropped = dropped;
    Ok(fit)
}
