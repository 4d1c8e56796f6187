//! Single-item auctions interpolating between second price and first price.
//!
//! The winner is always drawn from the agents with the highest effective bid
//! and pays `alpha * highest + (1 - alpha) * second_highest` per unit. With a
//! single bidder the second-highest bid is taken to be zero.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AuctionError {
    #[error("bid profile is empty")]
    EmptyProfile,
    #[error("bid {bid} of agent {agent} is negative or not finite")]
    NegativeBid { agent: usize, bid: f64 },
    #[error("payment interpolation alpha = {0} is outside [0, 1]")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    SeededUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    /// 0 is second price, 1 is first price.
    pub alpha: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl AuctionConfig {
    pub fn new(alpha: f64, tie_break: TieBreak) -> Result<Self, AuctionError> {
        let config = Self { alpha, tie_break };
        config.validate()?;
        Ok(config)
    }

    pub fn second_price() -> Self {
        Self {
            alpha: 0.0,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn first_price() -> Self {
        Self {
            alpha: 1.0,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AuctionError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }

    /// Per-unit price paid by a winner bidding `highest` against `second`.
    pub fn price(&self, highest: f64, second: f64) -> f64 {
        self.alpha * highest + (1.0 - self.alpha) * second
    }
}

/// Effective bids `b_k = c_k * beta_k`, validated to be finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile(Vec<f64>);

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Result<Self, AuctionError> {
        if bids.is_empty() {
            return Err(AuctionError::EmptyProfile);
        }
        if let Some((agent, &bid)) = bids
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b >= 0.0))
        {
            return Err(AuctionError::NegativeBid { agent, bid });
        }
        Ok(Self(bids))
    }

    pub fn bids(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest bid among all agents other than `agent` (0 when alone).
    pub fn highest_competing(&self, agent: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != agent)
            .map(|(_, b)| *b)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub allocation: Vec<f64>,
    pub payments: Vec<f64>,
    pub winner: Option<usize>,
}

impl RoundOutcome {
    pub fn empty(n: usize) -> Self {
        Self {
            allocation: vec![0.0; n],
            payments: vec![0.0; n],
            winner: None,
        }
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// Runs one auction. The `rng` is only consulted for `SeededUniform` ties.
pub fn run_auction<R: Rng + ?Sized>(
    bids: &BidProfile,
    config: &AuctionConfig,
    rng: &mut R,
) -> Result<RoundOutcome, AuctionError> {
    config.validate()?;
    let b = bids.bids();
    let n = b.len();
    let highest = b.iter().copied().fold(0.0, f64::max);
    if highest <= 0.0 {
        return Ok(RoundOutcome::empty(n));
    }

    let top: Vec<usize> = (0..n).filter(|&k| b[k] == highest).collect();
    let winner = match config.tie_break {
        TieBreak::LowestIndex => top[0],
        TieBreak::SeededUniform if top.len() > 1 => top[rng.random_range(0..top.len())],
        TieBreak::SeededUniform => top[0],
    };
    let second = bids.highest_competing(winner);

    let mut outcome = RoundOutcome::empty(n);
    outcome.allocation[winner] = 1.0;
    // Clamp guards the interval against rounding in the interpolation.
    outcome.payments[winner] = config.price(highest, second).clamp(second, highest);
    outcome.winner = Some(winner);
    Ok(outcome)
}
