//! One episode: environment, strategies, auction and ledgers, round by round.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Scenario;
use crate::auction::{run_auction, AuctionError, BidProfile};
use crate::environment::EnvError;
use crate::ledger::AgentLedger;
use crate::rng::{stream, Purpose};
use crate::strategies::{build_bidder, Bidder, Budget, Feedback, StrategyError};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("strategies: agent {agent} at round {round}: {source}")]
    Strategy {
        round: u64,
        agent: usize,
        source: StrategyError,
    },
    #[error("environment at round {round}: {source}")]
    Environment { round: u64, source: EnvError },
    #[error("auction at round {round}: {source}")]
    Auction { round: u64, source: AuctionError },
    #[error("simulator at round {round}: {message}")]
    Conservation { round: u64, message: String },
}

/// Static description of one agent, stored alongside its trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub algorithm: String,
    pub gamma: f64,
    pub budget: Budget,
    pub vbar: f64,
    #[serde(default)]
    pub synthetic: bool,
}

/// State and outcome of round `t` (1-based). Multipliers are the ones the
/// bids were formed from; cumulative columns include round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub values: Vec<f64>,
    pub mu_r: Vec<Option<f64>>,
    pub mu_b: Vec<Option<f64>>,
    pub bids: Vec<f64>,
    pub winner: Option<usize>,
    pub allocation: Vec<f64>,
    pub payments: Vec<f64>,
    pub cum_spend: Vec<f64>,
    pub cum_value: Vec<f64>,
}

impl RoundRecord {
    /// Effective multiplier `max{mu_R, mu_B, 0}` of agent `k`.
    pub fn mu(&self, k: usize) -> Option<f64> {
        self.mu_r[k].map(|r| r.max(self.mu_b[k].unwrap_or(0.0)).max(0.0))
    }

    /// Highest bid among the other agents.
    pub fn competing_bid(&self, k: usize) -> f64 {
        self.bids
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, b)| *b)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode_id: u64,
    pub agents: Vec<AgentMeta>,
    pub rounds: Vec<RoundRecord>,
    pub ledgers: Vec<AgentLedger>,
}

/// Largest constraint violations of one agent over all prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrefixViolations {
    pub roi: f64,
    pub budget: f64,
    /// Largest `sum_{s<=t} p_s - rho t`; zero without a budget.
    pub pro_rata_budget: f64,
}

impl TrajectoryRecord {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// Replays the per-round columns into fresh ledgers term by term.
    pub fn replay_ledgers(&self) -> Vec<AgentLedger> {
        let mut ledgers: Vec<AgentLedger> =
            self.agents.iter().map(AgentMeta::empty_ledger).collect();
        for r in &self.rounds {
            for (k, l) in ledgers.iter_mut().enumerate() {
                l.record(r.values[k], r.allocation[k], r.payments[k]);
            }
        }
        ledgers
    }

    /// Worst ROI, budget and pro-rata budget violation of each agent over
    /// every prefix of the episode.
    pub fn prefix_violations(&self) -> Vec<PrefixViolations> {
        let t_total = self.rounds.len() as f64;
        self.agents
            .iter()
            .enumerate()
            .map(|(k, meta)| {
                let mut ledger = meta.empty_ledger();
                let mut worst = PrefixViolations::default();
                let rho = meta
                    .budget
                    .is_finite()
                    .then(|| meta.budget.as_f64() / t_total);
                for (i, r) in self.rounds.iter().enumerate() {
                    ledger.record(r.values[k], r.allocation[k], r.payments[k]);
                    worst.roi = worst.roi.max(-ledger.roi_slack);
                    worst.budget = worst.budget.max(-ledger.budget_slack());
                    if let Some(rho) = rho {
                        worst.pro_rata_budget = worst
                            .pro_rata_budget
                            .max(ledger.cum_spend - rho * (i + 1) as f64);
                    }
                }
                worst
            })
            .collect()
    }

    /// `(value, highest competing bid)` pairs seen by agent `k`.
    pub fn competition_pairs(&self, k: usize) -> Vec<(f64, f64)> {
        self.rounds
            .iter()
            .map(|r| (r.values[k], r.competing_bid(k)))
            .collect()
    }

    pub fn value_profiles(&self) -> Vec<Vec<f64>> {
        self.rounds.iter().map(|r| r.values.clone()).collect()
    }
}

impl AgentMeta {
    fn empty_ledger(&self) -> AgentLedger {
        AgentLedger {
            gamma: self.gamma,
            budget: self.budget,
            cum_value: 0.0,
            cum_spend: 0.0,
            roi_slack: 0.0,
        }
    }
}

pub fn build_bidders(
    scenario: &Scenario,
    episode_id: u64,
) -> Result<Vec<Box<dyn Bidder>>, EpisodeError> {
    scenario
        .agents
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let rng = stream(scenario.seed, episode_id, Purpose::Strategy(k));
            build_bidder(a.kind, &a.spec, a.rates, rng, scenario.strict_rates).map_err(|source| {
                EpisodeError::Strategy {
                    round: 0,
                    agent: k,
                    source,
                }
            })
        })
        .collect()
}

/// Runs one episode. Deterministic given `(scenario, episode_id)`.
pub fn run_episode(scenario: &Scenario, episode_id: u64) -> Result<TrajectoryRecord, EpisodeError> {
    run_episode_with_bidders(scenario, episode_id).map(|(traj, _)| traj)
}

/// Like [`run_episode`], also returning the bidders in their final state.
pub fn run_episode_with_bidders(
    scenario: &Scenario,
    episode_id: u64,
) -> Result<(TrajectoryRecord, Vec<Box<dyn Bidder>>), EpisodeError> {
    let n = scenario.n_agents();
    let mut bidders = build_bidders(scenario, episode_id)?;
    let mut profiles = scenario
        .model
        .stream(stream(scenario.seed, episode_id, Purpose::Environment))
        .map_err(|source| EpisodeError::Environment { round: 0, source })?;
    let mut ties = stream(scenario.seed, episode_id, Purpose::Ties);
    let mut ledgers: Vec<AgentLedger> = scenario
        .agents
        .iter()
        .map(|a| AgentLedger::new(&a.spec))
        .collect();
    let mut rounds = Vec::with_capacity(scenario.horizon as usize);

    for t in 1..=scenario.horizon {
        let raw = profiles
            .sample_profile()
            .map_err(|source| EpisodeError::Environment { round: t, source })?;
        let values: Vec<f64> = raw
            .iter()
            .zip(&scenario.agents)
            .map(|(c, a)| c * a.value_scale)
            .collect();
        let states: Vec<_> = bidders.iter().map(|b| b.multipliers()).collect();
        let bids = bidders
            .iter_mut()
            .zip(&values)
            .enumerate()
            .map(|(k, (b, &v))| {
                b.bid(v).map_err(|source| EpisodeError::Strategy {
                    round: t,
                    agent: k,
                    source,
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let profile = BidProfile::new(bids.clone())
            .map_err(|source| EpisodeError::Auction { round: t, source })?;
        let outcome = run_auction(&profile, &scenario.auction, &mut ties)
            .map_err(|source| EpisodeError::Auction { round: t, source })?;

        let allocated: f64 = outcome.allocation.iter().sum();
        let winner_paid = outcome.winner.map_or(0.0, |w| outcome.payments[w]);
        if allocated > 1.0 || outcome.revenue() != winner_paid {
            return Err(EpisodeError::Conservation {
                round: t,
                message: format!(
                    "allocation sum {allocated}, payments {:?}",
                    outcome.payments
                ),
            });
        }

        for (k, bidder) in bidders.iter_mut().enumerate() {
            // Each agent sees only its own allocation and payment.
            let feedback = Feedback::new(outcome.allocation[k], outcome.payments[k]);
            bidder
                .observe(feedback)
                .map_err(|source| EpisodeError::Strategy {
                    round: t,
                    agent: k,
                    source,
                })?;
            ledgers[k].record(values[k], outcome.allocation[k], outcome.payments[k]);
        }
        rounds.push(RoundRecord {
            t,
            values,
            mu_r: states.iter().map(|s| s.map(|s| s.mu_r)).collect(),
            mu_b: states.iter().map(|s| s.and_then(|s| s.mu_b)).collect(),
            bids,
            winner: outcome.winner,
            allocation: outcome.allocation,
            payments: outcome.payments,
            cum_spend: ledgers.iter().map(|l| l.cum_spend).collect(),
            cum_value: ledgers.iter().map(|l| l.cum_value).collect(),
        });
    }
    debug_assert_eq!(rounds.len(), scenario.horizon as usize);
    let agents = scenario
        .agents
        .iter()
        .map(|a| AgentMeta {
            algorithm: a.kind.name().to_string(),
            gamma: a.spec.gamma,
            budget: a.spec.budget,
            vbar: a.spec.vbar,
            synthetic: a.synthetic,
        })
        .collect();
    debug_assert_eq!(n, ledgers.len());
    Ok((
        TrajectoryRecord {
            episode_id,
            agents,
            rounds,
            ledgers,
        },
        bidders,
    ))
}
