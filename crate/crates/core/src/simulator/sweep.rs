//! Episode metrics and multi-horizon sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, Scenario, SimConfig};
use super::episode::{run_episode, EpisodeError, TrajectoryRecord};
use crate::auction::TieBreak;
use crate::environment::{Atom, CompetitionScript};
use crate::ledger::{
    constraint_audit, fit_regret_exponent_with_floor, liquid_welfare, ConstraintAudit, ExponentFit,
    WelfareReport,
};
use crate::oracle::{
    best_fixed_multiplier, ex_ante_from_atoms, hindsight_optimal_welfare, MultiplierSearch,
    OracleError,
};

/// Bisection tolerance for hindsight multipliers.
pub const REGRET_SEARCH_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("episode {episode} (T = {horizon}): {source}")]
    Episode {
        episode: u64,
        horizon: u64,
        source: EpisodeError,
    },
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("no sweep block in the config")]
    MissingSweep,
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub ex_ante: Option<f64>,
    pub hindsight: Option<f64>,
}

impl Benchmarks {
    /// Ex-ante optimum when available, else the hindsight optimum.
    pub fn preferred(&self) -> Option<f64> {
        self.ex_ante.or(self.hindsight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub horizon: u64,
    pub episode_id: u64,
    pub welfare: WelfareReport,
    pub benchmarks: Benchmarks,
    pub audits: Vec<ConstraintAudit>,
    /// Hindsight regret against the frozen competing bids; `None` for
    /// synthetic agents.
    pub regret: Vec<Option<f64>>,
}

/// Optimal ex-ante welfare of a scenario, `None` when the support cannot
/// be enumerated or the LP is too large.
pub fn ex_ante_benchmark(scenario: &Scenario) -> Result<Option<f64>, OracleError> {
    let Ok(atoms) = scenario.model.enumerate_support() else {
        return Ok(None);
    };
    let scaled: Vec<Atom> = atoms
        .into_iter()
        .map(|a| Atom {
            values: a
                .values
                .iter()
                .zip(&scenario.agents)
                .map(|(c, ag)| c * ag.value_scale)
                .collect(),
            prob: a.prob,
        })
        .collect();
    match ex_ante_from_atoms(&scaled, &scenario.specs()) {
        Ok(w) => Ok(Some(w.value)),
        Err(OracleError::InstanceTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn hindsight_benchmark(
    scenario: &Scenario,
    traj: &TrajectoryRecord,
) -> Result<Option<f64>, OracleError> {
    match hindsight_optimal_welfare(&traj.value_profiles(), &scenario.specs()) {
        Ok(w) => Ok(Some(w)),
        Err(OracleError::InstanceTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Regret of agent `k` against the best fixed multiplier replayed on the
/// competing bids it actually faced.
pub fn hindsight_regret(
    scenario: &Scenario,
    traj: &TrajectoryRecord,
    k: usize,
) -> Result<f64, OracleError> {
    let script = CompetitionScript::from_pairs(&traj.competition_pairs(k), f64::MAX)?;
    let wins_ties = k == 0 && scenario.auction.tie_break == TieBreak::LowestIndex;
    let spec = &scenario.agents[k].spec;
    let best = best_fixed_multiplier(
        &script,
        spec,
        &scenario.auction,
        wins_ties,
        MultiplierSearch::Bisection {
            tol: REGRET_SEARCH_TOL,
        },
    )?;
    Ok(best.value - traj.ledgers[k].cum_value)
}

/// Welfare, audits and regret of a finished episode. `ex_ante` is the
/// precomputed ex-ante benchmark for the scenario.
pub fn episode_metrics(
    scenario: &Scenario,
    traj: &TrajectoryRecord,
    ex_ante: Option<f64>,
) -> Result<EpisodeMetrics, OracleError> {
    let hindsight = hindsight_benchmark(scenario, traj)?;
    let benchmarks = Benchmarks { ex_ante, hindsight };
    let welfare = liquid_welfare(&traj.ledgers).with_benchmark(benchmarks.preferred());
    let audits = traj.ledgers.iter().map(constraint_audit).collect();
    let regret = (0..scenario.n_agents())
        .map(|k| {
            (!scenario.agents[k].synthetic)
                .then(|| hindsight_regret(scenario, traj, k))
                .transpose()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EpisodeMetrics {
        horizon: scenario.horizon,
        episode_id: traj.episode_id,
        welfare,
        benchmarks,
        audits,
        regret,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: u64,
    pub replicates: usize,
    pub welfare: MeanSe,
    pub revenue: MeanSe,
    pub ex_ante_benchmark: Option<f64>,
    pub hindsight_benchmark: Option<MeanSe>,
    pub welfare_ratio: Option<MeanSe>,
    /// Per agent, `None` for synthetic agents.
    pub regret: Vec<Option<MeanSe>>,
    pub roi_violations: Vec<usize>,
    pub budget_violations: Vec<usize>,
    pub max_roi_violation: Vec<f64>,
    pub max_budget_violation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub horizons: Vec<HorizonSummary>,
    /// Fit of mean regret against `T` for each non-synthetic agent.
    pub exponent_fits: Vec<Option<ExponentFit>>,
    /// Fit for agent 0.
    pub exponent_fit: Option<ExponentFit>,
}

/// Episode id of replicate `r` at horizon index `h`.
pub fn sweep_episode_id(horizon_index: usize, replicate: usize) -> u64 {
    ((horizon_index as u64) << 32) | replicate as u64
}

fn summarize_horizon(horizon: u64, metrics: &[EpisodeMetrics], n: usize) -> HorizonSummary {
    let collect = |f: &dyn Fn(&EpisodeMetrics) -> Option<f64>| -> Vec<f64> {
        metrics.iter().filter_map(f).collect()
    };
    let ratios = collect(&|m| m.welfare.ratio);
    let hindsight = collect(&|m| m.benchmarks.hindsight);
    let all_or_none = |xs: Vec<f64>| {
        if xs.len() == metrics.len() {
            MeanSe::of(&xs)
        } else {
            None
        }
    };
    HorizonSummary {
        horizon,
        replicates: metrics.len(),
        welfare: MeanSe::of(&collect(&|m| Some(m.welfare.total)))
            .unwrap_or(MeanSe { mean: 0.0, se: 0.0 }),
        revenue: MeanSe::of(&collect(&|m| Some(m.welfare.revenue)))
            .unwrap_or(MeanSe { mean: 0.0, se: 0.0 }),
        ex_ante_benchmark: metrics.first().and_then(|m| m.benchmarks.ex_ante),
        hindsight_benchmark: all_or_none(hindsight),
        welfare_ratio: all_or_none(ratios),
        regret: (0..n)
            .map(|k| all_or_none(collect(&|m| m.regret[k])))
            .collect(),
        roi_violations: (0..n)
            .map(|k| metrics.iter().filter(|m| !m.audits[k].roi_ok).count())
            .collect(),
        budget_violations: (0..n)
            .map(|k| metrics.iter().filter(|m| !m.audits[k].budget_ok).count())
            .collect(),
        max_roi_violation: (0..n)
            .map(|k| {
                metrics
                    .iter()
                    .map(|m| m.audits[k].roi_violation)
                    .fold(0.0, f64::max)
            })
            .collect(),
        max_budget_violation: (0..n)
            .map(|k| {
                metrics
                    .iter()
                    .map(|m| m.audits[k].budget_violation)
                    .fold(0.0, f64::max)
            })
            .collect(),
    }
}

/// Runs every `(horizon, replicate)` episode on up to `jobs` threads
/// (`None` for all cores) and aggregates. Output is independent of `jobs`.
pub fn run_sweep(config: &SimConfig, jobs: Option<usize>) -> Result<SweepSummary, SweepError> {
    let sweep = config.sweep.as_ref().ok_or(SweepError::MissingSweep)?;
    let scenarios = sweep
        .horizons
        .iter()
        .map(|&t| config.resolve(t))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;

    let mut horizons = Vec::with_capacity(scenarios.len());
    for (h, scenario) in scenarios.iter().enumerate() {
        let ex_ante = ex_ante_benchmark(scenario)?;
        let metrics: Vec<EpisodeMetrics> = pool.install(|| {
            (0..sweep.replicates)
                .into_par_iter()
                .map(|r| {
                    let episode = sweep_episode_id(h, r);
                    let traj =
                        run_episode(scenario, episode).map_err(|source| SweepError::Episode {
                            episode,
                            horizon: scenario.horizon,
                            source,
                        })?;
                    Ok(episode_metrics(scenario, &traj, ex_ante)?)
                })
                .collect::<Result<Vec<_>, SweepError>>()
        })?;
        horizons.push(summarize_horizon(
            scenario.horizon,
            &metrics,
            scenario.n_agents(),
        ));
    }

    let n = scenarios.first().map_or(0, Scenario::n_agents);
    let exponent_fits: Vec<Option<ExponentFit>> = (0..n)
        .map(|k| {
            let points: Vec<(u64, f64)> = horizons
                .iter()
                .filter_map(|h| h.regret[k].map(|r| (h.horizon, r.mean)))
                .collect();
            fit_regret_exponent_with_floor(&points).ok()
        })
        .collect();
    Ok(SweepSummary {
        seed: config.seed,
        exponent_fit: exponent_fits.first().copied().flatten(),
        exponent_fits,
        horizons,
    })
}
