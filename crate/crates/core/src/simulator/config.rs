//! JSON run configuration and its resolution into a concrete scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{AuctionConfig, AuctionError};
use crate::environment::{
    Atom, CompetitionScript, EnvError, EnvironmentKind, EnvironmentModel, Marginal,
};
use crate::strategies::{
    AgentSpec, Budget, LearningRates, MultiplierState, StrategyError, StrategyKind,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("agent {agent}: {source}")]
    Agent { agent: usize, source: StrategyError },
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Safe,
    RoiPacer,
    DualPacer,
    Greedy,
    EpsilonGreedy,
    DualLagrangian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Total budget; omit (or "inf") for none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    /// Per-round budget; the total is `rho * horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vbar: Option<f64>,
    #[serde(rename = "eta_R", default, skip_serializing_if = "Option::is_none")]
    pub eta_r: Option<f64>,
    #[serde(rename = "eta_B", default, skip_serializing_if = "Option::is_none")]
    pub eta_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, budget: Budget) -> Self {
        Self {
            algorithm,
            gamma,
            budget: Some(budget),
            rho: None,
            theta: 1.0,
            vbar: None,
            eta_r: None,
            eta_b: None,
            epsilon: None,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueUnits {
    /// Environment draws are effective values.
    #[default]
    Values,
    /// Environment draws are click rates `c`; agent `k` values `theta_k c`.
    ClickRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    DiscreteJoint {
        support: Vec<Atom>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vbar: Option<Vec<f64>>,
        #[serde(default)]
        units: ValueUnits,
    },
    IidParametric {
        marginals: Vec<Marginal>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vbar: Option<Vec<f64>>,
        #[serde(default)]
        units: ValueUnits,
    },
    /// CSV with header `round,agent_0,...` or a single-agent
    /// `round,value,competing_bid` script. Relative paths resolve against
    /// the config file's directory.
    Scripted {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vbar: Option<Vec<f64>>,
        #[serde(default)]
        units: ValueUnits,
    },
    /// Single-agent script given inline as `[value, competing_bid]` pairs.
    InlineScript {
        rounds: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vbar: Option<f64>,
    },
    /// Repeats the two-round pattern `(1, 1/4), (1, 3/4)` for `horizon`
    /// rounds, the canonical adversarial warm-up script.
    AlternatingScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub horizons: Vec<u64>,
    #[serde(default = "one_replicate")]
    pub replicates: usize,
}

fn one_replicate() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "AuctionConfig::second_price")]
    pub auction: AuctionConfig,
    pub environment: EnvironmentConfig,
    pub agents: Vec<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Reject pacing learning rates above the safe limits instead of warning.
    #[serde(default)]
    pub strict_rates: bool,
    /// Directory used to resolve relative script paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAgent {
    pub kind: StrategyKind,
    pub spec: AgentSpec,
    pub rates: LearningRates,
    /// Multiplies each environment draw into this agent's value.
    pub value_scale: f64,
    /// Added to the configured agents to play back a single-agent script.
    pub synthetic: bool,
}

/// A configuration fixed at one horizon, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon: u64,
    pub seed: u64,
    pub auction: AuctionConfig,
    pub model: EnvironmentModel,
    pub agents: Vec<ResolvedAgent>,
    pub strict_rates: bool,
    /// Learning-rate warnings produced in non-strict mode.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn specs(&self) -> Vec<AgentSpec> {
        self.agents.iter().map(|a| a.spec.clone()).collect()
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: SimConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(config.schema_version));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_json(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the configuration at its own horizon and every sweep horizon.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolve(self.horizon)?;
        if let Some(sweep) = &self.sweep {
            if sweep.horizons.is_empty() || sweep.replicates == 0 {
                return Err(ConfigError::Invalid(
                    "sweep needs at least one horizon and one replicate".into(),
                ));
            }
            for &t in &sweep.horizons {
                self.resolve(t)?;
            }
        }
        Ok(())
    }

    fn script_path(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Builds the environment; the flag marks a single-agent script that
    /// needs a truthful opponent appended.
    fn build_environment(
        &self,
        horizon: u64,
    ) -> Result<(EnvironmentModel, ValueUnits, bool), ConfigError> {
        let single = |script: CompetitionScript| -> Result<_, ConfigError> {
            Ok((script.to_model()?, ValueUnits::Values, true))
        };
        match &self.environment {
            EnvironmentConfig::DiscreteJoint {
                support,
                vbar,
                units,
            } => Ok((
                EnvironmentModel::new(
                    EnvironmentKind::DiscreteJoint {
                        support: support.clone(),
                    },
                    vbar.clone(),
                )?,
                *units,
                false,
            )),
            EnvironmentConfig::IidParametric {
                marginals,
                vbar,
                units,
            } => Ok((
                EnvironmentModel::new(
                    EnvironmentKind::IidParametric {
                        marginals: marginals.clone(),
                    },
                    vbar.clone(),
                )?,
                *units,
                false,
            )),
            EnvironmentConfig::Scripted { path, vbar, units } => {
                let path = self.script_path(path);
                let header = read_header(&path)?;
                if header == ["round", "value", "competing_bid"] {
                    let bound = vbar
                        .as_ref()
                        .and_then(|v| v.first().copied())
                        .unwrap_or(f64::MAX);
                    let script = CompetitionScript::from_csv(&path, bound)?;
                    let (mut model, _, flag) = single(script)?;
                    if let Some(v) = vbar {
                        model = EnvironmentModel::new(
                            model.kind,
                            Some(vec![v[0], v.get(1).copied().unwrap_or(v[0])]),
                        )?;
                    }
                    Ok((model, *units, flag))
                } else {
                    let model = EnvironmentModel::from_profile_csv(&path)?;
                    let model = match vbar {
                        Some(v) => EnvironmentModel::new(model.kind, Some(v.clone()))?,
                        None => model,
                    };
                    Ok((model, *units, false))
                }
            }
            EnvironmentConfig::InlineScript { rounds, vbar } => single(
                CompetitionScript::from_pairs(rounds, vbar.unwrap_or(f64::MAX))?,
            ),
            EnvironmentConfig::AlternatingScript => {
                let pairs: Vec<(f64, f64)> = (0..horizon)
                    .map(|t| (1.0, if t % 2 == 0 { 0.25 } else { 0.75 }))
                    .collect();
                single(CompetitionScript::from_pairs(&pairs, 1.0)?)
            }
        }
    }

    /// Resolves budgets, value bounds and learning rates at `horizon`.
    pub fn resolve(&self, horizon: u64) -> Result<Scenario, ConfigError> {
        if horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be >= 1".into()));
        }
        if self.agents.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one agent is required".into(),
            ));
        }
        self.auction.validate()?;
        let (model, units, single_script) = self.build_environment(horizon)?;
        let expected = self.agents.len() + usize::from(single_script);
        if model.n_agents != expected {
            return Err(ConfigError::Invalid(format!(
                "environment has {} value columns but {} agents are configured",
                model.n_agents,
                self.agents.len()
            )));
        }
        if let Some(rows) = model.script_len() {
            if (rows as u64) < horizon {
                return Err(ConfigError::Invalid(format!(
                    "script has {rows} rounds, horizon is {horizon}"
                )));
            }
        }

        let mut agents = Vec::with_capacity(expected);
        let mut warnings = Vec::new();
        for (k, cfg) in self.agents.iter().enumerate() {
            let agent_err = |source: StrategyError| ConfigError::Agent { agent: k, source };
            let scale = match units {
                ValueUnits::Values => 1.0,
                ValueUnits::ClickRates => cfg.theta,
            };
            let budget = match (cfg.budget, cfg.rho) {
                (Some(_), Some(_)) => {
                    return Err(agent_err(StrategyError::InvalidSpec(
                        "set either budget or rho, not both".into(),
                    )))
                }
                (Some(b), None) => b,
                (None, Some(rho)) => Budget::Finite(rho * horizon as f64),
                (None, None) => Budget::Infinite,
            };
            let vbar = cfg.vbar.unwrap_or(model.vbar[k] * scale);
            let spec =
                AgentSpec::new(cfg.gamma, budget, cfg.theta, vbar, horizon).map_err(agent_err)?;
            let rates = LearningRates {
                eta_r: cfg.eta_r,
                eta_b: cfg.eta_b,
            }
            .resolve(&spec);
            let kind = match cfg.algorithm {
                Algorithm::Safe => StrategyKind::Safe,
                Algorithm::RoiPacer => StrategyKind::RoiPacer,
                Algorithm::DualPacer => StrategyKind::DualPacer,
                Algorithm::Greedy => StrategyKind::Greedy,
                Algorithm::EpsilonGreedy => StrategyKind::EpsilonGreedy {
                    epsilon: cfg.epsilon.ok_or_else(|| {
                        agent_err(StrategyError::InvalidSpec(
                            "epsilon_greedy needs `epsilon`".into(),
                        ))
                    })?,
                },
                Algorithm::DualLagrangian => StrategyKind::DualLagrangian {
                    eta: cfg.eta.unwrap_or_else(|| rates.eta_r.unwrap_or_default()),
                },
            };
            if kind.is_pacer() {
                let state = match kind {
                    StrategyKind::RoiPacer => {
                        MultiplierState::roi_initial(&spec, rates.eta_r.unwrap_or_default())
                    }
                    _ => MultiplierState::dual_initial(
                        &spec,
                        rates.eta_r.unwrap_or_default(),
                        rates.eta_b,
                    ),
                };
                if let Err(e) = state.check_rates(&spec) {
                    if self.strict_rates {
                        return Err(agent_err(e));
                    }
                    warnings.push(format!("agent {k}: {e}; ex-post guarantees do not apply"));
                }
            }
            agents.push(ResolvedAgent {
                kind,
                spec,
                rates,
                value_scale: scale,
                synthetic: false,
            });
        }
        if single_script {
            let spec = AgentSpec::new(1.0, Budget::Infinite, 1.0, model.vbar[1], horizon)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            agents.push(ResolvedAgent {
                kind: StrategyKind::Safe,
                spec,
                rates: LearningRates::default(),
                value_scale: 1.0,
                synthetic: true,
            });
        }
        Ok(Scenario {
            horizon,
            seed: self.seed,
            auction: self.auction,
            model,
            agents,
            strict_rates: self.strict_rates,
            warnings,
        })
    }
}

fn read_header(path: &Path) -> Result<Vec<String>, ConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let header = reader.headers().map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(header.iter().map(str::to_string).collect())
}
