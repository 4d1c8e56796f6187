//! Episode and sweep orchestration, seeds and file output.

pub mod config;
pub mod episode;
pub mod io;
pub mod sweep;

pub use config::{
    AgentConfig, Algorithm, ConfigError, EnvironmentConfig, ResolvedAgent, Scenario, SimConfig,
    SweepConfig, ValueUnits, SCHEMA_VERSION,
};
pub use episode::{
    build_bidders, run_episode, run_episode_with_bidders, AgentMeta, EpisodeError,
    PrefixViolations, RoundRecord, TrajectoryRecord,
};
pub use io::{
    read_trajectory, write_json, write_trajectory, EpisodeSummary, IoError, TrajectoryFormat,
};
pub use sweep::{
    episode_metrics, ex_ante_benchmark, hindsight_regret, run_sweep, EpisodeMetrics, MeanSe,
    SweepError, SweepSummary,
};
