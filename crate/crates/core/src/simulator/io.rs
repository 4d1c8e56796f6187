//! Trajectory and summary files.
//!
//! A trajectory is written either as CSV with columns
//! `t, v_k, muR_k, muB_k, bid_k, x_k, p_k, cumspend_k, cumvalue_k` (empty
//! field where a multiplier does not exist) or as JSON holding the same
//! numbers. Agent constraints go into a `<trajectory>.agents.json` sidecar so
//! a trajectory can be audited on its own.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::episode::{AgentMeta, RoundRecord, TrajectoryRecord};
use super::sweep::EpisodeMetrics;
use crate::ledger::{ConstraintAudit, ExponentFit};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{path}: malformed trajectory: {message}")]
    Format { path: String, message: String },
}

fn file_err(path: &Path, e: impl ToString) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    #[default]
    Csv,
    Json,
}

impl TrajectoryFormat {
    /// Format implied by a file extension, CSV unless it ends in `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => TrajectoryFormat::Json,
            _ => TrajectoryFormat::Csv,
        }
    }
}

const COLUMN_GROUPS: [&str; 8] = ["v", "muR", "muB", "bid", "x", "p", "cumspend", "cumvalue"];

pub fn csv_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(
            COLUMN_GROUPS
                .iter()
                .flat_map(|g| (0..n).map(move |k| format!("{g}_{k}"))),
        )
        .collect()
}

/// Shortest decimal that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sidecar_path(trajectory: &Path) -> PathBuf {
    let mut name = trajectory.file_name().unwrap_or_default().to_os_string();
    name.push(".agents.json");
    trajectory.with_file_name(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonTrajectory {
    episode_id: u64,
    agents: Vec<AgentMeta>,
    rounds: Vec<RoundRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    episode_id: u64,
    agents: Vec<AgentMeta>,
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn trajectory_csv(traj: &TrajectoryRecord) -> Result<String, csv::Error> {
    let n = traj.n_agents();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(csv_header(n))?;
    for r in &traj.rounds {
        let mut row = vec![r.t.to_string()];
        row.extend(r.values.iter().copied().map(num));
        row.extend(r.mu_r.iter().copied().map(opt));
        row.extend(r.mu_b.iter().copied().map(opt));
        for col in [
            &r.bids,
            &r.allocation,
            &r.payments,
            &r.cum_spend,
            &r.cum_value,
        ] {
            row.extend(col.iter().copied().map(num));
        }
        writer.write_record(&row)?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the trajectory and its sidecar.
pub fn write_trajectory(
    traj: &TrajectoryRecord,
    path: &Path,
    format: TrajectoryFormat,
) -> Result<(), IoError> {
    let body = match format {
        TrajectoryFormat::Csv => trajectory_csv(traj).map_err(|e| file_err(path, e))?,
        TrajectoryFormat::Json => {
            let doc = JsonTrajectory {
                episode_id: traj.episode_id,
                agents: traj.agents.clone(),
                rounds: traj.rounds.clone(),
            };
            serde_json::to_string_pretty(&doc).map_err(|e| file_err(path, e))? + "\n"
        }
    };
    write_text(path, &body)?;
    let sidecar = Sidecar {
        episode_id: traj.episode_id,
        agents: traj.agents.clone(),
    };
    write_text(
        &sidecar_path(path),
        &(serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n"),
    )
}

fn parse_csv_rounds(path: &Path, text: &str, n: usize) -> Result<Vec<RoundRecord>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| file_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header(n) {
        return Err(format_err(
            path,
            format!("header does not match {n} agents: {}", header.join(",")),
        ));
    }
    let mut rounds = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| file_err(path, e))?;
        let field = |i: usize| -> Result<Option<f64>, IoError> {
            let s = &record[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| format_err(path, format!("row {line}, column {}: {e}", header[i])))
        };
        let group = |g: usize, optional: bool| -> Result<Vec<Option<f64>>, IoError> {
            (0..n)
                .map(|k| {
                    let v = field(1 + g * n + k)?;
                    if v.is_none() && !optional {
                        return Err(format_err(
                            path,
                            format!("row {line}: empty {}", header[1 + g * n + k]),
                        ));
                    }
                    Ok(v)
                })
                .collect()
        };
        let required = |g: usize| -> Result<Vec<f64>, IoError> {
            Ok(group(g, false)?.into_iter().flatten().collect())
        };
        let t: u64 = record[0]
            .parse()
            .map_err(|e| format_err(path, format!("row {line}: bad round index: {e}")))?;
        let allocation = required(4)?;
        rounds.push(RoundRecord {
            t,
            values: required(0)?,
            mu_r: group(1, true)?,
            mu_b: group(2, true)?,
            bids: required(3)?,
            winner: allocation.iter().position(|&x| x > 0.0),
            allocation,
            payments: required(5)?,
            cum_spend: required(6)?,
            cum_value: required(7)?,
        });
    }
    Ok(rounds)
}

/// Reads a trajectory. Agent constraints come from `agents` when given,
/// else from the sidecar.
pub fn read_trajectory(
    path: &Path,
    agents: Option<Vec<AgentMeta>>,
) -> Result<TrajectoryRecord, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let sidecar = || -> Result<Sidecar, IoError> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| file_err(&side, e))?;
        serde_json::from_str(&text).map_err(|e| format_err(&side, e.to_string()))
    };
    let (episode_id, metas, rounds) = match TrajectoryFormat::from_path(path) {
        TrajectoryFormat::Json => {
            let doc: JsonTrajectory =
                serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
            (doc.episode_id, agents.unwrap_or(doc.agents), doc.rounds)
        }
        TrajectoryFormat::Csv => {
            let (episode_id, metas) = match agents {
                Some(a) => (0, a),
                None => {
                    let s = sidecar()?;
                    (s.episode_id, s.agents)
                }
            };
            let rounds = parse_csv_rounds(path, &text, metas.len())?;
            (episode_id, metas, rounds)
        }
    };
    let mut traj = TrajectoryRecord {
        episode_id,
        agents: metas,
        rounds,
        ledgers: Vec::new(),
    };
    check_consistency(path, &traj)?;
    traj.ledgers = traj.replay_ledgers();
    Ok(traj)
}

/// Checks row count, round numbering and that cumulative columns are
/// prefix sums of the per-round columns.
fn check_consistency(path: &Path, traj: &TrajectoryRecord) -> Result<(), IoError> {
    let n = traj.n_agents();
    let mut spend = vec![0.0; n];
    let mut value = vec![0.0; n];
    for (i, r) in traj.rounds.iter().enumerate() {
        if r.t != i as u64 + 1 {
            return Err(format_err(
                path,
                format!("round {} out of order at row {i}", r.t),
            ));
        }
        let widths = [
            r.values.len(),
            r.mu_r.len(),
            r.mu_b.len(),
            r.bids.len(),
            r.allocation.len(),
            r.payments.len(),
        ];
        if widths.iter().any(|&w| w != n) {
            return Err(format_err(
                path,
                format!("round {} does not have {n} agents", r.t),
            ));
        }
        for k in 0..n {
            spend[k] += r.payments[k];
            value[k] += r.values[k] * r.allocation[k];
            let tol = 1e-9 * (1.0 + spend[k].abs() + value[k].abs());
            if (r.cum_spend[k] - spend[k]).abs() > tol || (r.cum_value[k] - value[k]).abs() > tol {
                return Err(format_err(
                    path,
                    format!(
                        "round {}: cumulative columns of agent {k} are not prefix sums",
                        r.t
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Welfare block of an episode summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSummary {
    pub per_agent: Vec<f64>,
    pub total: f64,
    pub benchmark: Option<f64>,
    pub ratio: Option<f64>,
    pub ex_ante_benchmark: Option<f64>,
    pub hindsight_benchmark: Option<f64>,
}

/// Summary of one simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub horizon: u64,
    pub seed: u64,
    pub welfare: WelfareSummary,
    pub audits: Vec<ConstraintAudit>,
    pub revenue: f64,
    pub regret: Vec<Option<f64>>,
    pub exponent_fit: Option<ExponentFit>,
    pub warnings: Vec<String>,
}

impl EpisodeSummary {
    pub fn new(metrics: &EpisodeMetrics, seed: u64, warnings: Vec<String>) -> Self {
        Self {
            horizon: metrics.horizon,
            seed,
            welfare: WelfareSummary {
                per_agent: metrics.welfare.per_agent.clone(),
                total: metrics.welfare.total,
                benchmark: metrics.welfare.benchmark,
                ratio: metrics.welfare.ratio,
                ex_ante_benchmark: metrics.benchmarks.ex_ante,
                hindsight_benchmark: metrics.benchmarks.hindsight,
            },
            audits: metrics.audits.clone(),
            revenue: metrics.welfare.revenue,
            regret: metrics.regret.clone(),
            exponent_fit: None,
            warnings,
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| file_err(path, e))? + "\n";
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::config::SimConfig;
    use crate::simulator::episode::run_episode;

    fn trajectory() -> TrajectoryRecord {
        let config = SimConfig::from_json(
            r#"{"schema_version": 1, "horizon": 50, "seed": 2,
                "environment": {"kind": "iid_parametric", "marginals": [
                    {"type": "uniform", "a": 0.0, "b": 1.0}, {"type": "uniform", "a": 0.0, "b": 0.8}]},
                "agents": [{"algorithm": "dual_pacer", "gamma": 1.3, "rho": 0.1},
                           {"algorithm": "safe", "gamma": 1.0}]}"#,
        )
        .unwrap();
        run_episode(&config.resolve(50).unwrap(), 0).unwrap()
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(1),
            [
                "t",
                "v_0",
                "muR_0",
                "muB_0",
                "bid_0",
                "x_0",
                "p_0",
                "cumspend_0",
                "cumvalue_0"
            ]
        );
        assert_eq!(csv_header(2)[1..3], ["v_0".to_string(), "v_1".to_string()]);
    }

    #[test]
    fn both_formats_round_trip_exactly() {
        let traj = trajectory();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [
            ("t.csv", TrajectoryFormat::Csv),
            ("t.json", TrajectoryFormat::Json),
        ] {
            let path = dir.path().join(name);
            write_trajectory(&traj, &path, format).unwrap();
            let back = read_trajectory(&path, None).unwrap();
            assert_eq!(back.agents, traj.agents);
            assert_eq!(back.ledgers, traj.ledgers);
            for (a, b) in back.rounds.iter().zip(&traj.rounds) {
                assert_eq!(a.values, b.values);
                assert_eq!(a.mu_r, b.mu_r);
                assert_eq!(a.mu_b, b.mu_b);
                assert_eq!(a.payments, b.payments);
                assert_eq!(a.cum_value, b.cum_value);
            }
        }
    }

    #[test]
    fn tampered_cumulative_column_is_rejected() {
        let mut traj = trajectory();
        traj.rounds[10].cum_spend[0] += 1.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&traj, &path, TrajectoryFormat::Csv).unwrap();
        assert!(matches!(
            read_trajectory(&path, None),
            Err(IoError::Format { .. })
        ));
    }
}
