//! Command line front end: `simulate`, `sweep`, `benchmark`, `audit`, `fit`.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::auction::TieBreak;
use crate::environment::{Atom, EnvironmentKind};
use crate::ledger::{constraint_audit, fit_regret_exponent, ConstraintAudit, ExponentFit};
use crate::oracle::curves::{DEFAULT_H_GRID_POINTS, MONOTONE_GRID_POINTS};
use crate::oracle::{
    ex_ante_from_atoms, pacing_multipliers, uniform_grid, CompetingBid, CurvePoint, ExpectedCurves,
    JointAtom, OptimalWelfare, OracleError, PacingBenchmark,
};
use crate::simulator::io::sidecar_path;
use crate::simulator::{
    build_bidders, episode_metrics, ex_ante_benchmark, read_trajectory, run_episode,
    run_episode_with_bidders, run_sweep, write_json, write_trajectory, AgentMeta, EpisodeSummary,
    Scenario, SimConfig, SweepSummary, TrajectoryFormat,
};
use crate::strategies::{Bidder, StrategyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that overrides the config seed when `--seed` is absent.
pub const SEED_ENV: &str = "AUTOBID_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "autobid",
    version,
    about = "Simulate and verify ROI- and budget-constrained autobidding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the config and AUTOBID_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reject pacing learning rates above the safe limits.
    #[arg(long)]
    pub strict_rates: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode, write its trajectory and summary.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory (default: paths from the config, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TrajectoryFormat::Csv)]
        format: TrajectoryFormat,
    },
    /// Run every (horizon, replicate) episode and fit the regret exponent.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Summary JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Expected curves, pacing multipliers and optimal welfare.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid points for the sampled curves.
        #[arg(long, default_value_t = MONOTONE_GRID_POINTS)]
        points: usize,
        /// Monte Carlo samples for continuous environments.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Check a trajectory against each agent's ROI and budget constraints.
    Audit {
        /// Trajectory file (CSV or JSON).
        trajectory: PathBuf,
        /// Take agent constraints from this config instead of the sidecar.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit `regret ~ T^e` from a sweep summary or inline `T:regret` points.
    Fit {
        summary: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<String>>,
        /// Agent whose regret a summary fit uses.
        #[arg(long, default_value_t = 0)]
        agent: usize,
    },
}

/// An error tagged with the module it came from.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(e: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn runtime(module: &str, e: impl Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: format!("{module}: {e}"),
        }
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(line) => {
            println!("{line}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("autobid: {}", e.message);
            e.code
        }
    }
}

fn load_config(run: &RunArgs) -> Result<SimConfig, CliError> {
    let mut config = SimConfig::load(&run.config).map_err(CliError::usage)?;
    if let Some(seed) = run.seed {
        config.seed = seed;
    } else if let Ok(text) = std::env::var(SEED_ENV) {
        config.seed = text
            .trim()
            .parse()
            .map_err(|e| CliError::usage(format!("{SEED_ENV}={text}: {e}")))?;
    }
    config.strict_rates |= run.strict_rates;
    config.validate().map_err(CliError::usage)?;
    Ok(config)
}

fn resolve(config: &SimConfig) -> Result<Scenario, CliError> {
    let scenario = config.resolve(config.horizon).map_err(CliError::usage)?;
    for w in &scenario.warnings {
        eprintln!("autobid: warning: {w}");
    }
    Ok(scenario)
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Simulate { run, out, format } => simulate(&run, out, format),
        Command::Sweep {
            run,
            out,
            horizons,
            replicates,
            jobs,
        } => sweep(&run, out, horizons, replicates, jobs),
        Command::Benchmark {
            run,
            out,
            points,
            samples,
        } => benchmark(&run, out, points, samples),
        Command::Audit { trajectory, config } => audit(&trajectory, config.as_deref()),
        Command::Fit {
            summary,
            points,
            agent,
        } => fit(summary.as_deref(), points, agent),
    }
}

fn simulate(
    run: &RunArgs,
    out: Option<PathBuf>,
    format: TrajectoryFormat,
) -> Result<String, CliError> {
    let config = load_config(run)?;
    let scenario = resolve(&config)?;
    let extension = match format {
        TrajectoryFormat::Csv => "csv",
        TrajectoryFormat::Json => "json",
    };
    let (traj_path, summary_path) = match out {
        Some(dir) => (
            dir.join(format!("trajectory.{extension}")),
            dir.join("summary.json"),
        ),
        None => (
            config
                .output
                .trajectory
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("out/trajectory.{extension}"))),
            config
                .output
                .summary
                .clone()
                .unwrap_or_else(|| PathBuf::from("out/summary.json")),
        ),
    };
    let traj = run_episode(&scenario, 0).map_err(|e| CliError::runtime("simulator", e))?;
    let ex_ante = ex_ante_benchmark(&scenario).map_err(|e| CliError::runtime("oracle", e))?;
    let metrics =
        episode_metrics(&scenario, &traj, ex_ante).map_err(|e| CliError::runtime("oracle", e))?;
    write_trajectory(&traj, &traj_path, format).map_err(|e| CliError::runtime("simulator", e))?;
    let summary = EpisodeSummary::new(&metrics, config.seed, scenario.warnings.clone());
    write_json(&summary, &summary_path).map_err(|e| CliError::runtime("simulator", e))?;

    let audits: Vec<String> = summary
        .audits
        .iter()
        .zip(&traj.agents)
        .enumerate()
        .filter(|(_, (_, meta))| !meta.synthetic)
        .map(|(k, (a, _))| format!("agent {k} {}", audit_line(a)))
        .collect();
    Ok(format!(
        "welfare={:.4} ratio={} | {} | wrote {}",
        summary.welfare.total,
        fmt_opt(summary.welfare.ratio),
        audits.join("; "),
        traj_path.display()
    ))
}

fn sweep(
    run: &RunArgs,
    out: Option<PathBuf>,
    horizons: Option<Vec<u64>>,
    replicates: Option<usize>,
    jobs: Option<usize>,
) -> Result<String, CliError> {
    let mut config = load_config(run)?;
    if horizons.is_some() || replicates.is_some() {
        let mut sweep = config
            .sweep
            .clone()
            .unwrap_or(crate::simulator::SweepConfig {
                horizons: vec![config.horizon],
                replicates: 1,
            });
        if let Some(h) = horizons {
            sweep.horizons = h;
        }
        if let Some(r) = replicates {
            sweep.replicates = r;
        }
        config.sweep = Some(sweep);
        config.validate().map_err(CliError::usage)?;
    }
    if config.sweep.is_none() {
        return Err(CliError::usage(
            "config has no sweep block; pass --horizons",
        ));
    }
    if jobs == Some(0) {
        return Err(CliError::usage("--jobs must be >= 1"));
    }
    let summary = run_sweep(&config, jobs).map_err(|e| CliError::runtime("simulator", e))?;
    let path = out
        .or(config.output.summary.clone())
        .unwrap_or_else(|| PathBuf::from("out/sweep_summary.json"));
    write_json(&summary, &path).map_err(|e| CliError::runtime("simulator", e))?;
    Ok(sweep_line(&summary, &path))
}

fn sweep_line(summary: &SweepSummary, path: &Path) -> String {
    let last = summary.horizons.last();
    let ratio = last.and_then(|h| h.welfare_ratio).map(|r| r.mean);
    let exponent = summary
        .exponent_fit
        .map(|f| format!("{:.4}", f.exponent))
        .unwrap_or_else(|| "n/a".into());
    let violations: usize = summary
        .horizons
        .iter()
        .flat_map(|h| h.roi_violations.iter().chain(&h.budget_violations))
        .sum();
    format!(
        "horizons={} ratio(T={})={} violations={} e={} | wrote {}",
        summary.horizons.len(),
        last.map_or(0, |h| h.horizon),
        fmt_opt(ratio),
        violations,
        exponent,
        path.display()
    )
}

#[derive(Debug, Serialize)]
struct AgentBenchmark {
    agent: usize,
    mode: &'static str,
    /// How competing bids are formed.
    opponents: &'static str,
    curves: Vec<CurvePoint>,
    standard_errors: Option<Vec<CurvePoint>>,
    pacing: PacingBenchmark,
    lipschitz_estimate: f64,
}

#[derive(Debug, Serialize)]
struct BenchmarkReport {
    horizon: u64,
    agents: Vec<AgentBenchmark>,
    optimal_welfare: Option<OptimalWelfare>,
}

/// Competing-bid law and own values for agent `k`: exact atoms when the
/// environment is enumerable (or scripted, as its empirical distribution),
/// Monte Carlo otherwise.
fn agent_curves(
    scenario: &Scenario,
    k: usize,
    opponents: &[Box<dyn Bidder>],
    samples: usize,
) -> Result<ExpectedCurves, OracleError> {
    let gamma = scenario.agents[k].spec.gamma;
    let alpha = scenario.auction.alpha;
    let wins_ties = k == 0 && scenario.auction.tie_break == TieBreak::LowestIndex;
    let scale: Vec<f64> = scenario.agents.iter().map(|a| a.value_scale).collect();
    let competing = |raw: &[f64]| -> f64 {
        (0..raw.len())
            .filter(|&j| j != k)
            .map(|j| opponents[j].frozen_bid(raw[j] * scale[j]))
            .fold(0.0, f64::max)
    };
    let exact_atoms: Option<Vec<Atom>> = match &scenario.model.kind {
        EnvironmentKind::Scripted { rows } => {
            let rows = &rows[..scenario.horizon as usize];
            let mass = 1.0 / rows.len() as f64;
            Some(
                rows.iter()
                    .map(|r| Atom {
                        values: r.clone(),
                        prob: mass,
                    })
                    .collect(),
            )
        }
        _ => scenario.model.enumerate_support().ok(),
    };
    match exact_atoms {
        Some(atoms) => {
            let atoms = atoms
                .iter()
                .map(|a| JointAtom {
                    value: a.values[k] * scale[k],
                    competing: CompetingBid::Atom {
                        bid: competing(&a.values),
                    },
                    prob: a.prob,
                })
                .collect();
            ExpectedCurves::exact(gamma, alpha, wins_ties, atoms)
        }
        None => {
            let seed = u64::from_le_bytes(
                crate::rng::derive_seed(scenario.seed, k as u64, crate::rng::Purpose::Benchmark)
                    [..8]
                    .try_into()
                    .expect("8 bytes"),
            );
            let mut env = scenario.model.stream(crate::rng::seeded(seed))?;
            ExpectedCurves::monte_carlo(gamma, alpha, wins_ties, samples, seed, |_| {
                let raw = env
                    .sample_profile()
                    .expect("parametric models never run out");
                (raw[k] * scale[k], competing(&raw))
            })
        }
    }
}

fn benchmark(
    run: &RunArgs,
    out: Option<PathBuf>,
    points: usize,
    samples: usize,
) -> Result<String, CliError> {
    let config = load_config(run)?;
    let scenario = resolve(&config)?;
    if points < 2 {
        return Err(CliError::usage("--points must be >= 2"));
    }
    let static_opponents = scenario
        .agents
        .iter()
        .all(|a| a.kind == StrategyKind::Safe || a.synthetic);
    let (bidders, opponents) = if static_opponents {
        (
            build_bidders(&scenario, 0).map_err(|e| CliError::runtime("strategies", e))?,
            "safe",
        )
    } else {
        let (_, bidders) = run_episode_with_bidders(&scenario, 0)
            .map_err(|e| CliError::runtime("simulator", e))?;
        (bidders, "frozen at the end of episode 0")
    };
    let oracle = |e: OracleError| CliError::runtime("oracle", e);

    let mut agents = Vec::new();
    for (k, agent) in scenario
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.synthetic)
    {
        let curves = agent_curves(&scenario, k, &bidders, samples).map_err(oracle)?;
        let grid = uniform_grid(0.0, agent.spec.safe_multiplier().max(1.0), points);
        let pacing = pacing_multipliers(&curves, &agent.spec, 1e-12).map_err(oracle)?;
        let exact = curves.mode == crate::oracle::EvalMode::Exact;
        agents.push(AgentBenchmark {
            agent: k,
            mode: if exact { "exact" } else { "monte_carlo" },
            opponents,
            curves: curves.sample_grid(&grid),
            standard_errors: (!exact)
                .then(|| grid.iter().map(|&mu| curves.standard_errors(mu)).collect()),
            pacing,
            lipschitz_estimate: curves.lipschitz_estimate(&uniform_grid(
                0.0,
                agent.spec.safe_multiplier().max(1.0),
                DEFAULT_H_GRID_POINTS,
            )),
        });
    }
    let optimal_welfare = match scenario.model.enumerate_support() {
        Ok(atoms) => {
            let atoms: Vec<Atom> = atoms
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
            match ex_ante_from_atoms(&atoms, &scenario.specs()) {
                Ok(w) => Some(w),
                Err(OracleError::InstanceTooLarge { .. }) => None,
                Err(e) => return Err(oracle(e)),
            }
        }
        Err(_) => None,
    };
    let report = BenchmarkReport {
        horizon: scenario.horizon,
        agents,
        optimal_welfare,
    };
    let path = out.unwrap_or_else(|| PathBuf::from("out/benchmark.json"));
    write_json(&report, &path).map_err(|e| CliError::runtime("oracle", e))?;
    let multipliers: Vec<String> = report
        .agents
        .iter()
        .map(|a| {
            format!(
                "agent {} mu*={:.6} (mu_B*={:.6}, mu_R*={:.6})",
                a.agent, a.pacing.mu_star, a.pacing.mu_b_star, a.pacing.mu_r_star
            )
        })
        .collect();
    Ok(format!(
        "W_opt={} | {} | wrote {}",
        fmt_opt(report.optimal_welfare.as_ref().map(|w| w.value)),
        multipliers.join("; "),
        path.display()
    ))
}

fn audit_line(a: &ConstraintAudit) -> String {
    let verdict = |ok: bool| if ok { "OK" } else { "VIOLATED" };
    format!(
        "ROI: {} (slack={}), Budget: {} (slack={})",
        verdict(a.roi_ok),
        fmt_num(a.roi_slack),
        verdict(a.budget_ok),
        fmt_num(a.budget_slack)
    )
}

fn audit(path: &Path, config: Option<&Path>) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "trajectory {} does not exist",
            path.display()
        )));
    }
    let agents = match config {
        Some(c) => {
            let config = SimConfig::load(c).map_err(CliError::usage)?;
            let scenario = config.resolve(config.horizon).map_err(CliError::usage)?;
            Some(
                scenario
                    .agents
                    .iter()
                    .map(|a| AgentMeta {
                        algorithm: a.kind.name().to_string(),
                        gamma: a.spec.gamma,
                        budget: a.spec.budget,
                        vbar: a.spec.vbar,
                        synthetic: a.synthetic,
                    })
                    .collect(),
            )
        }
        None if TrajectoryFormat::from_path(path) == TrajectoryFormat::Csv
            && !sidecar_path(path).exists() =>
        {
            return Err(CliError::usage(format!(
                "{} has no agent sidecar; pass --config",
                path.display()
            )))
        }
        None => None,
    };
    let traj = read_trajectory(path, agents).map_err(|e| CliError::runtime("simulator", e))?;
    let lines: Vec<String> = traj
        .ledgers
        .iter()
        .zip(&traj.agents)
        .enumerate()
        .filter(|(_, (_, meta))| !meta.synthetic)
        .map(|(k, (l, _))| {
            let line = audit_line(&constraint_audit(l));
            if traj.n_agents() == 1 {
                line
            } else {
                format!("agent {k} {line}")
            }
        })
        .collect();
    Ok(lines.join("; "))
}

fn parse_points(raw: &[String]) -> Result<Vec<(u64, f64)>, CliError> {
    raw.iter()
        .map(|p| {
            let (t, r) = p
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("point {p:?} is not T:regret")))?;
            let t = t
                .trim()
                .parse::<u64>()
                .map_err(|e| CliError::usage(format!("point {p:?}: {e}")))?;
            let r = r
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("point {p:?}: {e}")))?;
            Ok((t, r))
        })
        .collect()
}

fn fit(
    summary: Option<&Path>,
    points: Option<Vec<String>>,
    agent: usize,
) -> Result<String, CliError> {
    let points = match (summary, points) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage("give either a summary file or --points"))
        }
        (None, None) => return Err(CliError::usage("give a summary file or --points")),
        (None, Some(raw)) => parse_points(&raw)?,
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let summary: SweepSummary = serde_json::from_str(&text).map_err(|e| {
                CliError::usage(format!("{}: not a sweep summary: {e}", path.display()))
            })?;
            summary
                .horizons
                .iter()
                .filter_map(|h| {
                    h.regret
                        .get(agent)
                        .copied()
                        .flatten()
                        .map(|r| (h.horizon, r.mean))
                })
                .collect()
        }
    };
    let fit: ExponentFit =
        fit_regret_exponent(&points).map_err(|e| CliError::runtime("ledger_metrics", e))?;
    Ok(format!(
        "e={:.4} (intercept={:.4}, r2={:.4}, points={})",
        fit.exponent, fit.intercept, fit.r_squared, fit.points_used
    ))
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "null".into())
}
