//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits nonzero if any criterion
//! fails.

use std::time::Instant;

use autobid::auction::{run_auction, AuctionConfig, BidProfile, TieBreak};
use autobid::environment::{Atom, EnvironmentModel, Marginal};
use autobid::ledger::{fit_regret_exponent, ExponentFit};
use autobid::oracle::{
    auxiliary_h, ex_ante_from_atoms, pacing_multipliers, single_round_outcome, uniform_grid,
    CompetingBid, ExpectedCurves, HValues, JointAtom,
};
use autobid::rng::seeded;
use autobid::simulator::{
    run_episode, run_episode_with_bidders, run_sweep, AgentConfig, Algorithm, EnvironmentConfig,
    SimConfig, SweepConfig, ValueUnits,
};
use autobid::strategies::{AgentSpec, Budget, Feedback, MultiplierState};
use rand::Rng;

// Pinned tolerances.
const SAFETY_TOL: f64 = 1e-9;
const CAP_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-12;
const WELFARE_FLOOR: f64 = 0.5 - 0.05;
const EXPONENT_MULTI_MAX: f64 = 0.95;
const EXPONENT_SINGLE_MAX: f64 = 0.92;
const R2_MIN: f64 = 0.8;
const LP_GRID_TOL: f64 = 1e-3;
const MU_B_TOL: f64 = 1e-6;
const SE_MULTIPLE: f64 = 3.0;
const CONVEXITY_TOL: f64 = 1e-6;
const CONTRAST_FACTOR: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(
    horizon: u64,
    seed: u64,
    auction: AuctionConfig,
    environment: EnvironmentConfig,
    agents: Vec<AgentConfig>,
) -> SimConfig {
    SimConfig {
        schema_version: 1,
        horizon,
        seed,
        auction,
        environment,
        agents,
        sweep: None,
        output: Default::default(),
        strict_rates: true,
        base_dir: None,
    }
}

fn agent(algorithm: Algorithm, gamma: f64, rho: Option<f64>) -> AgentConfig {
    AgentConfig {
        rho,
        budget: rho.is_none().then_some(Budget::Infinite),
        ..AgentConfig::new(algorithm, gamma, Budget::Infinite)
    }
}

fn discrete(support: Vec<(Vec<f64>, f64)>) -> EnvironmentConfig {
    EnvironmentConfig::DiscreteJoint {
        support: support
            .into_iter()
            .map(|(values, prob)| Atom { values, prob })
            .collect(),
        vbar: None,
        units: ValueUnits::Values,
    }
}

fn random_atoms<R: Rng>(rng: &mut R, n: usize, atoms: usize) -> Vec<Atom> {
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut support: Vec<Atom> = weights
        .iter()
        .map(|w| Atom {
            values: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
            prob: w / total,
        })
        .collect();
    let drift: f64 = 1.0 - support.iter().map(|a| a.prob).sum::<f64>();
    support[0].prob += drift;
    support
}

fn random_environment<R: Rng>(rng: &mut R, n: usize) -> EnvironmentConfig {
    if rng.random_bool(0.5) {
        let atoms = rng.random_range(1..=6);
        EnvironmentConfig::DiscreteJoint {
            support: random_atoms(rng, n, atoms),
            vbar: None,
            units: ValueUnits::Values,
        }
    } else {
        let marginals = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => {
                    let a = rng.random_range(0.0..0.5);
                    Marginal::Uniform {
                        a,
                        b: a + rng.random_range(0.1..0.5),
                    }
                }
                1 => Marginal::TruncatedLogNormal {
                    m: rng.random_range(-2.0..0.0),
                    s: rng.random_range(0.2..1.0),
                    cap: 1.0,
                },
                _ => Marginal::PointMass {
                    value: rng.random_range(0.1..1.0),
                },
            })
            .collect();
        EnvironmentConfig::IidParametric {
            marginals,
            vbar: None,
            units: ValueUnits::Values,
        }
    }
}

/// Criteria 1 and 2 share their 1,000 randomized episodes.
fn safety_and_caps() -> (Outcome, Outcome) {
    let mut rng = seeded(0x5afe);
    let (mut roi_bad, mut budget_bad, mut cap_r_bad, mut cap_b_bad) =
        (0usize, 0usize, 0usize, 0usize);
    let (mut worst_roi, mut worst_budget, mut worst_cap_r, mut worst_cap_b) =
        (0.0f64, 0.0f64, f64::MIN, f64::MIN);
    let (mut roi_agents, mut dual_agents) = (0usize, 0usize);
    let horizon = 2000;
    for episode in 0..1000u64 {
        let n = rng.random_range(1..=5);
        let agents: Vec<AgentConfig> = (0..n)
            .map(|_| {
                let gamma = rng.random_range(1.0..4.0);
                if rng.random_bool(0.5) {
                    agent(Algorithm::RoiPacer, gamma, None)
                } else {
                    let rho = rng.random_bool(0.85).then(|| rng.random_range(0.02..0.5));
                    agent(Algorithm::DualPacer, gamma, rho)
                }
            })
            .collect();
        let alpha = match rng.random_range(0..3) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let tie_break = if rng.random_bool(0.5) {
            TieBreak::LowestIndex
        } else {
            TieBreak::SeededUniform
        };
        let environment = random_environment(&mut rng, n);
        let cfg = config(
            horizon,
            episode,
            AuctionConfig { alpha, tie_break },
            environment,
            agents.clone(),
        );
        let scenario = cfg.resolve(horizon).expect("valid random scenario");
        let (traj, bidders) = run_episode_with_bidders(&scenario, episode).expect("episode runs");
        for (k, v) in traj.prefix_violations().iter().enumerate() {
            let spec = &scenario.agents[k].spec;
            worst_roi = worst_roi.max(v.roi);
            if v.roi > SAFETY_TOL {
                roi_bad += 1;
            }
            match agents[k].algorithm {
                Algorithm::RoiPacer => roi_agents += 1,
                _ => {
                    dual_agents += 1;
                    worst_budget = worst_budget.max(v.budget).max(v.pro_rata_budget);
                    if v.budget > SAFETY_TOL || v.pro_rata_budget > SAFETY_TOL {
                        budget_bad += 1;
                    }
                }
            }
            let mut states: Vec<MultiplierState> = Vec::new();
            for r in &traj.rounds {
                states.push(MultiplierState {
                    mu_r: r.mu_r[k].unwrap(),
                    mu_b: r.mu_b[k],
                    eta_r: 0.0,
                    eta_b: None,
                });
            }
            states.push(bidders[k].multipliers().expect("pacing bidder"));
            let excess_r = states
                .iter()
                .map(|s| s.mu_r - (spec.gamma - 1.0))
                .fold(f64::MIN, f64::max);
            worst_cap_r = worst_cap_r.max(excess_r);
            if excess_r > CAP_TOL {
                cap_r_bad += 1;
            }
            if let Some(rho) = spec
                .rho()
                .filter(|_| agents[k].algorithm == Algorithm::DualPacer)
            {
                let excess_b = states
                    .iter()
                    .filter_map(|s| s.mu_b)
                    .map(|m| m - (spec.vbar / rho - 1.0))
                    .fold(f64::MIN, f64::max);
                worst_cap_b = worst_cap_b.max(excess_b);
                if excess_b > CAP_TOL {
                    cap_b_bad += 1;
                }
            }
        }
    }
    (
        Outcome {
            pass: roi_bad == 0 && budget_bad == 0,
            detail: format!(
                "{roi_agents} ROI-pacer and {dual_agents} dual-pacer runs; ROI violations {roi_bad} (worst prefix {worst_roi:.2e}), \
                 budget violations {budget_bad} (worst prefix {worst_budget:.2e}); tol {SAFETY_TOL:.0e}"
            ),
        },
        Outcome {
            pass: cap_r_bad == 0 && cap_b_bad == 0,
            detail: format!(
                "max mu_R-(gamma-1) = {worst_cap_r:.2e}, max mu_B-(vbar/rho-1) = {worst_cap_b:.2e}; \
                 {cap_r_bad}+{cap_b_bad} agents above {CAP_TOL:.0e}"
            ),
        },
    )
}

fn reductions() -> Outcome {
    let mut rng = seeded(0x7ed);
    let mut mismatches = 0;
    let mut positive_mu_r = 0;
    for instance in 0..100u64 {
        let n = rng.random_range(1..=4);
        let environment = random_environment(&mut rng, n);
        let alpha = rng.random_range(0.0..1.0);
        let gamma = rng.random_range(1.0..4.0);
        let others: Vec<AgentConfig> = (1..n)
            .map(|_| {
                agent(
                    Algorithm::DualPacer,
                    rng.random_range(1.0..3.0),
                    Some(rng.random_range(0.05..0.4)),
                )
            })
            .collect();
        let run = |first: AgentConfig| {
            let mut agents = vec![first];
            agents.extend(others.iter().cloned());
            let cfg = config(
                1000,
                instance,
                AuctionConfig {
                    alpha,
                    tie_break: TieBreak::SeededUniform,
                },
                environment.clone(),
                agents,
            );
            run_episode(&cfg.resolve(1000).unwrap(), instance).unwrap()
        };
        let roi = run(agent(Algorithm::RoiPacer, gamma, None));
        let dual = run(agent(Algorithm::DualPacer, gamma, None));
        let bits = |t: &autobid::simulator::TrajectoryRecord| -> Vec<u64> {
            t.rounds
                .iter()
                .flat_map(|r| {
                    let opt = |x: &Option<f64>| x.map_or(u64::MAX, f64::to_bits);
                    r.values
                        .iter()
                        .chain(&r.bids)
                        .chain(&r.payments)
                        .chain(&r.allocation)
                        .chain(&r.cum_value)
                        .map(|x| x.to_bits())
                        .chain(r.mu_r.iter().chain(&r.mu_b).map(opt))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        if bits(&roi) != bits(&dual) {
            mismatches += 1;
        }
        let unit = run(agent(
            Algorithm::DualPacer,
            1.0,
            Some(rng.random_range(0.05..0.4)),
        ));
        if unit.rounds.iter().any(|r| r.mu_r[0].unwrap() > 0.0) {
            positive_mu_r += 1;
        }
    }
    Outcome {
        pass: mismatches == 0 && positive_mu_r == 0,
        detail: format!(
            "100 instances: {mismatches} bitwise mismatches between dual pacer (B=inf) and ROI pacer; \
             {positive_mu_r} gamma=1 runs with mu_R > 0"
        ),
    }
}

/// Random exact environments used by the monotonicity and convexity checks:
/// agent 0 against opponents bidding at fixed random multipliers.
fn exact_matrix() -> Vec<(ExpectedCurves, AgentSpec)> {
    let mut rng = seeded(0xc0ffee);
    let mut out = Vec::new();
    for _ in 0..50 {
        let n = rng.random_range(2..=4);
        let atoms = rng.random_range(1..=8);
        let support = random_atoms(&mut rng, n, atoms);
        let model = EnvironmentModel::discrete(support).unwrap();
        let shading: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
        let gamma = rng.random_range(1.0..4.0);
        let alpha = [0.0, 0.5, 1.0, rng.random_range(0.0..1.0)][rng.random_range(0..4)];
        let curves = ExpectedCurves::from_environment(
            &model,
            0,
            gamma,
            alpha,
            rng.random_bool(0.5),
            &|j, v| v / (1.0 + shading[j]),
        )
        .unwrap();
        let rho = rng.random_range(0.05..0.5);
        let spec = AgentSpec::new(
            gamma,
            Budget::Finite(rho * 1000.0),
            1.0,
            model.vbar[0],
            1000,
        )
        .unwrap();
        out.push((curves, spec));
    }
    out
}

fn monotonicity(matrix: &[(ExpectedCurves, AgentSpec)]) -> Outcome {
    let mut curve_failures = 0;
    for (curves, spec) in matrix {
        if curves
            .check_monotone(spec.safe_multiplier().max(1.0), 200, MONOTONE_TOL)
            .is_err()
        {
            curve_failures += 1;
        }
    }
    let mut rng = seeded(0x3030);
    let mut realization_failures = 0;
    let mut checked = 0;
    for alpha in [0.0, 0.5, 1.0] {
        for _ in 0..2000 {
            let gamma: f64 = rng.random_range(1.0..4.0);
            let v = rng.random_range(0.0..1.0);
            let d = rng.random_range(0.0..1.0);
            let wins_ties = rng.random_bool(0.5);
            let slack = |mu: f64| {
                let (x, p) = single_round_outcome(v / (1.0 + mu), d, alpha, wins_ties);
                v * x - gamma * p
            };
            let grid = uniform_grid(0.0, gamma - 1.0, 200);
            checked += 1;
            if grid
                .windows(2)
                .any(|w| slack(w[1]) < slack(w[0]) - MONOTONE_TOL)
            {
                realization_failures += 1;
            }
        }
    }
    Outcome {
        pass: curve_failures == 0 && realization_failures == 0,
        detail: format!(
            "{} exact environments: {curve_failures} grid failures at {MONOTONE_TOL:.0e}; \
             {checked} realizations over alpha in {{0, 0.5, 1}}: {realization_failures} non-monotone",
            matrix.len()
        ),
    }
}

struct WelfareInstance {
    name: &'static str,
    support: Vec<(Vec<f64>, f64)>,
    gammas: Vec<f64>,
    rhos: Vec<Option<f64>>,
    alpha: f64,
}

fn welfare_instances() -> Vec<WelfareInstance> {
    vec![
        WelfareInstance {
            name: "n2-roi-bound",
            support: vec![
                (vec![1.0, 0.5], 0.3),
                (vec![0.4, 0.9], 0.3),
                (vec![0.7, 0.7], 0.4),
            ],
            gammas: vec![2.0, 1.5],
            rhos: vec![None, Some(0.3)],
            alpha: 0.0,
        },
        WelfareInstance {
            name: "n2-first-price",
            support: vec![
                (vec![0.9, 0.2], 0.5),
                (vec![0.3, 0.8], 0.25),
                (vec![0.6, 0.6], 0.25),
            ],
            gammas: vec![1.2, 1.0],
            rhos: vec![Some(0.12), Some(0.25)],
            alpha: 1.0,
        },
        WelfareInstance {
            name: "n3-mixed",
            support: vec![
                (vec![1.0, 0.3, 0.2], 0.2),
                (vec![0.2, 1.0, 0.4], 0.2),
                (vec![0.3, 0.4, 0.9], 0.3),
                (vec![0.6, 0.6, 0.6], 0.3),
            ],
            gammas: vec![1.5, 1.0, 2.5],
            rhos: vec![Some(0.1), None, Some(0.2)],
            alpha: 0.0,
        },
        WelfareInstance {
            name: "n3-half-price",
            support: vec![
                (vec![0.8, 0.5, 0.1], 0.4),
                (vec![0.1, 0.5, 0.8], 0.4),
                (vec![0.5, 0.9, 0.5], 0.2),
            ],
            gammas: vec![1.0, 3.0, 1.2],
            rhos: vec![Some(0.08), None, Some(0.1)],
            alpha: 0.5,
        },
        WelfareInstance {
            name: "n4-asymmetric",
            support: vec![
                (vec![1.0, 0.8, 0.3, 0.2], 0.25),
                (vec![0.4, 0.9, 0.7, 0.1], 0.25),
                (vec![0.2, 0.3, 1.0, 0.6], 0.25),
                (vec![0.5, 0.2, 0.4, 0.9], 0.25),
            ],
            gammas: vec![1.0, 2.0, 1.3, 1.0],
            rhos: vec![Some(0.05), None, Some(0.1), Some(0.3)],
            alpha: 0.0,
        },
    ]
}

fn welfare_ratio() -> Outcome {
    let horizon = 10_000u64;
    let replicates = 20;
    let mut lines = Vec::new();
    let mut pass = true;
    for inst in welfare_instances() {
        let n = inst.gammas.len();
        let agents = inst
            .gammas
            .iter()
            .zip(&inst.rhos)
            .map(|(&g, &r)| agent(Algorithm::DualPacer, g, r))
            .collect();
        let mut cfg = config(
            horizon,
            17,
            AuctionConfig {
                alpha: inst.alpha,
                tie_break: TieBreak::SeededUniform,
            },
            discrete(inst.support.clone()),
            agents,
        );
        cfg.sweep = Some(SweepConfig {
            horizons: vec![horizon],
            replicates,
        });
        let summary = run_sweep(&cfg, None).expect("sweep runs");
        let h = &summary.horizons[0];
        let ratio = h.welfare_ratio.expect("ex-ante benchmark exists");
        let optimum = h.ex_ante_benchmark.unwrap();
        let vbar = inst
            .support
            .iter()
            .flat_map(|(v, _)| v.iter().copied())
            .fold(0.0, f64::max);
        let t = horizon as f64;
        let error_term = n as f64 * vbar * (t * (vbar * n as f64 * t).ln()).sqrt();
        pass &= ratio.mean >= WELFARE_FLOOR;
        lines.push(format!(
            "{}: W/W_opt = {:.4} +- {:.4} (W_opt = {optimum:.1}, n vbar sqrt(T log(vbar n T)) / W_opt = {:.3})",
            inst.name,
            ratio.mean,
            ratio.se,
            error_term / optimum
        ));
    }
    Outcome {
        pass,
        detail: format!("floor {WELFARE_FLOOR}; {}", lines.join("; ")),
    }
}

fn regret_fit(cfg: &SimConfig, agent_index: usize) -> (ExponentFit, Vec<(u64, f64)>) {
    let summary = run_sweep(cfg, None).expect("sweep runs");
    let points: Vec<(u64, f64)> = summary
        .horizons
        .iter()
        .map(|h| {
            (
                h.horizon,
                h.regret[agent_index].expect("regret measured").mean,
            )
        })
        .collect();
    let fit = fit_regret_exponent(&points).unwrap_or(ExponentFit {
        exponent: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        points_used: 0,
        points_dropped: points.len(),
    });
    (fit, points)
}

fn sublinear_regret() -> Outcome {
    let horizons: Vec<u64> = (10..=16).map(|k| 1u64 << k).collect();
    let sweep = SweepConfig {
        horizons: horizons.clone(),
        replicates: 10,
    };
    let multi: Vec<(&str, SimConfig)> = vec![
        (
            "n2",
            config(
                1024,
                101,
                AuctionConfig {
                    alpha: 0.0,
                    tie_break: TieBreak::SeededUniform,
                },
                discrete(vec![
                    (vec![1.0, 0.5], 0.3),
                    (vec![0.4, 0.9], 0.3),
                    (vec![0.7, 0.6], 0.4),
                ]),
                vec![
                    agent(Algorithm::DualPacer, 1.3, Some(0.1)),
                    agent(Algorithm::DualPacer, 1.0, Some(0.15)),
                ],
            ),
        ),
        (
            "n3",
            config(
                1024,
                202,
                AuctionConfig {
                    alpha: 0.5,
                    tie_break: TieBreak::SeededUniform,
                },
                EnvironmentConfig::IidParametric {
                    marginals: vec![
                        Marginal::Uniform { a: 0.2, b: 1.0 },
                        Marginal::Uniform { a: 0.0, b: 0.9 },
                        Marginal::TruncatedLogNormal {
                            m: -1.0,
                            s: 0.5,
                            cap: 1.0,
                        },
                    ],
                    vbar: None,
                    units: ValueUnits::Values,
                },
                vec![
                    agent(Algorithm::DualPacer, 1.5, Some(0.1)),
                    agent(Algorithm::DualPacer, 1.0, Some(0.12)),
                    agent(Algorithm::DualPacer, 2.0, None),
                ],
            ),
        ),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, mut cfg) in multi {
        cfg.sweep = Some(sweep.clone());
        let (fit, points) = regret_fit(&cfg, 0);
        pass &= fit.exponent <= EXPONENT_MULTI_MAX && fit.r_squared >= R2_MIN;
        lines.push(format!(
            "{name}: e = {:.3}, r2 = {:.3}, regret {}",
            fit.exponent,
            fit.r_squared,
            fmt_points(&points)
        ));
    }
    // single learner against frozen stochastic competition
    let mut single = config(
        1024,
        303,
        AuctionConfig::second_price(),
        EnvironmentConfig::IidParametric {
            marginals: vec![
                Marginal::Uniform { a: 0.2, b: 1.0 },
                Marginal::Uniform { a: 0.0, b: 1.0 },
            ],
            vbar: None,
            units: ValueUnits::Values,
        },
        vec![
            agent(Algorithm::DualPacer, 1.2, Some(0.1)),
            agent(Algorithm::Safe, 1.0, None),
        ],
    );
    single.sweep = Some(sweep);
    let (fit, points) = regret_fit(&single, 0);
    pass &= fit.exponent <= EXPONENT_SINGLE_MAX;
    lines.push(format!(
        "single: e = {:.3}, r2 = {:.3}, regret {}",
        fit.exponent,
        fit.r_squared,
        fmt_points(&points)
    ));
    Outcome {
        pass,
        detail: format!(
            "multi-agent e <= {EXPONENT_MULTI_MAX} with r2 >= {R2_MIN}, single e <= {EXPONENT_SINGLE_MAX}; {}",
            lines.join("; ")
        ),
    }
}

fn fmt_points(points: &[(u64, f64)]) -> String {
    points
        .iter()
        .map(|(t, r)| format!("{t}:{r:.1}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Brute force over a grid of per-atom allocations for one or two agents,
/// exploiting that full allocation is optimal and that the objective is
/// concave along the last coordinate.
fn brute_force_welfare(atoms: &[Atom], gammas: &[f64], caps: &[Option<f64>], steps: usize) -> f64 {
    let n = gammas.len();
    let earn =
        |k: usize, s: usize, share: f64| atoms[s].prob * atoms[s].values[k] * share / gammas[k];
    let objective = |y: &[f64]| -> f64 {
        (0..n)
            .map(|k| {
                let e: f64 = (0..atoms.len())
                    .map(|s| earn(k, s, if k == 0 { y[s] } else { 1.0 - y[s] }))
                    .sum();
                caps[k].map_or(e, |c| e.min(c))
            })
            .sum()
    };
    if n == 1 {
        return objective(&vec![1.0; atoms.len()]);
    }
    let h = 1.0 / steps as f64;
    let s_count = atoms.len();
    let mut best = f64::MIN;
    let mut y = vec![0.0; s_count];
    let outer = (steps + 1).pow(s_count as u32 - 1);
    for idx in 0..outer {
        let mut rest = idx;
        for slot in y.iter_mut().take(s_count - 1) {
            *slot = (rest % (steps + 1)) as f64 * h;
            rest /= steps + 1;
        }
        // concave in the last share: integer ternary search, then a local sweep
        let eval = |i: usize, y: &mut Vec<f64>| {
            y[s_count - 1] = i as f64 * h;
            objective(y)
        };
        let (mut lo, mut hi) = (0usize, steps);
        while hi - lo > 4 {
            let m1 = lo + (hi - lo) / 3;
            let m2 = hi - (hi - lo) / 3;
            if eval(m1, &mut y) < eval(m2, &mut y) {
                lo = m1 + 1;
            } else {
                hi = m2;
            }
        }
        for i in lo..=hi {
            best = best.max(eval(i, &mut y));
        }
    }
    best
}

fn oracle_equivalence() -> Outcome {
    let mut rng = seeded(0x1b);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 1..=2 {
        for s in 1..=3 {
            for _ in 0..12 {
                let atoms = random_atoms(&mut rng, n, s);
                let specs: Vec<AgentSpec> = (0..n)
                    .map(|_| {
                        let budget = if rng.random_bool(0.7) {
                            Budget::Finite(rng.random_range(0.05..0.6))
                        } else {
                            Budget::Infinite
                        };
                        AgentSpec::new(rng.random_range(1.0..3.0), budget, 1.0, 1.0, 1).unwrap()
                    })
                    .collect();
                let lp = ex_ante_from_atoms(&atoms, &specs).unwrap().value;
                let gammas: Vec<f64> = specs.iter().map(|s| s.gamma).collect();
                let caps: Vec<Option<f64>> = specs.iter().map(AgentSpec::rho).collect();
                let grid = brute_force_welfare(&atoms, &gammas, &caps, 1000);
                worst = worst.max((lp - grid).abs());
                count += 1;
            }
        }
    }
    let uniform = ExpectedCurves::exact(
        1.0,
        0.0,
        false,
        vec![JointAtom {
            value: 1.0,
            competing: CompetingBid::Uniform { lo: 0.0, hi: 1.0 },
            prob: 1.0,
        }],
    )
    .unwrap();
    let spec = AgentSpec::new(1.0, Budget::Finite(125.0), 1.0, 1.0, 1000).unwrap();
    let mu_b = pacing_multipliers(&uniform, &spec, 1e-12)
        .unwrap()
        .mu_b_star;
    Outcome {
        pass: worst <= LP_GRID_TOL && (mu_b - 1.0).abs() <= MU_B_TOL,
        detail: format!(
            "{count} instances (n <= 2, S <= 3): max |LP - grid| = {worst:.2e} (tol {LP_GRID_TOL:.0e}); \
             uniform competition mu_B* = {mu_b:.9} (tol {MU_B_TOL:.0e})"
        ),
    }
}

fn expected_update() -> Outcome {
    let mut rng = seeded(0xe1);
    let samples = 20_000;
    let mut worst_z = 0.0f64;
    let mut failures = 0;
    let mut worst_budget_z = 0.0f64;
    for config_id in 0..20 {
        let n = rng.random_range(2..=4);
        let atoms = rng.random_range(2..=6);
        let support = random_atoms(&mut rng, n, atoms);
        let model = EnvironmentModel::discrete(support).unwrap();
        let shading: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let gamma = rng.random_range(1.0..3.0);
        let alpha = rng.random_range(0.0..1.0);
        let rho = rng.random_range(0.05..0.4);
        let mu = rng.random_range(0.0..gamma - 1.0 + 0.5);
        let frozen = MultiplierState {
            mu_r: mu,
            mu_b: Some(mu - 0.1),
            eta_r: 0.01,
            eta_b: Some(0.01),
        };
        let auction = AuctionConfig {
            alpha,
            tie_break: TieBreak::LowestIndex,
        };

        let mut stream = model.stream(seeded(1000 + config_id)).unwrap();
        let mut ties = seeded(2000 + config_id);
        let (mut sum, mut sum_sq, mut sum_b, mut sum_b_sq) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            let values = stream.sample_profile().unwrap();
            let bids: Vec<f64> = (0..n)
                .map(|j| {
                    if j == 0 {
                        frozen.bid(values[0])
                    } else {
                        values[j] / (1.0 + shading[j])
                    }
                })
                .collect();
            let outcome =
                run_auction(&BidProfile::new(bids).unwrap(), &auction, &mut ties).unwrap();
            let next = frozen.update(
                gamma,
                Some(rho),
                values[0],
                Feedback::new(outcome.allocation[0], outcome.payments[0]),
            );
            let inc = (next.mu_r - frozen.mu_r) / frozen.eta_r;
            sum += inc;
            sum_sq += inc * inc;
            let inc_b = (next.mu_b.unwrap() - frozen.mu_b.unwrap()) / frozen.eta_b.unwrap();
            sum_b += inc_b;
            sum_b_sq += inc_b * inc_b;
        }
        let m = samples as f64;
        let mean = sum / m;
        let se_of = |mean: f64, sq: f64| ((sq / m - mean * mean).max(0.0) / (m - 1.0)).sqrt();
        let se = se_of(mean, sum_sq);
        let curves = ExpectedCurves::from_environment(&model, 0, gamma, alpha, true, &|j, v| {
            v / (1.0 + shading[j])
        })
        .unwrap();
        let exact = curves.evaluate(frozen.effective());
        let z_score = |gap: f64, se: f64| {
            if se > 0.0 {
                gap / se
            } else if gap < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let z = z_score((mean - exact.roi_residual()).abs(), se);
        worst_z = worst_z.max(z);
        if z > SE_MULTIPLE {
            failures += 1;
        }
        let mean_b = sum_b / m;
        worst_budget_z = worst_budget_z.max(z_score(
            (mean_b - (exact.z_b - rho)).abs(),
            se_of(mean_b, sum_b_sq),
        ));
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "20 frozen-mu configurations, 20000 draws each: {failures} ROI increments beyond {SE_MULTIPLE} SE \
             (max |z| = {worst_z:.2}); budget increment max |z| = {worst_budget_z:.2} (informational)"
        ),
    }
}

fn convexity(matrix: &[(ExpectedCurves, AgentSpec)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = 0;
    let extra = ExpectedCurves::exact(
        2.0,
        0.0,
        false,
        vec![
            JointAtom {
                value: 1.0,
                competing: CompetingBid::Atom { bid: 0.25 },
                prob: 0.5,
            },
            JointAtom {
                value: 1.0,
                competing: CompetingBid::Atom { bid: 0.75 },
                prob: 0.5,
            },
        ],
    )
    .unwrap();
    let extra_spec = AgentSpec::new(2.0, Budget::Finite(300.0), 1.0, 1.0, 1000).unwrap();
    let all = matrix
        .iter()
        .map(|(c, s)| (c, s))
        .chain(std::iter::once((&extra, &extra_spec)));
    let mut count = 0;
    for (curves, spec) in all {
        count += 1;
        let h_r = auxiliary_h(curves, None, &uniform_grid(0.0, spec.gamma - 1.0, 1001))
            .unwrap()
            .h_r;
        let rho = spec.rho().unwrap();
        let h_b = auxiliary_h(
            curves,
            Some(rho),
            &uniform_grid(0.0, (spec.vbar / rho - 1.0).max(0.0), 1001),
        )
        .unwrap()
        .h_b
        .unwrap();
        let min_second = HValues::second_differences(&h_r)
            .into_iter()
            .chain(HValues::second_differences(&h_b))
            .fold(0.0f64, f64::min);
        worst = worst.min(min_second);
        if min_second < -CONVEXITY_TOL {
            failures += 1;
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "{count} exact environments: min second difference of H_R on [0, gamma-1] and H_B on [0, vbar/rho-1] = \
             {worst:.2e}; {failures} below -{CONVEXITY_TOL:.0e}"
        ),
    }
}

fn baseline_contrast() -> Outcome {
    let environment = EnvironmentConfig::IidParametric {
        marginals: vec![
            Marginal::Uniform { a: 0.0, b: 1.0 },
            Marginal::Uniform { a: 0.0, b: 1.0 },
        ],
        vbar: None,
        units: ValueUnits::Values,
    };
    let run = |learner: AgentConfig| {
        let cfg = config(
            5000,
            3,
            AuctionConfig::first_price(),
            environment.clone(),
            vec![learner, agent(Algorithm::Safe, 1.0, None)],
        );
        let traj = run_episode(&cfg.resolve(5000).unwrap(), 0).unwrap();
        let l = &traj.ledgers[0];
        (
            (l.gamma * l.cum_spend - l.cum_value).max(0.0),
            l.gamma * l.cum_spend,
        )
    };
    let eps = AgentConfig {
        epsilon: Some(0.2),
        ..agent(Algorithm::EpsilonGreedy, 3.0, None)
    };
    let (eps_violation, eps_scale) = run(eps);
    let (dual_violation, _) = run(agent(Algorithm::DualPacer, 3.0, None));
    Outcome {
        pass: eps_violation > CONTRAST_FACTOR * eps_scale && dual_violation == 0.0,
        detail: format!(
            "first price, gamma = 3: epsilon-greedy ROI violation {eps_violation:.2} vs {CONTRAST_FACTOR} gamma sum p = {:.2}; \
             dual pacer violation {dual_violation}",
            CONTRAST_FACTOR * eps_scale
        ),
    }
}

fn report(id: usize, name: &str, start: Instant, limit: Option<f64>, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let in_time = limit.is_none_or(|l| secs < l);
    let pass = outcome.pass && in_time;
    let budget = limit
        .map(|l| format!(", limit {l:.0} s"))
        .unwrap_or_default();
    println!(
        "[{}] C{id} {name}: {} ({secs:.1} s{budget})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail
    );
    pass
}

fn main() {
    let mut all = true;

    let start = Instant::now();
    let (safety, caps) = safety_and_caps();
    let shared = start.elapsed().as_secs_f64();
    all &= report(1, "ex-post constraint safety", start, Some(60.0), safety);
    println!("    (C1 and C2 share 1,000 episodes, {shared:.1} s)");
    all &= report(2, "multiplier caps", Instant::now(), None, caps);

    let start = Instant::now();
    all &= report(3, "reductions", start, None, reductions());

    let matrix = exact_matrix();
    let start = Instant::now();
    all &= report(4, "monotonicity", start, None, monotonicity(&matrix));

    let start = Instant::now();
    all &= report(
        5,
        "liquid welfare ratio",
        start,
        Some(300.0),
        welfare_ratio(),
    );

    let start = Instant::now();
    all &= report(6, "sublinear regret", start, None, sublinear_regret());

    let start = Instant::now();
    all &= report(7, "oracle equivalence", start, None, oracle_equivalence());

    let start = Instant::now();
    all &= report(
        8,
        "expected-update consistency",
        start,
        None,
        expected_update(),
    );

    let start = Instant::now();
    all &= report(9, "H-function convexity", start, None, convexity(&matrix));

    let start = Instant::now();
    all &= report(10, "baseline contrast", start, None, baseline_contrast());

    if !all {
        std::process::exit(1);
    }
}
