//! Expected per-round quantities as functions of a fixed multiplier `mu`.
//!
//! For a bidder with value `v` bidding `v / (1 + mu)` against a competing
//! bid `d`:
//!
//! * `z_b(mu)   = E[p]` (budget expenditure)
//! * `z_r(mu)   = E[(gamma p - v x)^+]` (ROI expenditure)
//! * `rho(mu)   = E[(v x - gamma p)^+]` (ROI gain)
//! * `value(mu) = E[v x]`
//!
//! Competing bids are either point masses or uniform segments; both are
//! integrated in closed form, so exact mode has no discretization error.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::environment::EnvironmentModel;
use crate::ledger::path_length;
use crate::rng::{seeded, Stream};
use crate::strategies::AgentSpec;

pub const MIN_MONTE_CARLO_SAMPLES: usize = 100;
pub const DEFAULT_MONTE_CARLO_SAMPLES: usize = 100_000;
pub const MONOTONE_GRID_POINTS: usize = 200;
pub const DEFAULT_H_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CompetingBid {
    Atom { bid: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Own value together with the law of the highest competing bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAtom {
    pub value: f64,
    pub competing: CompetingBid,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mu: f64,
    pub z_b: f64,
    pub z_r: f64,
    pub rho: f64,
    pub value: f64,
}

impl CurvePoint {
    /// Expected ROI excess `z_r - rho = E[gamma p - v x]`.
    pub fn roi_residual(&self) -> f64 {
        self.z_r - self.rho
    }

    fn accumulate(&mut self, w: f64, other: &CurvePoint) {
        self.z_b += w * other.z_b;
        self.z_r += w * other.z_r;
        self.rho += w * other.rho;
        self.value += w * other.value;
    }
}

/// Allocation and payment of one round where the bidder bids `bid` against
/// the highest competing bid `competing`.
pub fn single_round_outcome(bid: f64, competing: f64, alpha: f64, wins_ties: bool) -> (f64, f64) {
    let wins = bid > competing || (wins_ties && bid == competing && bid > 0.0);
    if wins {
        (
            1.0,
            (alpha * bid + (1.0 - alpha) * competing).clamp(competing, bid),
        )
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCurves {
    pub gamma: f64,
    pub alpha: f64,
    pub wins_ties: bool,
    pub atoms: Vec<JointAtom>,
    pub mode: EvalMode,
}

impl ExpectedCurves {
    pub fn exact(
        gamma: f64,
        alpha: f64,
        wins_ties: bool,
        atoms: Vec<JointAtom>,
    ) -> Result<Self, OracleError> {
        let curves = Self {
            gamma,
            alpha,
            wins_ties,
            atoms,
            mode: EvalMode::Exact,
        };
        curves.validate()?;
        Ok(curves)
    }

    /// Monte Carlo curves from `samples` i.i.d. draws of `(value, competing bid)`.
    pub fn monte_carlo<F>(
        gamma: f64,
        alpha: f64,
        wins_ties: bool,
        samples: usize,
        seed: u64,
        mut draw: F,
    ) -> Result<Self, OracleError>
    where
        F: FnMut(&mut Stream) -> (f64, f64),
    {
        if samples < MIN_MONTE_CARLO_SAMPLES {
            return Err(OracleError::SampleBudgetTooSmall {
                got: samples,
                min: MIN_MONTE_CARLO_SAMPLES,
            });
        }
        let mut rng = seeded(seed);
        let mass = 1.0 / samples as f64;
        let atoms = (0..samples)
            .map(|_| {
                let (value, bid) = draw(&mut rng);
                JointAtom {
                    value,
                    competing: CompetingBid::Atom { bid },
                    prob: mass,
                }
            })
            .collect();
        let curves = Self {
            gamma,
            alpha,
            wins_ties,
            atoms,
            mode: EvalMode::MonteCarlo { samples, seed },
        };
        curves.validate()?;
        Ok(curves)
    }

    /// Exact curves for `agent` in a discrete environment, with every other
    /// agent `j` bidding the frozen `opponent_bid(j, v_j)`.
    pub fn from_environment(
        model: &EnvironmentModel,
        agent: usize,
        gamma: f64,
        alpha: f64,
        wins_ties: bool,
        opponent_bid: &dyn Fn(usize, f64) -> f64,
    ) -> Result<Self, OracleError> {
        if agent >= model.n_agents {
            return Err(OracleError::Invalid(format!(
                "agent {agent} not in a {}-agent model",
                model.n_agents
            )));
        }
        let atoms = model
            .enumerate_support()?
            .into_iter()
            .map(|atom| {
                let bid = (0..model.n_agents)
                    .filter(|&j| j != agent)
                    .map(|j| opponent_bid(j, atom.values[j]))
                    .fold(0.0, f64::max);
                JointAtom {
                    value: atom.values[agent],
                    competing: CompetingBid::Atom { bid },
                    prob: atom.prob,
                }
            })
            .collect();
        Self::exact(gamma, alpha, wins_ties, atoms)
    }

    fn validate(&self) -> Result<(), OracleError> {
        if !(self.gamma >= 1.0 && (0.0..=1.0).contains(&self.alpha)) {
            return Err(OracleError::Invalid(format!(
                "gamma = {}, alpha = {}",
                self.gamma, self.alpha
            )));
        }
        if self.atoms.is_empty() {
            return Err(OracleError::Invalid("no atoms".into()));
        }
        let mut total = 0.0;
        for a in &self.atoms {
            let competing_ok = match a.competing {
                CompetingBid::Atom { bid } => bid.is_finite() && bid >= 0.0,
                CompetingBid::Uniform { lo, hi } => {
                    lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi
                }
            };
            if !(a.value.is_finite() && a.value >= 0.0 && a.prob >= 0.0 && competing_ok) {
                return Err(OracleError::Invalid(format!("bad atom {a:?}")));
            }
            total += a.prob;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(OracleError::Invalid(format!(
                "atom probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    /// Largest value in the support.
    pub fn max_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.value).fold(0.0, f64::max)
    }

    fn atom_point(&self, atom: &JointAtom, mu: f64) -> CurvePoint {
        let v = atom.value;
        let bid = v / (1.0 + mu);
        let (gamma, alpha) = (self.gamma, self.alpha);
        match atom.competing {
            CompetingBid::Atom { bid: d } => self.point_vs_atom(v, bid, d),
            CompetingBid::Uniform { lo, hi } if hi <= lo => self.point_vs_atom(v, bid, lo),
            CompetingBid::Uniform { lo, hi } => {
                let width = hi - lo;
                let upper = bid.clamp(lo, hi);
                if upper <= lo {
                    return CurvePoint::default();
                }
                let win_len = upper - lo;
                let z_b = (alpha * bid * win_len + (1.0 - alpha) * (upper * upper - lo * lo) / 2.0)
                    / width;
                // Per-realization net spend g(d) = gamma (alpha bid + (1 - alpha) d) - v is affine in d.
                let integral = |l: f64, r: f64| {
                    (gamma * alpha * bid - v) * (r - l)
                        + gamma * (1.0 - alpha) * (r * r - l * l) / 2.0
                };
                let (z_r, rho) = if alpha >= 1.0 {
                    let g = gamma * bid - v;
                    (
                        g.max(0.0) * win_len / width,
                        (-g).max(0.0) * win_len / width,
                    )
                } else {
                    let root = (v / gamma - alpha * bid) / (1.0 - alpha);
                    let split = root.clamp(lo, upper);
                    (integral(split, upper) / width, -integral(lo, split) / width)
                };
                CurvePoint {
                    mu,
                    z_b,
                    z_r: z_r.max(0.0),
                    rho: rho.max(0.0),
                    value: v * win_len / width,
                }
            }
        }
    }

    fn point_vs_atom(&self, v: f64, bid: f64, d: f64) -> CurvePoint {
        let (x, p) = single_round_outcome(bid, d, self.alpha, self.wins_ties);
        let net = self.gamma * p - v * x;
        CurvePoint {
            mu: 0.0,
            z_b: p,
            z_r: net.max(0.0),
            rho: (-net).max(0.0),
            value: v * x,
        }
    }

    pub fn evaluate(&self, mu: f64) -> CurvePoint {
        let mut total = CurvePoint {
            mu,
            ..CurvePoint::default()
        };
        for atom in &self.atoms {
            total.accumulate(atom.prob, &self.atom_point(atom, mu));
        }
        total
    }

    /// Standard errors of each quantity (zero in exact mode).
    pub fn standard_errors(&self, mu: f64) -> CurvePoint {
        let EvalMode::MonteCarlo { samples, .. } = self.mode else {
            return CurvePoint {
                mu,
                ..CurvePoint::default()
            };
        };
        let mean = self.evaluate(mu);
        let mut var = CurvePoint::default();
        for atom in &self.atoms {
            let p = self.atom_point(atom, mu);
            var.z_b += (p.z_b - mean.z_b).powi(2);
            var.z_r += (p.z_r - mean.z_r).powi(2);
            var.rho += (p.rho - mean.rho).powi(2);
            var.value += (p.value - mean.value).powi(2);
        }
        let m = samples as f64;
        let se = |s: f64| (s / (m - 1.0) / m).sqrt();
        CurvePoint {
            mu,
            z_b: se(var.z_b),
            z_r: se(var.z_r),
            rho: se(var.rho),
            value: se(var.value),
        }
    }

    pub fn sample_grid(&self, grid: &[f64]) -> Vec<CurvePoint> {
        grid.iter().map(|&mu| self.evaluate(mu)).collect()
    }

    /// Draws one realization `(value, competing bid)`.
    pub fn sample_realization<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let weights =
            WeightedIndex::new(self.atoms.iter().map(|a| a.prob)).expect("validated probabilities");
        let atom = &self.atoms[weights.sample(rng)];
        let d = match atom.competing {
            CompetingBid::Atom { bid } => bid,
            CompetingBid::Uniform { lo, hi } if hi > lo => rng.random_range(lo..hi),
            CompetingBid::Uniform { lo, .. } => lo,
        };
        (atom.value, d)
    }

    /// Verifies `z_b` and `value` are non-increasing on `[0, upper]` and
    /// `z_r - rho` on `[0, gamma - 1]`, within `tol`.
    pub fn check_monotone(&self, upper: f64, points: usize, tol: f64) -> Result<(), OracleError> {
        let grid = uniform_grid(0.0, upper.max(0.0), points);
        let evals = self.sample_grid(&grid);
        for w in evals.windows(2) {
            let checks = [("Z_B", w[1].z_b - w[0].z_b), ("V", w[1].value - w[0].value)];
            for (curve, excess) in checks {
                if excess > tol {
                    return Err(OracleError::MonotonicityViolated {
                        curve,
                        mu: w[1].mu,
                        excess,
                    });
                }
            }
        }
        let roi_top = self.gamma - 1.0;
        if roi_top > 0.0 {
            let evals = self.sample_grid(&uniform_grid(0.0, roi_top, points));
            for w in evals.windows(2) {
                let excess = w[1].roi_residual() - w[0].roi_residual();
                if excess > tol {
                    return Err(OracleError::MonotonicityViolated {
                        curve: "Z_R - rho",
                        mu: w[1].mu,
                        excess,
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest finite-difference slope of any curve on `grid`; an
    /// informational estimate of the Lipschitz constant.
    pub fn lipschitz_estimate(&self, grid: &[f64]) -> f64 {
        let evals = self.sample_grid(grid);
        evals
            .windows(2)
            .filter(|w| w[1].mu > w[0].mu)
            .map(|w| {
                let h = w[1].mu - w[0].mu;
                [
                    w[1].z_b - w[0].z_b,
                    w[1].z_r - w[0].z_r,
                    w[1].rho - w[0].rho,
                    w[1].value - w[0].value,
                ]
                .iter()
                .map(|d| d.abs() / h)
                .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacingBenchmark {
    pub mu_b_star: f64,
    pub mu_r_star: f64,
    pub mu_star: f64,
    /// Set when the residual jumps past zero instead of crossing it.
    pub budget_discontinuous: bool,
    pub roi_discontinuous: bool,
}

/// Infimum of `{mu in [0, hi] : residual(mu) <= tol}` for a non-increasing
/// residual. Returns the point and whether equality fails there.
fn left_edge(residual: impl Fn(f64) -> f64, hi: f64, tol: f64) -> (f64, bool) {
    if hi <= 0.0 || residual(0.0) <= tol {
        return (0.0, false);
    }
    let (mut lo, mut up) = (0.0, hi);
    if residual(up) > tol {
        return (hi, true);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if residual(mid) <= tol {
            up = mid;
        } else {
            lo = mid;
        }
    }
    (up, residual(up) < -tol)
}

/// Pacing multipliers: the smallest `mu` at which the expected budget
/// spend reaches `rho` (in `[0, vbar/rho - 1]`) and at which the expected ROI
/// residual reaches zero (in `[0, gamma - 1]`), each 0 if already satisfied.
pub fn pacing_multipliers(
    curves: &ExpectedCurves,
    spec: &AgentSpec,
    tol: f64,
) -> Result<PacingBenchmark, OracleError> {
    let upper = spec.safe_multiplier().max(1.0);
    let scale = 1.0 + curves.gamma * curves.max_value();
    curves.check_monotone(upper, MONOTONE_GRID_POINTS, 1e-12 * scale)?;

    let (mu_b_star, budget_discontinuous) = match spec.rho() {
        Some(rho) => left_edge(
            |mu| curves.evaluate(mu).z_b - rho,
            spec.vbar / rho - 1.0,
            tol,
        ),
        None => (0.0, false),
    };
    let (mu_r_star, roi_discontinuous) = left_edge(
        |mu| curves.evaluate(mu).roi_residual(),
        spec.gamma - 1.0,
        tol,
    );
    Ok(PacingBenchmark {
        mu_b_star,
        mu_r_star,
        mu_star: mu_b_star.max(mu_r_star),
        budget_discontinuous,
        roi_discontinuous,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacingPath {
    pub per_round: Vec<PacingBenchmark>,
    pub path_length_b: f64,
    pub path_length_r: f64,
}

/// Per-round pacing multipliers of a nonstationary environment and their
/// path lengths.
pub fn pacing_sequence(
    per_round: &[ExpectedCurves],
    spec: &AgentSpec,
    tol: f64,
) -> Result<PacingPath, OracleError> {
    let per_round = per_round
        .iter()
        .map(|c| pacing_multipliers(c, spec, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let b: Vec<f64> = per_round.iter().map(|p| p.mu_b_star).collect();
    let r: Vec<f64> = per_round.iter().map(|p| p.mu_r_star).collect();
    Ok(PacingPath {
        path_length_b: path_length(&b).unwrap_or(0.0),
        path_length_r: path_length(&r).unwrap_or(0.0),
        per_round,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HValues {
    pub mu: Vec<f64>,
    /// `rho mu - int_0^mu z_b`; absent without a budget.
    pub h_b: Option<Vec<f64>>,
    /// `int_0^mu (rho(t) - z_r(t)) dt`.
    pub h_r: Vec<f64>,
}

impl HValues {
    /// Discrete second differences on a uniform grid.
    pub fn second_differences(values: &[f64]) -> Vec<f64> {
        values
            .windows(3)
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .collect()
    }
}

/// Trapezoid integration of the auxiliary losses over a sorted grid
/// starting at or above zero.
pub fn auxiliary_h(
    curves: &ExpectedCurves,
    rho: Option<f64>,
    grid: &[f64],
) -> Result<HValues, OracleError> {
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|&m| m < 0.0) {
        return Err(OracleError::Invalid(
            "grid must be sorted and non-negative".into(),
        ));
    }
    let mut knots = Vec::with_capacity(grid.len() + 1);
    if grid.first() != Some(&0.0) {
        knots.push(0.0);
    }
    let offset = knots.len();
    knots.extend_from_slice(grid);
    let evals = curves.sample_grid(&knots);

    let mut int_zb = vec![0.0; knots.len()];
    let mut int_gain = vec![0.0; knots.len()];
    for i in 1..knots.len() {
        let h = knots[i] - knots[i - 1];
        int_zb[i] = int_zb[i - 1] + 0.5 * h * (evals[i].z_b + evals[i - 1].z_b);
        int_gain[i] =
            int_gain[i - 1] - 0.5 * h * (evals[i].roi_residual() + evals[i - 1].roi_residual());
    }
    let h_b = rho.map(|rho| {
        knots
            .iter()
            .zip(&int_zb)
            .skip(offset)
            .map(|(mu, z)| rho * mu - z)
            .collect()
    });
    Ok(HValues {
        mu: grid.to_vec(),
        h_b,
        h_r: int_gain[offset..].to_vec(),
    })
}
