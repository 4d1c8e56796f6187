//! Optimal liquid welfare via the dense LP.
//!
//! Variables are per-atom allocations `y[s][k]` plus one willingness-to-pay
//! variable `w_k` per agent:
//!
//! ```text
//! max  sum_k w_k
//! s.t. sum_k y[s][k] <= 1                         for every atom s
//!      w_k <= (1/gamma_k) sum_s P(s) y[s][k] v[s][k]  for every agent k
//!      w_k <= cap_k                                 for agents with a budget
//! ```
//!
//! Ex-ante welfare scales the optimum by `T` with `cap_k = rho_k`; hindsight
//! welfare treats each round as an atom of mass `1/T`.

use serde::{Deserialize, Serialize};

use super::lp::{lp_solve, LinearConstraint, LinearProgram};
use super::OracleError;
use crate::environment::{Atom, EnvironmentModel};
use crate::strategies::AgentSpec;

/// Largest `n * S` accepted.
pub const MAX_ALLOCATION_VARS: usize = 100_000;
/// Largest dense tableau built, in cells (about 128 MB).
pub const MAX_TABLEAU_CELLS: usize = 16_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalWelfare {
    pub value: f64,
    /// `W_k` of each agent at the optimum.
    pub per_agent: Vec<f64>,
    /// Allocation rule: `allocation[s][k]` for each (merged) atom.
    pub atoms: Vec<Atom>,
    pub allocation: Vec<Vec<f64>>,
}

/// Merges atoms with identical profiles; the LP is linear in each atom's
/// allocation so this leaves the optimum unchanged.
fn merge_atoms(atoms: &[Atom]) -> Vec<Atom> {
    let mut sorted: Vec<&Atom> = atoms.iter().filter(|a| a.prob > 0.0).collect();
    sorted.sort_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut merged: Vec<Atom> = Vec::new();
    for atom in sorted {
        match merged.last_mut() {
            Some(last) if last.values == atom.values => last.prob += atom.prob,
            _ => merged.push(atom.clone()),
        }
    }
    merged
}

/// Solves the welfare LP in per-round units. `caps[k]` is the per-round
/// willingness-to-pay cap (`None` for no budget).
fn solve_welfare_lp(
    atoms: &[Atom],
    gammas: &[f64],
    caps: &[Option<f64>],
) -> Result<OptimalWelfare, OracleError> {
    let n = gammas.len();
    let atoms = merge_atoms(atoms);
    let s_count = atoms.len();
    if let Some(bad) = atoms.iter().find(|a| a.values.len() != n) {
        return Err(OracleError::Invalid(format!(
            "atom has {} values for {n} agents",
            bad.values.len()
        )));
    }
    if n * s_count > MAX_ALLOCATION_VARS {
        return Err(OracleError::InstanceTooLarge {
            vars: n * s_count,
            limit: MAX_ALLOCATION_VARS,
        });
    }

    let y = |s: usize, k: usize| s * n + k;
    let w = |k: usize| s_count * n + k;
    let n_vars = s_count * n + n;
    // Every row is `<=` with one slack; reject before allocating dense rows.
    let rows = s_count + n + caps.iter().filter(|c| c.is_some()).count();
    let cells = (rows + 1) * (n_vars + rows + 1);
    if cells > MAX_TABLEAU_CELLS {
        return Err(OracleError::InstanceTooLarge {
            vars: n * s_count,
            limit: MAX_ALLOCATION_VARS,
        });
    }

    let mut objective = vec![0.0; n_vars];
    for k in 0..n {
        objective[w(k)] = 1.0;
    }
    let mut lp = LinearProgram::new(objective);
    for s in 0..s_count {
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            row[y(s, k)] = 1.0;
        }
        lp.push(LinearConstraint::le(row, 1.0));
    }
    for k in 0..n {
        let mut row = vec![0.0; n_vars];
        row[w(k)] = 1.0;
        for (s, atom) in atoms.iter().enumerate() {
            row[y(s, k)] = -atom.prob * atom.values[k] / gammas[k];
        }
        lp.push(LinearConstraint::le(row, 0.0));
        if let Some(cap) = caps[k] {
            let mut row = vec![0.0; n_vars];
            row[w(k)] = 1.0;
            lp.push(LinearConstraint::le(row, cap));
        }
    }
    debug_assert_eq!(lp.tableau_cells(), cells);

    let sol = lp_solve(&lp)?;
    let allocation: Vec<Vec<f64>> = (0..s_count)
        .map(|s| (0..n).map(|k| sol.x[y(s, k)]).collect())
        .collect();
    // Recompute W_k from the allocation rather than trusting w_k.
    let per_agent: Vec<f64> = (0..n)
        .map(|k| {
            let earned: f64 = atoms
                .iter()
                .zip(&allocation)
                .map(|(a, ys)| a.prob * ys[k] * a.values[k])
                .sum::<f64>()
                / gammas[k];
            caps[k].map_or(earned, |c| earned.min(c))
        })
        .collect();
    Ok(OptimalWelfare {
        value: sol.objective,
        per_agent,
        atoms,
        allocation,
    })
}

/// Optimal ex-ante liquid welfare `max_y sum_k T min{rho_k, E[y_k v_k] / gamma_k}`.
pub fn ex_ante_optimal_welfare(
    model: &EnvironmentModel,
    specs: &[AgentSpec],
) -> Result<OptimalWelfare, OracleError> {
    let atoms = model.enumerate_support()?;
    ex_ante_from_atoms(&atoms, specs)
}

pub fn ex_ante_from_atoms(
    atoms: &[Atom],
    specs: &[AgentSpec],
) -> Result<OptimalWelfare, OracleError> {
    let horizon = common_horizon(specs)?;
    let gammas: Vec<f64> = specs.iter().map(|s| s.gamma).collect();
    let caps: Vec<Option<f64>> = specs.iter().map(AgentSpec::rho).collect();
    let mut result = solve_welfare_lp(atoms, &gammas, &caps)?;
    let t = horizon as f64;
    result.value *= t;
    result.per_agent.iter_mut().for_each(|w| *w *= t);
    Ok(result)
}

/// Best liquid welfare over fractional allocation sequences of the realized
/// profiles `values[t][k]`: `max sum_k min{B_k, sum_t y_tk v_tk / gamma_k}`.
pub fn hindsight_optimal_welfare(
    values: &[Vec<f64>],
    specs: &[AgentSpec],
) -> Result<f64, OracleError> {
    if values.is_empty() {
        return Ok(0.0);
    }
    let t = values.len() as f64;
    let mass = 1.0 / t;
    let atoms: Vec<Atom> = values
        .iter()
        .map(|v| Atom {
            values: v.clone(),
            prob: mass,
        })
        .collect();
    let gammas: Vec<f64> = specs.iter().map(|s| s.gamma).collect();
    let caps: Vec<Option<f64>> = specs
        .iter()
        .map(|s| s.budget.is_finite().then(|| s.budget.as_f64() / t))
        .collect();
    Ok(solve_welfare_lp(&atoms, &gammas, &caps)?.value * t)
}

fn common_horizon(specs: &[AgentSpec]) -> Result<u64, OracleError> {
    let first = specs
        .first()
        .ok_or_else(|| OracleError::Invalid("no agents".into()))?
        .horizon;
    if specs.iter().any(|s| s.horizon != first) {
        return Err(OracleError::Invalid(
            "agents disagree on the horizon".into(),
        ));
    }
    Ok(first)
}
