//! Dense two-phase primal simplex for small linear programs.
//!
//! Solves `max c^T x` subject to linear constraints and `x >= 0`. Pricing is
//! Dantzig's largest coefficient until a run of degenerate pivots is seen, after
//! which Bland's smallest-index rule takes over for the rest of the phase,
//! which rules out cycling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const DEGENERATE_STREAK: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    DimensionMismatch {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite coefficient in the linear program")]
    NonFinite,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Le,
            rhs,
        }
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Ge,
            rhs,
        }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Eq,
            rhs,
        }
    }
}

/// `max objective^T x` over `x >= 0` and the constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, constraint: LinearConstraint) -> &mut Self {
        self.constraints.push(constraint);
        self
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Cells the dense tableau for this program would occupy.
    pub fn tableau_cells(&self) -> usize {
        let m = self.constraints.len();
        let extra: usize = self
            .constraints
            .iter()
            .map(|c| match c.relation {
                Relation::Le | Relation::Eq => 1,
                Relation::Ge => 2,
            })
            .sum();
        (m + 1) * (self.n_vars() + extra + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Original,
    Slack,
    Artificial,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last entry of each row is the rhs.
    data: Vec<f64>,
    /// Reduced costs `z_j - c_j` and current objective in the last slot.
    cost: Vec<f64>,
    basis: Vec<usize>,
    kinds: Vec<ColumnKind>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let inv = 1.0 / self.at(r, c);
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.data[r * w + c] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Sets the cost row for maximizing `costs^T x` given the current basis.
    fn load_objective(&mut self, costs: &[f64]) {
        let w = self.width();
        self.cost = vec![0.0; w];
        for (j, c) in costs.iter().enumerate() {
            self.cost[j] = -c;
        }
        for i in 0..self.rows {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.cost[j] += cb * self.data[i * w + j];
                }
            }
        }
    }

    fn entering(&self, bland: bool, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        let candidates = (0..self.cols).filter(|&j| allowed(j) && self.cost[j] < -COST_EPS);
        if bland {
            candidates.min()
        } else {
            candidates.min_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)))
        }
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > PIVOT_EPS {
                let ratio = self.rhs(i) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }

    fn optimize(
        &mut self,
        allowed: impl Fn(usize) -> bool + Copy,
        max_pivots: usize,
    ) -> Result<(), LpError> {
        let mut bland = false;
        let mut degenerate = 0;
        loop {
            let Some(c) = self.entering(bland, allowed) else {
                return Ok(());
            };
            let Some(r) = self.leaving(c) else {
                return Err(LpError::Unbounded);
            };
            if self.rhs(r).abs() <= PIVOT_EPS {
                degenerate += 1;
                if degenerate >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            if self.pivots > max_pivots {
                return Err(LpError::IterationLimit(max_pivots));
            }
        }
    }
}

/// Solves `lp` to optimality.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.n_vars();
    if lp.objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::NonFinite);
    }
    for (row, con) in lp.constraints.iter().enumerate() {
        if con.coeffs.len() != n {
            return Err(LpError::DimensionMismatch {
                row,
                got: con.coeffs.len(),
                expected: n,
            });
        }
        if !con.rhs.is_finite() || con.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite);
        }
    }

    // Normalize to rhs >= 0.
    let rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|a| -a).collect(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();

    let m = rows.len();
    let mut kinds = vec![ColumnKind::Original; n];
    for (_, rel, _) in &rows {
        match rel {
            Relation::Le => kinds.push(ColumnKind::Slack),
            Relation::Ge => {
                kinds.push(ColumnKind::Slack);
                kinds.push(ColumnKind::Artificial);
            }
            Relation::Eq => kinds.push(ColumnKind::Artificial),
        }
    }
    let cols = kinds.len();
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut next = n;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        data[i * w..i * w + n].copy_from_slice(coeffs);
        data[i * w + cols] = *rhs;
        match rel {
            Relation::Le => {
                data[i * w + next] = 1.0;
                basis[i] = next;
                next += 1;
            }
            Relation::Ge => {
                data[i * w + next] = -1.0;
                data[i * w + next + 1] = 1.0;
                basis[i] = next + 1;
                next += 2;
            }
            Relation::Eq => {
                data[i * w + next] = 1.0;
                basis[i] = next;
                next += 1;
            }
        }
    }

    let mut t = Tableau {
        rows: m,
        cols,
        data,
        cost: Vec::new(),
        basis,
        kinds,
        pivots: 0,
    };
    let max_pivots = 50 * (m + cols) + 1000;

    let has_artificial = t.kinds.contains(&ColumnKind::Artificial);
    if has_artificial {
        let phase1: Vec<f64> = t
            .kinds
            .iter()
            .map(|k| {
                if *k == ColumnKind::Artificial {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        t.load_objective(&phase1);
        t.optimize(|_| true, max_pivots)?;
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if t.cost[cols] < -1e-9 * scale {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..t.rows {
            if t.kinds[t.basis[i]] == ColumnKind::Artificial {
                if let Some(j) = (0..cols)
                    .find(|&j| t.kinds[j] != ColumnKind::Artificial && t.at(i, j).abs() > 1e-9)
                {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(&lp.objective);
    t.load_objective(&phase2);
    let kinds = t.kinds.clone();
    t.optimize(|j| kinds[j] != ColumnKind::Artificial, max_pivots)?;

    let mut x = vec![0.0; n];
    for i in 0..t.rows {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: t.pivots,
    })
}
