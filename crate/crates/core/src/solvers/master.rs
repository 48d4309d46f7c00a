//! Restricted master program for column generation on max-min rate-profile
//! problems with per-block resource limits:
//!
//! ```text
//! maximize t
//!   s.t.  alpha_k t - scale * sum_j nu_j r_jk <= 0     (active users k)
//!         sum_{j in block n} nu_j u_jr  (<= or =)  cap_nr
//!         nu >= 0, t >= 0
//! ```
//!
//! Each column is one operating point of one block (its per-user rates and
//! resource usage). The row duals price new columns, and together with the
//! best reduced cost per block they give a Lagrangian upper bound.

use crate::error::{Error, Result};
use crate::solvers::lp::{lp_solve, LinearProgram, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceRow {
    pub capacity: f64,
    /// Equality (`= capacity`) instead of `<= capacity`.
    pub equality: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub block: usize,
    pub rates: Vec<f64>,
    /// Usage of each resource row of `block`.
    pub usage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ColumnMaster {
    alpha: Vec<f64>,
    blocks: Vec<Vec<ResourceRow>>,
    scale: f64,
    columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    /// Optimal `t`.
    pub value: f64,
    /// Weight of every column, in insertion order.
    pub weights: Vec<f64>,
    /// `scale * sum_j nu_j r_jk` for every user.
    pub rates: Vec<f64>,
    /// Multipliers of the user rows; zero for inactive users.
    pub user_duals: Vec<f64>,
    /// Multipliers of the resource rows, per block.
    pub resource_duals: Vec<Vec<f64>>,
}

impl MasterSolution {
    /// Reduced cost of a candidate column: positive means it would improve
    /// the master.
    pub fn reduced_cost(&self, scale: f64, column: &Column) -> f64 {
        let gain: f64 = self.user_duals.iter().zip(&column.rates).map(|(l, r)| l * r).sum();
        let cost: f64 = self.resource_duals[column.block]
            .iter()
            .zip(&column.usage)
            .map(|(p, u)| p * u)
            .sum();
        scale * gain - cost
    }
}

impl ColumnMaster {
    /// `scale` multiplies every column's rates (e.g. `1/N` for N blocks).
    pub fn new(alpha: &[f64], blocks: Vec<Vec<ResourceRow>>, scale: f64) -> Result<Self> {
        if alpha.iter().any(|a| !(*a >= 0.0)) || !alpha.iter().any(|a| *a > 0.0) {
            return Err(Error::InvalidConfig("master needs a non-negative, nonzero profile".into()));
        }
        if blocks.is_empty() || !(scale > 0.0) {
            return Err(Error::InvalidConfig("master needs blocks and a positive scale".into()));
        }
        Ok(Self { alpha: alpha.to_vec(), blocks, scale, columns: Vec::new() })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn add_column(&mut self, column: Column) -> Result<()> {
        if column.block >= self.blocks.len()
            || column.rates.len() != self.alpha.len()
            || column.usage.len() != self.blocks[column.block].len()
        {
            return Err(Error::InvalidConfig("column does not match the master layout".into()));
        }
        if column.rates.iter().chain(&column.usage).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("master column".into()));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn solve(&self) -> Result<MasterSolution> {
        let active: Vec<usize> = (0..self.alpha.len()).filter(|&k| self.alpha[k] > 0.0).collect();
        let n = self.columns.len() + 1;
        let mut objective = vec![0.0; n];
        objective[0] = 1.0;
        let mut lp = LinearProgram::new(objective);
        for &k in &active {
            let mut row = vec![0.0; n];
            row[0] = self.alpha[k];
            for (j, c) in self.columns.iter().enumerate() {
                row[j + 1] = -self.scale * c.rates[k];
            }
            lp.add_ineq(row, 0.0);
        }
        let mut row_index = Vec::new();
        for (b, rows) in self.blocks.iter().enumerate() {
            for (r, spec) in rows.iter().enumerate() {
                let mut row = vec![0.0; n];
                for (j, c) in self.columns.iter().enumerate() {
                    if c.block == b {
                        row[j + 1] = c.usage[r];
                    }
                }
                if spec.equality {
                    row_index.push((b, r, true, lp.eq_rhs.len()));
                    lp.add_eq(row, spec.capacity);
                } else {
                    row_index.push((b, r, false, lp.ineq_rhs.len()));
                    lp.add_ineq(row, spec.capacity);
                }
            }
        }
        let sol = lp_solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Infeasible("master program has no feasible mixture".into()))
            }
            LpStatus::Unbounded => {
                return Err(Error::Solver("master program is unbounded".into()))
            }
        }
        let weights: Vec<f64> = sol.x[1..].iter().map(|v| v.max(0.0)).collect();
        let mut rates = vec![0.0; self.alpha.len()];
        for (w, c) in weights.iter().zip(&self.columns) {
            for (r, cr) in rates.iter_mut().zip(&c.rates) {
                *r += self.scale * w * cr;
            }
        }
        let mut user_duals = vec![0.0; self.alpha.len()];
        for (i, &k) in active.iter().enumerate() {
            user_duals[k] = sol.ineq_duals[i];
        }
        let mut resource_duals: Vec<Vec<f64>> =
            self.blocks.iter().map(|rows| vec![0.0; rows.len()]).collect();
        for (b, r, eq, idx) in row_index {
            resource_duals[b][r] = if eq { sol.eq_duals[idx] } else { sol.ineq_duals[idx] };
        }
        Ok(MasterSolution { value: sol.value, weights, rates, user_duals, resource_duals })
    }
}
