//! Dense two-phase simplex for the small time-sharing and master programs.
//!
//! Entering and leaving variables follow Bland's rule, so degenerate programs
//! with many identical columns cannot cycle. Every row keeps a unit column
//! (its slack or its artificial) in the tableau, which lets the solver read
//! row duals straight off the final reduced costs.

use crate::error::{Error, Result};

/// `maximize c.x` subject to `A x <= b`, `E x = d`, `x >= lower`. A lower
/// bound of `-inf` makes the variable free.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
}

impl LinearProgram {
    /// Program with the given objective and all variables non-negative.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, lower: vec![0.0; n], ..Self::default() }
    }

    pub fn add_ineq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.lower[var] = f64::NEG_INFINITY;
        self
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.vars();
        let bad_dims = self.lower.len() != n
            || self.ineq_matrix.len() != self.ineq_rhs.len()
            || self.eq_matrix.len() != self.eq_rhs.len()
            || self.ineq_matrix.iter().chain(&self.eq_matrix).any(|r| r.len() != n);
        if bad_dims {
            return Err(Error::InvalidConfig("linear program dimensions are inconsistent".into()));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().chain(&self.eq_rhs).all(|v| v.is_finite())
            && self.ineq_matrix.iter().chain(&self.eq_matrix).flatten().all(|v| v.is_finite())
            && self.lower.iter().all(|l| l.is_finite() || *l == f64::NEG_INFINITY);
        if !finite {
            return Err(Error::NonFinite("linear program data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`lp_solve`]. `value`, `x` and the duals are meaningful only
/// when `status` is [`LpStatus::Optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// Non-negative multipliers of the `<=` rows.
    pub ineq_duals: Vec<f64>,
    /// Free multipliers of the equality rows.
    pub eq_duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus, pivots: usize) -> Self {
        Self {
            status,
            value: f64::NAN,
            x: Vec::new(),
            ineq_duals: Vec::new(),
            eq_duals: Vec::new(),
            pivots,
        }
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last entry of each row is the rhs.
    a: Vec<f64>,
    /// Reduced costs `c_j - z_j`; the last entry holds `-objective`.
    d: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + e];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (pivot_row, before, after) = {
            let (head, tail) = self.a.split_at_mut(r * w);
            let (row, rest) = tail.split_at_mut(w);
            (row.to_vec(), head, rest)
        };
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.d[e];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.d[e] = 0.0;
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    fn load_costs(&mut self, cost: &[f64]) {
        self.d = cost.to_vec();
        self.d.push(0.0);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=self.cols {
                    self.d[j] -= cb * self.at(i, j);
                }
            }
        }
    }

    /// Runs Bland-rule simplex iterations; `allowed` masks entering columns.
    fn optimize(&mut self, allowed: &[bool]) -> Result<LpStatus> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Solver("simplex pivot limit reached".into()));
            }
            let Some(e) = (0..self.cols).find(|&j| allowed[j] && self.d[j] > COST_TOL) else {
                return Ok(LpStatus::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let aie = self.at(i, e);
                if aie > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / aie;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                            if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(LpStatus::Unbounded),
                Some((r, _)) => self.pivot(r, e),
            }
        }
    }
}

/// Solves `lp` by the two-phase simplex method. Infeasible and unbounded
/// programs are reported through [`LpSolution::status`]; malformed input is
/// an error.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.vars();
    // Structural columns: one per bounded variable, two per free variable.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut structural = 0;
    for l in &lp.lower {
        if l.is_finite() {
            col_of.push((structural, None));
            structural += 1;
        } else {
            col_of.push((structural, Some(structural + 1)));
            structural += 2;
        }
    }
    let shift = |row: &[f64], rhs: f64| -> f64 {
        rhs - row
            .iter()
            .zip(&lp.lower)
            .filter(|(_, l)| l.is_finite())
            .map(|(a, l)| a * l)
            .sum::<f64>()
    };

    let m_ineq = lp.ineq_matrix.len();
    let rows_data: Vec<(&Vec<f64>, f64, bool)> = lp
        .ineq_matrix
        .iter()
        .zip(&lp.ineq_rhs)
        .map(|(r, &b)| (r, shift(r, b), true))
        .chain(lp.eq_matrix.iter().zip(&lp.eq_rhs).map(|(r, &b)| (r, shift(r, b), false)))
        .collect();
    let m = rows_data.len();

    let needs_art: Vec<bool> = rows_data.iter().map(|(_, b, ineq)| !ineq || *b < 0.0).collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let cols = structural + m_ineq + n_art;
    let w = cols + 1;
    let mut a = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut sign = vec![1.0; m];
    let mut unit_col = vec![0; m];
    let mut art_cols = Vec::with_capacity(n_art);
    let mut next_art = structural + m_ineq;
    for (i, (row, b, is_ineq)) in rows_data.iter().enumerate() {
        let s = if *b < 0.0 { -1.0 } else { 1.0 };
        sign[i] = s;
        let base = i * w;
        for (v, coef) in row.iter().enumerate() {
            let (pos, neg) = col_of[v];
            a[base + pos] = s * coef;
            if let Some(neg) = neg {
                a[base + neg] = -s * coef;
            }
        }
        if *is_ineq {
            a[base + structural + i] = s;
        }
        if needs_art[i] {
            a[base + next_art] = 1.0;
            basis[i] = next_art;
            unit_col[i] = next_art;
            art_cols.push(next_art);
            next_art += 1;
        } else {
            basis[i] = structural + i;
            unit_col[i] = structural + i;
        }
        a[base + cols] = s * b;
    }

    let mut tab = Tableau { rows: m, cols, a, d: Vec::new(), basis, pivots: 0 };
    let mut is_art = vec![false; cols];
    for &c in &art_cols {
        is_art[c] = true;
    }
    let scale = 1.0 + rows_data.iter().map(|(_, b, _)| b.abs()).fold(0.0, f64::max);

    if n_art > 0 {
        let phase1: Vec<f64> = (0..cols).map(|j| if is_art[j] { -1.0 } else { 0.0 }).collect();
        tab.load_costs(&phase1);
        let all = vec![true; cols];
        tab.optimize(&all)?;
        let infeasibility = tab.d[cols];
        if infeasibility > 1e-9 * scale {
            return Ok(LpSolution::status_only(LpStatus::Infeasible, tab.pivots));
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if is_art[tab.basis[i]] {
                if let Some(j) = (0..cols).find(|&j| !is_art[j] && tab.at(i, j).abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for (v, &(pos, neg)) in col_of.iter().enumerate() {
        cost[pos] = lp.objective[v];
        if let Some(neg) = neg {
            cost[neg] = -lp.objective[v];
        }
    }
    tab.load_costs(&cost);
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art[j]).collect();
    if tab.optimize(&allowed)? == LpStatus::Unbounded {
        return Ok(LpSolution::status_only(LpStatus::Unbounded, tab.pivots));
    }

    let mut y = vec![0.0; cols];
    for i in 0..m {
        y[tab.basis[i]] = tab.rhs(i).max(0.0);
    }
    let x: Vec<f64> = col_of
        .iter()
        .zip(&lp.lower)
        .map(|(&(pos, neg), l)| match neg {
            Some(neg) => y[pos] - y[neg],
            None => l + y[pos],
        })
        .collect();
    let value = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    let dual = |i: usize| -sign[i] * tab.d[unit_col[i]];
    let ineq_duals = (0..m_ineq).map(|i| dual(i).max(0.0)).collect();
    let eq_duals = (m_ineq..m).map(dual).collect();
    Ok(LpSolution { status: LpStatus::Optimal, value, x, ineq_duals, eq_duals, pivots: tab.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ineq(vec![1.0], 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.ineq_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_row() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.eq_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ineq(vec![1.0], -1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_ineq(vec![-1.0, 1.0], 1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_lower_bounds() {
        // max -x s.t. x >= -3 written as -x <= 3, x free
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.set_free(0).add_ineq(vec![-1.0], 3.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.x[0] + 3.0).abs() < 1e-12);

        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.lower = vec![2.0, -1.0];
        let s = lp_solve(&lp).unwrap();
        assert!((s.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_duplicate_columns() {
        // Many identical time-sharing atoms; Bland's rule must terminate.
        let k = 12;
        let mut lp = LinearProgram::new((0..=k).map(|j| if j == k { 1.0 } else { 0.0 }).collect());
        let mut rate_row: Vec<f64> = vec![-1.0; k];
        rate_row.push(0.5);
        lp.add_ineq(rate_row, 0.0);
        let mut other: Vec<f64> = vec![-1.0; k];
        other.push(0.5);
        lp.add_ineq(other, 0.0);
        let mut sum = vec![1.0; k];
        sum.push(0.0);
        lp.add_eq(sum, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_ineq(vec![1.0], 1.0);
        assert!(lp_solve(&lp).is_err());
    }
}
