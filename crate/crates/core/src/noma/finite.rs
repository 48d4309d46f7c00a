//! Inner bound for a finite number of IRS reconfiguration blocks.
//!
//! The optimal time-sharing schedule is rounded to `N` blocks. The block
//! powers are then improved by successive convex approximation (SCA): each
//! rate is lower-bounded by linearizing its interference term, and the
//! convexified max-min problem is solved exactly by column generation over
//! per-block power vectors.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{decoding_order, GainTable, PhaseConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::noma::{solve_noma_infinite, NomaInfinite, NomaOptions, TimeSharingSchedule};
use crate::profile::RateProfile;
use crate::solvers::concave::project_capped_simplex;
use crate::solvers::{concave_maximize, Column, ColumnMaster, ConcaveProgramSpec, ResourceRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop when the common rate improves by less than this (relative).
    pub tol: f64,
    pub max_iter: usize,
    /// Relative reduced-cost threshold for adding a column.
    pub column_tol: f64,
    pub max_column_rounds: usize,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_iter: 100, column_tol: 1e-9, max_column_rounds: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaFinite {
    pub rate: f64,
    /// Per-user rates averaged over the blocks.
    pub rates: Vec<f64>,
    /// Per-block, per-user transmit powers in watts.
    pub powers: Vec<Vec<f64>>,
    /// Configuration ordinal of every block.
    pub configs: Vec<usize>,
    pub thetas: Vec<PhaseConfig>,
    /// Common rate after every SCA iteration, starting with the initial
    /// point.
    pub history: Vec<f64>,
}

/// Largest-remainder apportionment of `n` seats to weights `tau`. Ties in the
/// remainder go to the lower index, and the counts always sum to `n`.
pub fn apportion(tau: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = tau.iter().sum();
    let quotas: Vec<f64> = tau.iter().map(|t| n as f64 * t / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut by_remainder: Vec<usize> = (0..tau.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Index of the schedule atom used in each of the `n` blocks. Atoms are laid
/// out contiguously in schedule order, and atoms given no block are dropped.
pub fn build_theta_schedule(schedule: &TimeSharingSchedule, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidConfig("at least one block is required".into()));
    }
    Ok(apportion(&schedule.tau, n)
        .iter()
        .enumerate()
        .flat_map(|(atom, &count)| std::iter::repeat_n(atom, count))
        .collect())
}

/// Concave lower bound of the SIC rate obtained by linearizing the
/// interference term at `q_local`:
/// `log2(sigma2 + H P) - log2(sigma2 + H Ql) - H (Q - Ql) / ((sigma2 + H Ql) ln 2)`,
/// where `P` counts the user's own power plus interference and `Q` counts
/// interference only.
pub fn sca_lower_bound(gain: f64, q: f64, q_local: f64, p_total: f64, sigma2: f64) -> f64 {
    let g = gain / sigma2;
    ((g * p_total).ln_1p() - (g * q_local).ln_1p() - g * (q - q_local) / (1.0 + g * q_local)) / LN_2
}

/// One block: SNR gains at full power and positions in the decoding order.
struct Block {
    snr: Vec<f64>,
    pos: Vec<usize>,
}

impl Block {
    fn new(gains: &[f64], p_max: f64) -> Self {
        let order = decoding_order(gains);
        let pos = (0..gains.len()).map(|k| order.position(k)).collect();
        Self { snr: gains.iter().map(|g| g * p_max).collect(), pos }
    }

    /// Own-plus-interference and interference-only power fractions.
    fn partial_sums(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = x.len();
        let mut p = vec![0.0; k];
        let mut q = vec![0.0; k];
        for u in 0..k {
            for i in 0..k {
                if self.pos[i] >= self.pos[u] {
                    p[u] += x[i];
                }
                if self.pos[i] > self.pos[u] {
                    q[u] += x[i];
                }
            }
        }
        (p, q)
    }

    fn rates(&self, x: &[f64]) -> Vec<f64> {
        let (p, q) = self.partial_sums(x);
        (0..x.len())
            .map(|u| ((self.snr[u] * p[u]).ln_1p() - (self.snr[u] * q[u]).ln_1p()) / LN_2)
            .collect()
    }

    fn bound_rates(&self, x: &[f64], q_local: &[f64]) -> Vec<f64> {
        let (p, q) = self.partial_sums(x);
        (0..x.len())
            .map(|u| {
                let a = self.snr[u];
                ((a * p[u]).ln_1p() - (a * q_local[u]).ln_1p() - a * (q[u] - q_local[u]) / (1.0 + a * q_local[u]))
                    / LN_2
            })
            .collect()
    }

    /// `sum_u w_u lb_u(x)` and its gradient.
    fn weighted_bound(&self, w: &[f64], x: &[f64], q_local: &[f64]) -> (f64, Vec<f64>) {
        let k = x.len();
        let (p, _) = self.partial_sums(x);
        let value = self.bound_rates(x, q_local).iter().zip(w).map(|(r, w)| r * w).sum();
        let mut grad = vec![0.0; k];
        for u in 0..k {
            let a = self.snr[u];
            let own = w[u] * a / ((1.0 + a * p[u]) * LN_2);
            let lin = w[u] * a / ((1.0 + a * q_local[u]) * LN_2);
            for (i, g) in grad.iter_mut().enumerate() {
                if self.pos[i] >= self.pos[u] {
                    *g += own;
                }
                if self.pos[i] > self.pos[u] {
                    *g -= lin;
                }
            }
        }
        (value, grad)
    }
}

fn average(blocks: &[Block], x: &[Vec<f64>]) -> Vec<f64> {
    let n = blocks.len() as f64;
    let mut avg = vec![0.0; x[0].len()];
    for (b, xb) in blocks.iter().zip(x) {
        for (a, r) in avg.iter_mut().zip(b.rates(xb)) {
            *a += r / n;
        }
    }
    avg
}

/// SCA with the IRS configuration of every block fixed. `init` holds
/// per-block, per-user powers in watts.
pub fn sca_solve(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    block_configs: &[usize],
    init: &[Vec<f64>],
    opts: &ScaOptions,
) -> Result<NomaFinite> {
    let users = alpha.users();
    let n_blocks = block_configs.len();
    if n_blocks == 0 || init.len() != n_blocks || init.iter().any(|p| p.len() != users) {
        return Err(Error::InvalidConfig("initial powers must cover every block and user".into()));
    }
    if table.users() != users || block_configs.iter().any(|&c| c >= table.configs()) {
        return Err(Error::InvalidConfig("block configurations do not match the gain table".into()));
    }
    for k in alpha.active() {
        if block_configs.iter().all(|&c| table.row(c)[k] <= 0.0) {
            return Err(Error::Infeasible(format!("user {k} has zero gain in every block")));
        }
    }
    let p_max = config.p_max;
    let blocks: Vec<Block> = block_configs.iter().map(|&c| Block::new(table.row(c), p_max)).collect();
    let mut x: Vec<Vec<f64>> = init
        .iter()
        .map(|p| {
            let mut v: Vec<f64> = p.iter().map(|w| w / p_max).collect();
            project_capped_simplex(&mut v, 1.0);
            v
        })
        .collect();
    let mut rate = alpha.common_rate(&average(&blocks, &x));
    let mut history = vec![rate];
    let scale = 1.0 / n_blocks as f64;
    let vertices: Vec<Vec<f64>> =
        (0..users).map(|k| (0..users).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect();
    let mut pools: Vec<Vec<Vec<f64>>> = (0..n_blocks).map(|_| Vec::new()).collect();

    for _ in 0..opts.max_iter {
        let q_local: Vec<Vec<f64>> = blocks.iter().zip(&x).map(|(b, xb)| b.partial_sums(xb).1).collect();
        for (pool, xb) in pools.iter_mut().zip(&x) {
            for v in std::iter::once(xb).chain(&vertices) {
                if !pool.contains(v) {
                    pool.push(v.clone());
                }
            }
        }
        let rows = vec![vec![ResourceRow { capacity: 1.0, equality: true }]; n_blocks];
        let mut master = ColumnMaster::new(alpha.alpha(), rows, scale)?;
        for (n, pool) in pools.iter().enumerate() {
            for xb in pool {
                master.add_column(Column { block: n, rates: blocks[n].bound_rates(xb, &q_local[n]), usage: vec![1.0] })?;
            }
        }
        let mut owner: Vec<(usize, usize)> =
            pools.iter().enumerate().flat_map(|(n, p)| (0..p.len()).map(move |j| (n, j))).collect();
        let mut solution = master.solve()?;
        for _ in 0..opts.max_column_rounds {
            let mut added = false;
            for n in 0..n_blocks {
                let w = &solution.user_duals;
                let objective = |v: &[f64]| blocks[n].weighted_bound(w, v, &q_local[n]);
                let projection = |v: &mut [f64]| project_capped_simplex(v, 1.0);
                let start = pools[n]
                    .iter()
                    .max_by(|a, b| objective(a).0.total_cmp(&objective(b).0))
                    .cloned()
                    .unwrap_or_else(|| vertices[0].clone());
                let spec = ConcaveProgramSpec { tol: 1e-13, max_iter: 5_000, ..ConcaveProgramSpec::new(users, &objective, &projection) };
                let best = concave_maximize(&spec, &start)?;
                let reduced = scale * best.value - solution.resource_duals[n][0];
                if reduced > opts.column_tol * solution.value.abs().max(1.0) {
                    master.add_column(Column {
                        block: n,
                        rates: blocks[n].bound_rates(&best.argmax, &q_local[n]),
                        usage: vec![1.0],
                    })?;
                    owner.push((n, pools[n].len()));
                    pools[n].push(best.argmax);
                    added = true;
                }
            }
            if !added {
                break;
            }
            solution = master.solve()?;
        }

        let mut mixed = vec![vec![0.0; users]; n_blocks];
        let mut kept: Vec<Vec<Vec<f64>>> = (0..n_blocks).map(|_| Vec::new()).collect();
        for (&(n, j), &w) in owner.iter().zip(&solution.weights) {
            if w > 0.0 {
                for (m, v) in mixed[n].iter_mut().zip(&pools[n][j]) {
                    *m += w * v;
                }
                if w > 1e-12 {
                    kept[n].push(pools[n][j].clone());
                }
            }
        }
        for m in mixed.iter_mut() {
            project_capped_simplex(m, 1.0);
        }
        pools = kept;
        let next = alpha.common_rate(&average(&blocks, &mixed));
        if !(next >= rate) {
            break;
        }
        let improvement = next - rate;
        x = mixed;
        rate = next;
        history.push(rate);
        if improvement <= opts.tol * rate.abs().max(1e-12) {
            break;
        }
    }

    let rates = average(&blocks, &x);
    Ok(NomaFinite {
        rate: alpha.common_rate(&rates),
        rates,
        powers: x.iter().map(|xb| xb.iter().map(|v| v * p_max).collect()).collect(),
        configs: block_configs.to_vec(),
        thetas: block_configs.iter().map(|&c| table.phase_config(c)).collect(),
        history,
    })
}

/// Finite-`N` inner bound built from an already solved unlimited-reconfiguration
/// point.
pub fn solve_noma_finite_from(
    optimal: &NomaInfinite,
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    n_blocks: usize,
    sca: &ScaOptions,
) -> Result<NomaFinite> {
    let atoms = build_theta_schedule(&optimal.schedule, n_blocks)?;
    let configs: Vec<usize> = atoms.iter().map(|&a| optimal.schedule.atoms[a].config).collect();
    let init: Vec<Vec<f64>> = atoms.iter().map(|&a| optimal.schedule.atoms[a].candidate.p.clone()).collect();
    sca_solve(alpha, table, config, &configs, &init, sca)
}

/// Finite-`N` inner bound: rounds the optimal schedule to `n_blocks` blocks
/// and refines the powers by SCA, starting from the atoms' powers.
pub fn solve_noma_finite(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    n_blocks: usize,
    opts: &NomaOptions,
    sca: &ScaOptions,
) -> Result<NomaFinite> {
    let optimal = solve_noma_infinite(alpha, table, config, opts)?;
    solve_noma_finite_from(&optimal, alpha, table, config, n_blocks, sca)
}
