//! OMA rate-region engine.
//!
//! Users get disjoint shares `omega_k` of each block's orthogonal resources,
//! and user `k` then achieves `omega_k log2(1 + H_k p_k / (omega_k sigma2))`.
//! With unlimited reconfiguration the boundary comes from time-sharing
//! single-user transmissions, each with that user's best configuration. With
//! `N` blocks the shares and powers are optimized jointly for fixed
//! per-block configurations.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, GainTable, PhaseConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::noma::apportion;
use crate::profile::RateProfile;
use crate::solvers::{Column, ColumnMaster, ResourceRow};

/// Shares below this are reported as zero.
pub const SHARE_SNAP: f64 = 1e-6;

/// Largest power density (per unit share, relative to `P_max`) a column may
/// use. It keeps pricing bounded when the power row is slack; shares below
/// `1e-6` are snapped to zero anyway.
const MAX_DENSITY: f64 = 1e6;

/// `omega log2(1 + H p / (omega sigma2))`, continuously extended by zero at
/// `omega = 0`.
pub fn oma_rate(gain: f64, p: f64, omega: f64, sigma2: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    omega * (gain * p / (omega * sigma2)).ln_1p() / LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseMode {
    Discrete,
    Continuous,
}

/// The configuration (or continuous phases) maximizing one user's gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPhase {
    /// Sub-surface phases in radians.
    pub phases: Vec<f64>,
    /// Discrete configuration and its ordinal; `None` in continuous mode.
    pub config: Option<(usize, PhaseConfig)>,
    /// Linear power gain `H_k`.
    pub gain: f64,
}

/// Continuous phases that co-phase every reflected path with the direct
/// link: `theta_m = arg(h_k) - arg(c_{m,k})`, giving gain
/// `(|h_k| + sum_m |c_{m,k}|)^2`.
pub fn continuous_best_phase(ch: &ChannelRealization, k: usize) -> BestPhase {
    let h = ch.direct()[k];
    let cascade = ch.cascade(k);
    let phases = cascade.iter().map(|c| h.arg() - c.arg()).collect();
    let gain = (h.norm() + cascade.iter().map(|c| c.norm()).sum::<f64>()).powi(2);
    BestPhase { phases, config: None, gain }
}

/// Best discrete configuration for user `k` from a gain table; ties go to
/// the lowest ordinal.
pub fn discrete_best_phase(table: &GainTable, config: &SystemConfig, k: usize) -> BestPhase {
    let (n, g) = table.best_for_user(k);
    let theta = table.phase_config(n);
    BestPhase { phases: theta.phases(), config: Some((n, theta)), gain: g * config.noise }
}

pub fn best_phase_for_user(
    k: usize,
    ch: &ChannelRealization,
    config: &SystemConfig,
    mode: PhaseMode,
) -> Result<BestPhase> {
    if k >= ch.users() {
        return Err(Error::Domain(format!("user {k} out of range")));
    }
    match mode {
        PhaseMode::Continuous => Ok(continuous_best_phase(ch, k)),
        PhaseMode::Discrete => Ok(discrete_best_phase(&GainTable::build(ch, config)?, config, k)),
    }
}

/// Single-user transmission of user `k` with its best configuration and the
/// full power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub user: usize,
    pub phase: BestPhase,
    /// `P_max` at position `user`, zero elsewhere.
    pub powers: Vec<f64>,
    /// One at position `user`, zero elsewhere.
    pub shares: Vec<f64>,
    /// `log2(1 + H_k^max P_max / sigma2)`.
    pub rate: f64,
}

impl GammaSolution {
    pub fn new(user: usize, users: usize, phase: BestPhase, config: &SystemConfig) -> Self {
        let mut powers = vec![0.0; users];
        powers[user] = config.p_max;
        let mut shares = vec![0.0; users];
        shares[user] = 1.0;
        let rate = oma_rate(phase.gain, config.p_max, 1.0, config.noise);
        Self { user, phase, powers, shares, rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmaInfinite {
    pub rate: f64,
    pub rates: Vec<f64>,
    pub atoms: Vec<GammaSolution>,
    pub tau: Vec<f64>,
    /// `1 / sum_k (alpha_k / r_k)`, the closed-form optimum of the LP.
    pub closed_form: f64,
    /// LP multipliers of the per-user rate rows (`alpha . lambda = 1`).
    pub duals: Vec<f64>,
}

/// Closed-form common rate of time-sharing single-user rates.
pub fn oma_closed_form(alpha: &RateProfile, single_user_rates: &[f64]) -> Result<f64> {
    let mut denom = 0.0;
    for k in alpha.active() {
        let r = single_user_rates[k];
        if !(r > 0.0) {
            return Err(Error::Infeasible(format!("user {k} cannot be served at a positive rate")));
        }
        denom += alpha.alpha()[k] / r;
    }
    Ok(1.0 / denom)
}

/// Time-shares the single-user solutions of the active users through the
/// LP `max R s.t. tau_k r_k >= alpha_k R, sum tau = 1`.
pub fn solve_oma_from_gammas(alpha: &RateProfile, gammas: Vec<GammaSolution>) -> Result<OmaInfinite> {
    let users = alpha.users();
    let mut single = vec![0.0; users];
    for g in &gammas {
        single[g.user] = g.rate;
    }
    let closed_form = oma_closed_form(alpha, &single)?;
    let mut master = ColumnMaster::new(alpha.alpha(), vec![vec![ResourceRow { capacity: 1.0, equality: true }]], 1.0)?;
    for g in &gammas {
        let mut rates = vec![0.0; users];
        rates[g.user] = g.rate;
        master.add_column(Column { block: 0, rates, usage: vec![1.0] })?;
    }
    let solution = master.solve()?;
    let mut atoms = Vec::new();
    let mut tau = Vec::new();
    for (g, &w) in gammas.into_iter().zip(&solution.weights) {
        if w > 1e-15 {
            atoms.push(g);
            tau.push(w);
        }
    }
    let total: f64 = tau.iter().sum();
    tau.iter_mut().for_each(|t| *t /= total);
    let mut rates = vec![0.0; users];
    for (g, t) in atoms.iter().zip(&tau) {
        rates[g.user] += t * g.rate;
    }
    Ok(OmaInfinite { rate: solution.value, rates, atoms, tau, closed_form, duals: solution.user_duals })
}

/// Optimal OMA common rate with unlimited reconfiguration and discrete
/// phases.
pub fn solve_oma_infinite(alpha: &RateProfile, table: &GainTable, config: &SystemConfig) -> Result<OmaInfinite> {
    if alpha.users() != table.users() {
        return Err(Error::InvalidConfig("profile and gain table disagree on the user count".into()));
    }
    let gammas = alpha
        .active()
        .into_iter()
        .map(|k| GammaSolution::new(k, alpha.users(), discrete_best_phase(table, config, k), config))
        .collect();
    solve_oma_from_gammas(alpha, gammas)
}

/// As [`solve_oma_infinite`] with continuous phases, an upper bound for
/// every phase resolution.
pub fn solve_oma_infinite_continuous(
    alpha: &RateProfile,
    ch: &ChannelRealization,
    config: &SystemConfig,
) -> Result<OmaInfinite> {
    if alpha.users() != ch.users() {
        return Err(Error::InvalidConfig("profile and channel disagree on the user count".into()));
    }
    let gammas = alpha
        .active()
        .into_iter()
        .map(|k| GammaSolution::new(k, alpha.users(), continuous_best_phase(ch, k), config))
        .collect();
    solve_oma_from_gammas(alpha, gammas)
}

/// Water-filling power density `(lambda / (delta ln 2) - sigma2 / H)^+` that
/// maximizes `lambda log2(1 + H t / sigma2) - delta t`.
pub fn water_fill_check(lambda: f64, delta: f64, gain: f64, sigma2: f64) -> f64 {
    if !(lambda > 0.0) || !(gain > 0.0) {
        return 0.0;
    }
    if !(delta > 0.0) {
        return f64::INFINITY;
    }
    (lambda / (delta * LN_2) - sigma2 / gain).max(0.0)
}

/// Per-block Lagrangian allocation found by scanning the power price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterFillStructure {
    pub delta: f64,
    /// User whose Lagrangian term is largest at `delta`.
    pub user: usize,
    pub powers: Vec<f64>,
    /// Relative gap between the selected user's power and `P_max`; near zero
    /// when a single user absorbs the whole budget at full share.
    pub residual: f64,
}

/// Scans the power price `delta` until the user that maximizes
/// `lambda_k log2(1 + H_k t_k / sigma2) - delta t_k` (with `t_k` water-filled)
/// uses exactly `P_max`. Powers of the unselected users are zero.
pub fn water_fill_structure(lambda: &[f64], gains: &[f64], sigma2: f64, p_max: f64) -> Result<WaterFillStructure> {
    if lambda.len() != gains.len() || lambda.is_empty() {
        return Err(Error::InvalidConfig("one dual and one gain per user are required".into()));
    }
    let served: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] > 0.0 && gains[k] > 0.0).collect();
    if served.is_empty() {
        return Err(Error::Domain("no user has both a positive dual and a positive gain".into()));
    }
    let select = |delta: f64| -> (usize, f64) {
        let mut best = (served[0], f64::NEG_INFINITY, 0.0);
        for &k in &served {
            let t = water_fill_check(lambda[k], delta, gains[k], sigma2);
            let value = lambda[k] * (gains[k] * t / sigma2).ln_1p() / LN_2 - delta * t;
            if value > best.1 {
                best = (k, value, t);
            }
        }
        (best.0, best.2)
    };
    // Price at which each user's level equals P_max brackets the scan.
    let exact: Vec<f64> = served.iter().map(|&k| lambda[k] / (LN_2 * (p_max + sigma2 / gains[k]))).collect();
    let mut lo = exact.iter().cloned().fold(f64::INFINITY, f64::min) * 0.5;
    let mut hi = exact.iter().cloned().fold(0.0, f64::max) * 2.0;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if select(mid).1 > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    // Prefer whichever bracket end lands closest to the budget.
    let (delta, (user, t)) = [lo, hi]
        .into_iter()
        .map(|d| (d, select(d)))
        .min_by(|a, b| (a.1 .1 - p_max).abs().total_cmp(&(b.1 .1 - p_max).abs()))
        .expect("two bracket ends");
    let mut powers = vec![0.0; lambda.len()];
    powers[user] = t;
    Ok(WaterFillStructure { delta, user, powers, residual: (t - p_max).abs() / p_max })
}

/// Shares and powers per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    /// `shares[n][k]`: fraction of block `n`'s resources given to user `k`.
    pub shares: Vec<Vec<f64>>,
    /// `powers[n][k]` in watts.
    pub powers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmaFinite {
    pub rate: f64,
    pub rates: Vec<f64>,
    pub allocation: ResourceAllocation,
    pub configs: Vec<usize>,
    pub thetas: Vec<PhaseConfig>,
    /// Certified upper bound of the resource-allocation optimum.
    pub upper_bound: f64,
}

/// Jointly optimal shares and powers for fixed per-block configurations.
///
/// The problem is convex. It is solved by column generation, where a column
/// is one user served on a full share of one block at power density `s`
/// (relative to `P_max`). Mixing columns of the same user and block with
/// weights `nu` yields share `sum nu` and power `sum nu s`. Because the rate
/// is concave in (share, power), the mixture's true rate is at least the
/// master value. Pricing a column is closed-form water-filling.
pub fn oma_resource_solve(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    block_configs: &[usize],
) -> Result<OmaFinite> {
    let users = alpha.users();
    let n_blocks = block_configs.len();
    if n_blocks == 0 || table.users() != users || block_configs.iter().any(|&c| c >= table.configs()) {
        return Err(Error::InvalidConfig("block configurations do not match the gain table".into()));
    }
    let active = alpha.active();
    for &k in &active {
        if block_configs.iter().all(|&c| table.row(c)[k] <= 0.0) {
            return Err(Error::Infeasible(format!("user {k} has zero gain in every block")));
        }
    }
    let snr = |n: usize, k: usize| table.row(block_configs[n])[k] * config.p_max;
    let rate_of = |n: usize, k: usize, s: f64| (snr(n, k) * s).ln_1p() / LN_2;
    let column = |n: usize, k: usize, s: f64| {
        let mut rates = vec![0.0; users];
        rates[k] = rate_of(n, k, s);
        Column { block: n, rates, usage: vec![1.0, s] }
    };
    let rows = vec![
        vec![ResourceRow { capacity: 1.0, equality: false }, ResourceRow { capacity: 1.0, equality: false }];
        n_blocks
    ];
    let scale = 1.0 / n_blocks as f64;
    let mut master = ColumnMaster::new(alpha.alpha(), rows, scale)?;
    let mut owners: Vec<(usize, usize, f64)> = Vec::new();
    for n in 0..n_blocks {
        for &k in &active {
            if snr(n, k) > 0.0 {
                master.add_column(column(n, k, 1.0))?;
                owners.push((n, k, 1.0));
            }
        }
    }
    let mut solution = master.solve()?;
    let mut upper = f64::INFINITY;
    for _ in 0..2_000 {
        let mut added = false;
        let mut slack = 0.0;
        for n in 0..n_blocks {
            let (share_price, power_price) = (solution.resource_duals[n][0], solution.resource_duals[n][1]);
            let mut block_best = 0.0f64;
            for &k in &active {
                let (a, lambda) = (snr(n, k), solution.user_duals[k]);
                if !(a > 0.0) || !(lambda > 0.0) {
                    continue;
                }
                let s = if power_price > 0.0 {
                    (scale * lambda / (power_price * LN_2) - 1.0 / a).clamp(0.0, MAX_DENSITY)
                } else {
                    MAX_DENSITY
                };
                let reduced = scale * lambda * rate_of(n, k, s) - power_price * s - share_price;
                block_best = block_best.max(reduced);
                if reduced > 1e-10 * solution.value.abs().max(1.0) {
                    master.add_column(column(n, k, s))?;
                    owners.push((n, k, s));
                    added = true;
                }
            }
            slack += block_best;
        }
        upper = upper.min(solution.value + slack);
        if !added {
            break;
        }
        solution = master.solve()?;
    }

    let mut shares = vec![vec![0.0; users]; n_blocks];
    let mut powers = vec![vec![0.0; users]; n_blocks];
    for (&(n, k, s), &w) in owners.iter().zip(&solution.weights) {
        shares[n][k] += w;
        powers[n][k] += w * s * config.p_max;
    }
    for (sh, pw) in shares.iter_mut().zip(powers.iter_mut()) {
        let used: f64 = sh.iter().sum();
        let spent: f64 = pw.iter().sum();
        for (s, p) in sh.iter_mut().zip(pw.iter_mut()) {
            if *s < SHARE_SNAP {
                *s = 0.0;
                *p = 0.0;
            }
            if used > 1.0 {
                *s /= used;
            }
            if spent > config.p_max {
                *p *= config.p_max / spent;
            }
        }
    }
    let mut rates = vec![0.0; users];
    for n in 0..n_blocks {
        for k in 0..users {
            let gain = table.row(block_configs[n])[k] * config.noise;
            rates[k] += scale * oma_rate(gain, powers[n][k], shares[n][k], config.noise);
        }
    }
    Ok(OmaFinite {
        rate: alpha.common_rate(&rates),
        rates,
        allocation: ResourceAllocation { shares, powers },
        configs: block_configs.to_vec(),
        thetas: block_configs.iter().map(|&c| table.phase_config(c)).collect(),
        upper_bound: upper,
    })
}

/// Block configurations realizing an unlimited-reconfiguration schedule over
/// `n_blocks` blocks.
pub fn oma_block_configs(optimal: &OmaInfinite, n_blocks: usize) -> Result<Vec<usize>> {
    if n_blocks == 0 {
        return Err(Error::InvalidConfig("at least one block is required".into()));
    }
    let counts = apportion(&optimal.tau, n_blocks);
    optimal
        .atoms
        .iter()
        .zip(counts)
        .flat_map(|(atom, c)| std::iter::repeat_n(atom, c))
        .map(|atom| {
            atom.phase
                .config
                .as_ref()
                .map(|(n, _)| *n)
                .ok_or_else(|| Error::InvalidConfig("finite-block OMA needs discrete phases".into()))
        })
        .collect()
}

/// Finite-`N` OMA inner bound: rounds the optimal schedule to `n_blocks`
/// blocks and then optimizes shares and powers jointly.
pub fn solve_oma_finite(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    n_blocks: usize,
) -> Result<OmaFinite> {
    let optimal = solve_oma_infinite(alpha, table, config)?;
    oma_resource_solve(alpha, table, config, &oma_block_configs(&optimal, n_blocks)?)
}
