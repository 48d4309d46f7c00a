//! NOMA capacity-region engine.
//!
//! Users are superposed in every block and decoded by SIC in ascending order
//! of effective gain. With the cumulative powers `q_j` indexed by decoding
//! position (`q_1 = P_max >= q_2 >= ... >= q_K >= q_{K+1} = 0`), the rate of
//! the user decoded at position `j` is
//! `log2(1 + g_j q_j) - log2(1 + g_j q_{j+1})`, where `g_j` is the
//! noise-normalized gain. Weighted sums of these terms telescope, and every
//! module below relies on that form.

mod finite;
mod infinite;

pub use finite::{
    apportion, build_theta_schedule, sca_lower_bound, sca_solve, solve_noma_finite,
    solve_noma_finite_from, NomaFinite, ScaOptions,
};
pub use infinite::{solve_noma_infinite, NomaInfinite, NomaOptions};

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{decoding_order, DecodingOrder, GainTable, PhaseConfig, SystemConfig};
use crate::error::{Error, Result};

/// Largest user count supported by the candidate enumerator.
pub const MAX_USERS: usize = 6;

/// Default relative tolerance for membership in the near-optimal atom set.
pub const ATOM_TOL: f64 = 1e-6;

/// Full-power allocation along a decoding order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCandidate {
    /// Cumulative powers by decoding position; `q[0] = P_max`.
    pub q: Vec<f64>,
    /// Per-user powers indexed by user.
    pub p: Vec<f64>,
    /// `pattern[j]`: whether the chain link after position `j` is strict
    /// (`q_j > q_{j+1}`) rather than tight in the generating pattern.
    pub pattern: Vec<bool>,
}

impl PowerCandidate {
    /// Builds the candidate from cumulative powers in decoding order.
    pub fn from_cumulative(q: Vec<f64>, order: &DecodingOrder, pattern: Vec<bool>) -> Self {
        let k = q.len();
        let mut p = vec![0.0; k];
        for (j, &user) in order.sequence().iter().enumerate() {
            let next = if j + 1 < k { q[j + 1] } else { 0.0 };
            p[user] = (q[j] - next).max(0.0);
        }
        Self { q, p, pattern }
    }

    /// Puts the whole budget on user `k`.
    pub fn single_user(k: usize, p_max: f64, order: &DecodingOrder) -> Self {
        let pos = order.position(k);
        let users = order.sequence().len();
        let q = (0..users).map(|j| if j <= pos { p_max } else { 0.0 }).collect();
        let pattern = (0..users).map(|j| j == pos).collect();
        Self::from_cumulative(q, order, pattern)
    }
}

/// One Lagrangian maximizer: a phase configuration, its induced decoding
/// order and a power candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionAtom {
    /// Ordinal of `theta` in the lexicographic enumeration.
    pub config: usize,
    pub theta: PhaseConfig,
    pub candidate: PowerCandidate,
    pub order: DecodingOrder,
    pub rates: Vec<f64>,
    /// Weighted sum of `rates` under the duals it was found with.
    pub value: f64,
}

/// Atoms with durations summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSharingSchedule {
    pub atoms: Vec<SolutionAtom>,
    pub tau: Vec<f64>,
}

impl TimeSharingSchedule {
    pub fn new(atoms: Vec<SolutionAtom>, tau: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != tau.len() {
            return Err(Error::InvalidConfig("schedule needs one duration per atom".into()));
        }
        if tau.iter().any(|t| !(*t >= 0.0)) || ((tau.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("durations {tau:?} do not form a distribution")));
        }
        Ok(Self { atoms, tau })
    }

    /// Time-averaged rate of every user.
    pub fn average_rates(&self) -> Vec<f64> {
        let users = self.atoms[0].rates.len();
        let mut avg = vec![0.0; users];
        for (atom, t) in self.atoms.iter().zip(&self.tau) {
            for (a, r) in avg.iter_mut().zip(&atom.rates) {
                *a += t * r;
            }
        }
        avg
    }

    /// Runs `self` for a fraction `nu` of the time and `other` for the rest.
    pub fn mix(&self, other: &Self, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::Domain(format!("mixing weight {nu} outside [0, 1]")));
        }
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        let tau = self
            .tau
            .iter()
            .map(|t| nu * t)
            .chain(other.tau.iter().map(|t| (1.0 - nu) * t))
            .collect();
        Self::new(atoms, tau)
    }
}

/// SIC rate of user `k`: `log2(1 + H p_k / (H I_k + sigma2))`, where `I_k` is
/// the power of users decoded after `k`.
pub fn noma_rate(
    gain: f64,
    candidate: &PowerCandidate,
    order: &DecodingOrder,
    k: usize,
    sigma2: f64,
) -> f64 {
    let pos = order.position(k);
    let interference: f64 = order.sequence()[pos + 1..].iter().map(|&i| candidate.p[i]).sum();
    (gain * candidate.p[k] / (gain * interference + sigma2)).ln_1p() / LN_2
}

/// Per-user rates of cumulative powers `q` (decoding-position order) under
/// noise-normalized `gains`.
pub fn rates_from_cumulative(gains: &[f64], order: &DecodingOrder, q: &[f64]) -> Vec<f64> {
    let k = gains.len();
    let mut rates = vec![0.0; k];
    for (j, &user) in order.sequence().iter().enumerate() {
        let g = gains[user];
        let next = if j + 1 < k { q[j + 1] } else { 0.0 };
        rates[user] = ((g * q[j]).ln_1p() - (g * next).ln_1p()) / LN_2;
    }
    rates
}

/// Weighted sum rate `sum_k lambda_k R_k` in telescoped form, for
/// noise-normalized `gains` and cumulative powers `q` by decoding position.
pub fn phi_weighted(lambda: &[f64], gains: &[f64], q: &[f64]) -> f64 {
    let order = decoding_order(gains);
    let k = gains.len();
    let mut total = 0.0;
    for (j, &user) in order.sequence().iter().enumerate() {
        let g = gains[user];
        let next = if j + 1 < k { q[j + 1] } else { 0.0 };
        total += lambda[user] * ((g * q[j]).ln_1p() - (g * next).ln_1p());
    }
    total / LN_2
}

/// Stationary point in `[0, p_max]` of the reduced objective
/// `lambda_k log(1 + g_k q) - lambda_prev log(1 + g_prev q)`, whose gains
/// are noise-normalized. Returns `None` when `lambda_k == lambda_prev`:
/// the objective is then monotone and only the chain vertices matter.
pub fn stationary_q(lambda_prev: f64, lambda_k: f64, g_prev: f64, g_k: f64, p_max: f64) -> Option<f64> {
    stationary_q_unclipped(lambda_prev, lambda_k, g_prev, g_k).map(|q| q.clamp(0.0, p_max))
}

/// As [`stationary_q`] without the clip.
pub fn stationary_q_unclipped(lambda_prev: f64, lambda_k: f64, g_prev: f64, g_k: f64) -> Option<f64> {
    if lambda_k == lambda_prev || !(g_prev > 0.0) || !(g_k > 0.0) {
        return None;
    }
    let q = (lambda_prev / g_k - lambda_k / g_prev) / (lambda_k - lambda_prev);
    q.is_finite().then_some(q)
}

/// All candidate maximizers of `phi_weighted` over the monotone chain
/// `p_max = q_1 >= ... >= q_K >= 0`, one per tight/strict pattern of its `K`
/// links (the all-tight pattern is infeasible). A run of positions `a..=b`
/// tied together but free at both ends contributes
/// `lambda_b log(1 + g_b v) - lambda_{a-1} log(1 + g_{a-1} v)` to the
/// objective, so its value is the stationary point of that bracket.
pub fn enumerate_power_candidates(
    lambda: &[f64],
    gains: &[f64],
    p_max: f64,
) -> Result<(DecodingOrder, Vec<PowerCandidate>)> {
    let k = gains.len();
    if k == 0 || k > MAX_USERS || lambda.len() != k {
        return Err(Error::InvalidConfig(format!("candidate enumeration supports 1..={MAX_USERS} users")));
    }
    let order = decoding_order(gains);
    let g_pos: Vec<f64> = order.sequence().iter().map(|&u| gains[u]).collect();
    let l_pos: Vec<f64> = order.sequence().iter().map(|&u| lambda[u]).collect();
    let mut out = Vec::with_capacity((1 << k) - 1);
    'patterns: for pattern_bits in 1u32..(1 << k) {
        let strict: Vec<bool> = (0..k).map(|j| pattern_bits >> j & 1 == 1).collect();
        // Group id per position 0..=k (k is the terminal zero).
        let mut group = vec![0usize; k + 1];
        for j in 0..k {
            group[j + 1] = group[j] + strict[j] as usize;
        }
        let last = group[k];
        let mut q = vec![0.0; k];
        let mut j = 0;
        while j < k {
            let gid = group[j];
            let end = (j..k).take_while(|&i| group[i] == gid).last().unwrap_or(j);
            q[j..=end].fill(if gid == 0 {
                p_max
            } else if gid == last {
                0.0
            } else {
                match stationary_q(l_pos[j - 1], l_pos[end], g_pos[j - 1], g_pos[end], p_max) {
                    Some(v) => v,
                    None => continue 'patterns,
                }
            });
            j = end + 1;
        }
        for j in 1..k {
            q[j] = q[j].min(q[j - 1]);
        }
        out.push(PowerCandidate::from_cumulative(q, &order, strict));
    }
    Ok((order, out))
}

/// Result of evaluating the dual function at one `lambda`.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub value: f64,
    pub best: SolutionAtom,
    /// Atoms within the relative tolerance of `value`, `best` included.
    pub near_optimal: Vec<SolutionAtom>,
}

fn config_candidates(
    lambda: &[f64],
    table: &GainTable,
    n: usize,
    p_max: f64,
) -> Result<Vec<SolutionAtom>> {
    let gains = table.row(n);
    let (order, candidates) = enumerate_power_candidates(lambda, gains, p_max)?;
    Ok(candidates
        .into_iter()
        .map(|candidate| {
            let rates = rates_from_cumulative(gains, &order, &candidate.q);
            let value = lambda.iter().zip(&rates).map(|(l, r)| l * r).sum();
            SolutionAtom {
                config: n,
                theta: table.phase_config(n),
                candidate,
                order: order.clone(),
                rates,
                value,
            }
        })
        .collect())
}

fn config_max(lambda: &[f64], table: &GainTable, n: usize, p_max: f64) -> Result<f64> {
    let gains = table.row(n);
    let (order, candidates) = enumerate_power_candidates(lambda, gains, p_max)?;
    // Same arithmetic as the atom values so the threshold test is exact.
    Ok(candidates
        .iter()
        .map(|c| {
            let rates = rates_from_cumulative(gains, &order, &c.q);
            lambda.iter().zip(&rates).map(|(l, r)| l * r).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Dual function `max over (Theta, q) of sum_k lambda_k R_k` by exhaustive
/// search over the configurations in `table`, plus the atoms within
/// `atom_tol` (relative) of the maximum.
pub fn dual_eval(
    lambda: &[f64],
    table: &GainTable,
    config: &SystemConfig,
    atom_tol: f64,
) -> Result<DualEvaluation> {
    if lambda.len() != table.users() || lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Domain(format!("dual variables {lambda:?} must be non-negative per user")));
    }
    let p_max = config.p_max;
    let maxima: Vec<f64> = if table.configs() >= 64 {
        (0..table.configs())
            .into_par_iter()
            .map(|n| config_max(lambda, table, n, p_max))
            .collect::<Result<_>>()?
    } else {
        (0..table.configs()).map(|n| config_max(lambda, table, n, p_max)).collect::<Result<_>>()?
    };
    let value = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = value - atom_tol * value.abs().max(1e-300);
    let mut near_optimal = Vec::new();
    for (n, _) in maxima.iter().enumerate().filter(|(_, m)| **m >= threshold) {
        near_optimal.extend(
            config_candidates(lambda, table, n, p_max)?.into_iter().filter(|a| a.value >= threshold),
        );
    }
    let best = near_optimal
        .iter()
        .fold(None::<&SolutionAtom>, |acc, a| match acc {
            Some(b) if b.value >= a.value => Some(b),
            _ => Some(a),
        })
        .cloned()
        .ok_or_else(|| Error::Solver("dual evaluation produced no atom".into()))?;
    Ok(DualEvaluation { value: best.value.max(value), best, near_optimal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, ChannelParams};
    use crate::solvers::concave::finite_difference_gradient;
    use proptest::prelude::*;

    fn order_of(g: &[f64]) -> DecodingOrder {
        decoding_order(g)
    }

    #[test]
    fn single_user_rate_is_one_bit() {
        let order = order_of(&[1.0]);
        let c = PowerCandidate::from_cumulative(vec![1.0], &order, vec![true]);
        assert!((noma_rate(1.0, &c, &order, 0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let order = order_of(&[1.0, 2.0]);
        let c = PowerCandidate::from_cumulative(vec![1.0, 1.0], &order, vec![false, true]);
        assert_eq!(c.p[0], 0.0);
        assert_eq!(noma_rate(1.0, &c, &order, 0, 1.0), 0.0);
    }

    #[test]
    fn equal_gain_sum_rate_telescopes() {
        let h = 3.7;
        let order = order_of(&[h, h]);
        let c = PowerCandidate::from_cumulative(vec![2.0, 0.6], &order, vec![true, true]);
        let sum = noma_rate(h, &c, &order, 0, 0.5) + noma_rate(h, &c, &order, 1, 0.5);
        assert!((sum - (1.0 + h * 2.0 / 0.5).log2()).abs() < 1e-12);
    }

    #[test]
    fn phi_single_user_and_truncated_chain() {
        assert!((phi_weighted(&[0.7], &[3.0], &[2.0]) - 0.7 * 7f64.log2()).abs() < 1e-14);
        // q_2 = q_3 = 0: only the first-decoded user's term remains.
        let gains = [1.0, 5.0, 3.0];
        let phi = phi_weighted(&[0.2, 0.3, 0.5], &gains, &[4.0, 0.0, 0.0]);
        assert!((phi - 0.2 * 5f64.log2()).abs() < 1e-14);
    }

    #[test]
    fn equal_gain_stationary_point_clips_to_zero() {
        let q = stationary_q_unclipped(0.3, 0.7, 2.0, 2.0).unwrap();
        assert!((q + 0.5).abs() < 1e-15);
        assert_eq!(stationary_q(0.3, 0.7, 2.0, 2.0, 1.0), Some(0.0));
        assert_eq!(stationary_q(0.5, 0.5, 1.0, 2.0, 1.0), None);
    }

    #[test]
    fn stationary_point_zeroes_the_derivative() {
        // gains 1 and 10 (noise-normalized), duals favoring the weak user
        let (lp, lk, gp, gk) = (0.8, 0.3, 1.0, 10.0);
        let q = stationary_q_unclipped(lp, lk, gp, gk).unwrap();
        assert!(q > 0.0);
        let f = |x: &[f64]| lk * (1.0 + gk * x[0]).ln() - lp * (1.0 + gp * x[0]).ln();
        let d = finite_difference_gradient(f, &[q], 1e-6)[0];
        assert!(d.abs() < 1e-6, "{d}");
    }

    #[test]
    fn inner_bracket_variant_is_not_stationary() {
        // K = 3, merged group {2, 3}: the reduced objective depends only on
        // positions 1 and 3; the (2, 3) bracket misses its stationary point.
        let g = [1.0, 4.0, 20.0];
        let l = [0.6, 0.25, 0.15];
        let f = |x: &[f64]| phi_weighted(&l, &g, &[10.0, x[0], x[0]]);
        let q13 = stationary_q_unclipped(l[0], l[2], g[0], g[2]).unwrap();
        let q23 = stationary_q_unclipped(l[1], l[2], g[1], g[2]).unwrap();
        assert!(finite_difference_gradient(f, &[q13], 1e-6)[0].abs() < 1e-6);
        assert!(finite_difference_gradient(f, &[q23], 1e-6)[0].abs() > 1e-3);
    }

    #[test]
    fn candidate_counts() {
        let (_, two) = enumerate_power_candidates(&[0.6, 0.4], &[1.0, 3.0], 1.0).unwrap();
        assert_eq!(two.len(), 3);
        let q: Vec<Vec<f64>> = two.iter().map(|c| c.q.clone()).collect();
        assert!(q.contains(&vec![1.0, 0.0]));
        assert!(q.contains(&vec![1.0, 1.0]));
        let (_, three) =
            enumerate_power_candidates(&[0.5, 0.3, 0.2], &[1.0, 3.0, 7.0], 1.0).unwrap();
        assert_eq!(three.len(), 7);
        let (_, skipped) = enumerate_power_candidates(&[0.5, 0.5], &[1.0, 3.0], 1.0).unwrap();
        assert_eq!(skipped.len(), 2);
    }

    #[test]
    fn dual_eval_single_user_single_element() {
        let config = SystemConfig {
            users: 1,
            elements: 1,
            subsurface_size: 1,
            phase_bits: 1,
            p_max: 2.0,
            noise: 1.0,
            ..SystemConfig::default()
        };
        let table = GainTable::from_rows(vec![vec![3.0], vec![0.5]], 1, 2).unwrap();
        let eval = dual_eval(&[1.0], &table, &config, ATOM_TOL).unwrap();
        assert!((eval.value - 7f64.log2()).abs() < 1e-14);
        assert_eq!(eval.best.config, 0);
    }

    #[test]
    fn duplicate_gain_configs_are_both_near_optimal() {
        let config = SystemConfig { users: 2, p_max: 1.0, noise: 1.0, ..SystemConfig::default() };
        let table =
            GainTable::from_rows(vec![vec![2.0, 5.0], vec![1.0, 1.0], vec![2.0, 5.0], vec![0.1, 0.3]], 2, 2)
                .unwrap();
        let eval = dual_eval(&[0.5, 0.5], &table, &config, ATOM_TOL).unwrap();
        let configs: Vec<usize> = eval.near_optimal.iter().map(|a| a.config).collect();
        assert!(configs.contains(&0) && configs.contains(&2));
    }

    #[test]
    fn mixing_schedules_mixes_rates() {
        let config = SystemConfig { users: 2, elements: 8, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), 4).unwrap();
        let table = GainTable::build(&ch, &config).unwrap();
        let a = dual_eval(&[0.9, 0.1], &table, &config, ATOM_TOL).unwrap().best;
        let b = dual_eval(&[0.1, 0.9], &table, &config, ATOM_TOL).unwrap().best;
        let x = TimeSharingSchedule::new(vec![a.clone()], vec![1.0]).unwrap();
        let y = TimeSharingSchedule::new(vec![b.clone()], vec![1.0]).unwrap();
        let m = x.mix(&y, 0.25).unwrap().average_rates();
        for k in 0..2 {
            assert!((m[k] - (0.25 * a.rates[k] + 0.75 * b.rates[k])).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn phi_matches_direct_rates(
            lambda in prop::collection::vec(0.0f64..2.0, 3),
            gains in prop::collection::vec(0.01f64..100.0, 3),
            cuts in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            let p_max = 2.5;
            let order = decoding_order(&gains);
            let (a, b) = if cuts[0] >= cuts[1] { (cuts[0], cuts[1]) } else { (cuts[1], cuts[0]) };
            let q = vec![p_max, a * p_max, b * p_max];
            let cand = PowerCandidate::from_cumulative(q.clone(), &order, vec![true; 3]);
            let direct: f64 = (0..3)
                .map(|k| lambda[k] * noma_rate(gains[k], &cand, &order, k, 1.0))
                .sum();
            prop_assert!((phi_weighted(&lambda, &gains, &q) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }

        #[test]
        fn candidates_are_feasible_full_power(
            lambda in prop::collection::vec(0.01f64..2.0, 1..=4),
            seed_gains in prop::collection::vec(0.01f64..100.0, 4),
        ) {
            let k = lambda.len();
            let gains = &seed_gains[..k];
            let (order, cands) = enumerate_power_candidates(&lambda, gains, 1.5).unwrap();
            prop_assert!(cands.len() < 1 << k);
            for c in cands {
                prop_assert_eq!(c.q[0], 1.5);
                prop_assert!(c.q.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!((c.p.iter().sum::<f64>() - 1.5).abs() < 1e-12);
                prop_assert!(c.p.iter().all(|p| *p >= 0.0));
                prop_assert!(order.is_consistent_with(gains));
            }
        }
    }
}
