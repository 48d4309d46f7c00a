//! Exhaustive finite-block references.
//!
//! Every assignment of a phase configuration to each of the `N` blocks is
//! tried (`L^(M N)` schedules), the residual power/resource problem is solved
//! for each, and the best schedule wins. Schedule `s` assigns configuration
//! digit `n` of `s` written in base `L^M` to block `n`, most significant
//! digit first, so the enumeration order is deterministic and a partial run
//! can be resumed by index.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{pow_u128, ChannelRealization, GainTable, SystemConfig};
use crate::error::{Error, Result};
use crate::noma::{sca_solve, ScaOptions};
use crate::oma::oma_resource_solve;
use crate::profile::RateProfile;

/// Progress is logged after this many schedules.
pub const PROGRESS_EVERY: u64 = 1 << 12;

/// Enumeration of per-block configuration assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEnumeration {
    configs: usize,
    blocks: usize,
    total: u64,
}

impl ScheduleEnumeration {
    /// Fails with [`Error::BudgetExceeded`] when `configs^blocks > budget`.
    pub fn new(configs: usize, blocks: usize, budget: u64) -> Result<Self> {
        if configs == 0 || blocks == 0 {
            return Err(Error::InvalidConfig("schedules need configurations and blocks".into()));
        }
        let required = pow_u128(configs as u128, blocks.min(u32::MAX as usize) as u32);
        if required > budget as u128 {
            return Err(Error::BudgetExceeded { required, budget });
        }
        Ok(Self { configs, blocks, total: required as u64 })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Configuration of every block under schedule `index`.
    pub fn schedule(&self, mut index: u64) -> Vec<usize> {
        let mut out = vec![0; self.blocks];
        for slot in out.iter_mut().rev() {
            *slot = (index % self.configs as u64) as usize;
            index /= self.configs as u64;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub rate: f64,
    pub rates: Vec<f64>,
    /// Winning configuration ordinal per block.
    pub configs: Vec<usize>,
    /// Winning schedule index.
    pub schedule: u64,
    /// Number of schedules evaluated.
    pub enumerated: u64,
    /// Schedules whose residual problem failed (e.g. a user unreachable).
    pub failures: u64,
}

/// Evaluates every schedule with `solve` and keeps the largest common rate,
/// breaking ties toward the lowest schedule index.
fn exhaustive<F>(enumeration: ScheduleEnumeration, label: &str, solve: F) -> Result<BaselineResult>
where
    F: Fn(&[usize]) -> Result<(f64, Vec<f64>)> + Sync,
{
    let done = AtomicU64::new(0);
    let failures = AtomicU64::new(0);
    let total = enumeration.total();
    let best = (0..total)
        .into_par_iter()
        .filter_map(|s| {
            let configs = enumeration.schedule(s);
            let out = match solve(&configs) {
                Ok((rate, rates)) => Some((s, rate, rates)),
                Err(Error::Infeasible(_)) => {
                    failures.fetch_add(1, Ordering::Relaxed);
                    None
                }
                Err(e) => {
                    log::warn!("{label} schedule {s} failed: {e}");
                    failures.fetch_add(1, Ordering::Relaxed);
                    None
                }
            };
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n % PROGRESS_EVERY == 0 {
                log::info!("{label}: {n}/{total} schedules");
            }
            out
        })
        .reduce_with(|a, b| match a.1.total_cmp(&b.1) {
            std::cmp::Ordering::Greater => a,
            std::cmp::Ordering::Less => b,
            std::cmp::Ordering::Equal => if a.0 <= b.0 { a } else { b },
        });
    let (schedule, rate, rates) =
        best.ok_or_else(|| Error::Infeasible(format!("no {label} schedule serves every active user")))?;
    Ok(BaselineResult {
        rate,
        rates,
        configs: enumeration.schedule(schedule),
        schedule,
        enumerated: done.into_inner(),
        failures: failures.into_inner(),
    })
}

fn prepare(alpha: &RateProfile, table: &GainTable, config: &SystemConfig, n_blocks: usize) -> Result<ScheduleEnumeration> {
    config.validate()?;
    if alpha.users() != table.users() {
        return Err(Error::InvalidConfig("profile and gain table disagree on the user count".into()));
    }
    ScheduleEnumeration::new(table.configs(), n_blocks, config.enumeration_budget)
}

/// Best SCA inner bound over all schedules, each started from an equal
/// power split.
pub fn baseline_noma_with_table(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    n_blocks: usize,
    sca: &ScaOptions,
) -> Result<BaselineResult> {
    let enumeration = prepare(alpha, table, config, n_blocks)?;
    let users = alpha.users();
    let init = vec![vec![config.p_max / users as f64; users]; n_blocks];
    exhaustive(enumeration, "NOMA baseline", |configs| {
        let r = sca_solve(alpha, table, config, configs, &init, sca)?;
        Ok((r.rate, r.rates))
    })
}

/// Globally optimal finite-block OMA point: the convex resource problem is
/// solved exactly for every schedule.
pub fn baseline_oma_with_table(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    n_blocks: usize,
) -> Result<BaselineResult> {
    let enumeration = prepare(alpha, table, config, n_blocks)?;
    exhaustive(enumeration, "OMA baseline", |configs| {
        let r = oma_resource_solve(alpha, table, config, configs)?;
        Ok((r.rate, r.rates))
    })
}

pub fn baseline_noma(
    alpha: &RateProfile,
    ch: &ChannelRealization,
    config: &SystemConfig,
    n_blocks: usize,
) -> Result<BaselineResult> {
    let table = GainTable::build(ch, config)?;
    baseline_noma_with_table(alpha, &table, config, n_blocks, &ScaOptions::default())
}

pub fn baseline_oma(
    alpha: &RateProfile,
    ch: &ChannelRealization,
    config: &SystemConfig,
    n_blocks: usize,
) -> Result<BaselineResult> {
    let table = GainTable::build(ch, config)?;
    baseline_oma_with_table(alpha, &table, config, n_blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, ChannelParams};
    use crate::oma::solve_oma_infinite;

    #[test]
    fn schedule_digits_are_most_significant_first() {
        let e = ScheduleEnumeration::new(3, 2, 100).unwrap();
        assert_eq!(e.total(), 9);
        assert_eq!(e.schedule(0), vec![0, 0]);
        assert_eq!(e.schedule(5), vec![1, 2]);
        assert_eq!(e.schedule(8), vec![2, 2]);
    }

    #[test]
    fn budget_is_enforced_with_required_count() {
        match ScheduleEnumeration::new(256, 3, 1 << 20) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 1 << 24);
                assert_eq!(budget, 1 << 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_subsurface_single_bit_enumerates_two() {
        let config = SystemConfig { elements: 4, subsurface_size: 4, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), 5).unwrap();
        let p = RateProfile::two_user(0.5).unwrap();
        assert_eq!(baseline_noma(&p, &ch, &config, 1).unwrap().enumerated, 2);
        assert_eq!(baseline_oma(&p, &ch, &config, 1).unwrap().enumerated, 2);
    }

    #[test]
    fn single_user_oma_picks_the_best_phase() {
        let config = SystemConfig { users: 1, elements: 4, subsurface_size: 4, ..SystemConfig::default() };
        let params = ChannelParams { user_x: vec![50.0], ..ChannelParams::default() };
        let ch = sample_channels(&config, &params, 9).unwrap();
        let table = GainTable::build(&ch, &config).unwrap();
        let p = RateProfile::new(&[1.0]).unwrap();
        let b = baseline_oma_with_table(&p, &table, &config, 1).unwrap();
        assert_eq!(b.configs[0], table.best_for_user(0).0);
        let inf = solve_oma_infinite(&p, &table, &config).unwrap();
        assert!((b.rate - inf.rate).abs() <= 1e-6 * inf.rate);
    }

    #[test]
    fn more_blocks_never_hurt_oma() {
        let config = SystemConfig { elements: 8, subsurface_size: 4, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), 21).unwrap();
        let p = RateProfile::two_user(0.3).unwrap();
        let one = baseline_oma(&p, &ch, &config, 1).unwrap();
        let two = baseline_oma(&p, &ch, &config, 2).unwrap();
        assert_eq!(two.enumerated, 16);
        assert!(two.rate >= one.rate - 1e-7 * one.rate);
    }
}
