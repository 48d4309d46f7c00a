//! Optimal boundary points when the IRS may be reconfigured arbitrarily
//! often: minimize the dual function over `{lambda >= 0, alpha.lambda = 1}`
//! with the ellipsoid method, then time-share the Lagrangian maximizers
//! through a linear program.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::channel::{decoding_order, GainTable, SystemConfig};
use crate::error::{Error, Result};
use crate::noma::{dual_eval, PowerCandidate, SolutionAtom, TimeSharingSchedule, ATOM_TOL};
use crate::profile::RateProfile;
use crate::solvers::{
    ellipsoid_minimize, Column, ColumnMaster, EllipsoidOptions, EllipsoidState, ResourceRow,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaOptions {
    pub ellipsoid: EllipsoidOptions,
    /// Relative tolerance for near-optimal atoms.
    pub atom_tol: f64,
    /// Relative gap between dual value and LP value at which refinement
    /// stops.
    pub refine_tol: f64,
    pub max_refinements: usize,
}

impl Default for NomaOptions {
    fn default() -> Self {
        Self {
            ellipsoid: EllipsoidOptions::default(),
            atom_tol: ATOM_TOL,
            refine_tol: 1e-9,
            max_refinements: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaInfinite {
    /// Common rate `R` achieved by the schedule.
    pub rate: f64,
    /// Time-averaged per-user rates of the schedule.
    pub rates: Vec<f64>,
    pub schedule: TimeSharingSchedule,
    /// Dual point returned by the ellipsoid method.
    pub dual: Vec<f64>,
    /// Dual value at `dual`.
    pub ellipsoid_value: f64,
    /// Smallest dual value seen; an upper bound on the optimum.
    pub dual_value: f64,
    /// Value of the time-sharing LP.
    pub lp_value: f64,
    pub ellipsoid_iterations: usize,
    pub converged: bool,
}

fn atom_key(atom: &SolutionAtom) -> (usize, Vec<i64>) {
    (atom.config, atom.rates.iter().map(|r| (r * 1e10).round() as i64).collect())
}

fn check_reachable(alpha: &RateProfile, table: &GainTable) -> Result<()> {
    for k in alpha.active() {
        if !(table.best_for_user(k).1 > 0.0) {
            return Err(Error::Infeasible(format!(
                "user {k} has a positive rate target but zero gain under every configuration"
            )));
        }
    }
    Ok(())
}

fn validate_dims(alpha: &RateProfile, table: &GainTable, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if alpha.users() != table.users() || table.users() != config.users {
        return Err(Error::InvalidConfig(format!(
            "profile has {} users, gain table {}, config {}",
            alpha.users(),
            table.users(),
            config.users
        )));
    }
    Ok(())
}

fn single_user(k: usize, alpha: &RateProfile, table: &GainTable, config: &SystemConfig) -> Result<NomaInfinite> {
    let (n, _) = table.best_for_user(k);
    let gains = table.row(n);
    let order = decoding_order(gains);
    let candidate = PowerCandidate::single_user(k, config.p_max, &order);
    let rates = super::rates_from_cumulative(gains, &order, &candidate.q);
    let mut lambda = vec![0.0; alpha.users()];
    lambda[k] = 1.0 / alpha.alpha()[k];
    let value = lambda[k] * rates[k];
    let atom = SolutionAtom { config: n, theta: table.phase_config(n), candidate, order, rates: rates.clone(), value };
    Ok(NomaInfinite {
        rate: alpha.common_rate(&rates),
        rates,
        schedule: TimeSharingSchedule::new(vec![atom], vec![1.0])?,
        dual: lambda,
        ellipsoid_value: value,
        dual_value: value,
        lp_value: value,
        ellipsoid_iterations: 0,
        converged: true,
    })
}

/// Optimal common rate for profile `alpha` with unlimited reconfiguration.
pub fn solve_noma_infinite(
    alpha: &RateProfile,
    table: &GainTable,
    config: &SystemConfig,
    opts: &NomaOptions,
) -> Result<NomaInfinite> {
    validate_dims(alpha, table, config)?;
    check_reachable(alpha, table)?;
    let active = alpha.active();
    if active.len() == 1 {
        return single_user(active[0], alpha, table, config);
    }
    let users = alpha.users();
    let d = active.len();
    let a: Vec<f64> = active.iter().map(|&k| alpha.alpha()[k]).collect();
    let min_a = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let center: Vec<f64> = a.iter().map(|ak| 1.0 / (d as f64 * ak)).collect();
    let init = EllipsoidState::ball(center, (d as f64).sqrt() / min_a)?;

    let expand = |reduced: &[f64]| {
        let mut full = vec![0.0; users];
        for (&k, v) in active.iter().zip(reduced) {
            full[k] = v.max(0.0);
        }
        full
    };
    let mut seen = HashSet::new();
    let mut pool: Vec<SolutionAtom> = Vec::new();
    let mut add_atom = |atom: &SolutionAtom, pool: &mut Vec<SolutionAtom>| {
        if seen.insert(atom_key(atom)) {
            pool.push(atom.clone());
        }
    };

    let ellipsoid = ellipsoid_minimize(
        |x| {
            let eval = dual_eval(&expand(x), table, config, 0.0)?;
            add_atom(&eval.best, &mut pool);
            Ok((eval.value, active.iter().map(|&k| eval.best.rates[k]).collect()))
        },
        (&a, 1.0),
        init,
        opts.ellipsoid,
    )?;
    let lambda_star = expand(&ellipsoid.argmin);
    let at_star = dual_eval(&lambda_star, table, config, opts.atom_tol)?;
    let mut dual_value = ellipsoid.value.min(at_star.value);
    for atom in &at_star.near_optimal {
        add_atom(atom, &mut pool);
    }

    let block = vec![vec![ResourceRow { capacity: 1.0, equality: true }]];
    let mut master = ColumnMaster::new(alpha.alpha(), block, 1.0)?;
    for atom in &pool {
        master.add_column(Column { block: 0, rates: atom.rates.clone(), usage: vec![1.0] })?;
    }
    let mut solution = master.solve()?;
    for _ in 0..opts.max_refinements {
        let eval = dual_eval(&solution.user_duals, table, config, opts.atom_tol)?;
        dual_value = dual_value.min(eval.value);
        if eval.value <= solution.value + opts.refine_tol * solution.value.abs().max(1.0) {
            break;
        }
        let before = pool.len();
        for atom in &eval.near_optimal {
            add_atom(atom, &mut pool);
        }
        if pool.len() == before {
            break;
        }
        for atom in &pool[before..] {
            master.add_column(Column { block: 0, rates: atom.rates.clone(), usage: vec![1.0] })?;
        }
        solution = master.solve()?;
    }

    let mut atoms = Vec::new();
    let mut tau = Vec::new();
    for (atom, &w) in pool.iter().zip(&solution.weights) {
        if w > 1e-12 {
            atoms.push(atom.clone());
            tau.push(w);
        }
    }
    let total: f64 = tau.iter().sum();
    tau.iter_mut().for_each(|t| *t /= total);
    let schedule = TimeSharingSchedule::new(atoms, tau)?;
    let rates = schedule.average_rates();
    Ok(NomaInfinite {
        rate: alpha.common_rate(&rates),
        rates,
        schedule,
        dual: lambda_star,
        ellipsoid_value: ellipsoid.value,
        dual_value,
        lp_value: solution.value,
        ellipsoid_iterations: ellipsoid.iterations,
        converged: ellipsoid.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, ChannelParams};

    fn instance(seed: u64, elements: usize) -> (GainTable, SystemConfig) {
        let config = SystemConfig { elements, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), seed).unwrap();
        (GainTable::build(&ch, &config).unwrap(), config)
    }

    #[test]
    fn single_user_profile_short_circuits() {
        let (table, config) = instance(1, 8);
        let r = solve_noma_infinite(&RateProfile::new(&[1.0, 0.0]).unwrap(), &table, &config, &NomaOptions::default())
            .unwrap();
        let best = table.best_for_user(0).1;
        assert!((r.rate - (1.0 + best * config.p_max).log2()).abs() < 1e-12);
        assert_eq!(r.schedule.atoms.len(), 1);
        assert_eq!(r.schedule.tau, vec![1.0]);
    }

    #[test]
    fn exclusive_atoms_are_shared_equally() {
        // Two configurations, each serving one user only.
        let config = SystemConfig { users: 2, elements: 4, subsurface_size: 4, p_max: 1.0, noise: 1.0, ..SystemConfig::default() };
        let table = GainTable::from_rows(vec![vec![3.0, 0.0], vec![0.0, 3.0]], 1, 2).unwrap();
        let r = solve_noma_infinite(&RateProfile::two_user(0.5).unwrap(), &table, &config, &NomaOptions::default())
            .unwrap();
        assert!((r.rate - 2.0).abs() < 1e-9, "{}", r.rate);
        assert_eq!(r.schedule.tau.len(), 2);
        for t in &r.schedule.tau {
            assert!((t - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn lp_matches_dual_value() {
        let (table, config) = instance(3, 8);
        let r = solve_noma_infinite(&RateProfile::two_user(0.5).unwrap(), &table, &config, &NomaOptions::default())
            .unwrap();
        assert!(((r.lp_value - r.ellipsoid_value) / r.lp_value).abs() <= 1e-3);
        assert!(r.lp_value <= r.dual_value * (1.0 + 1e-9));
        for (k, a) in [0.5, 0.5].iter().enumerate() {
            assert!(r.rates[k] >= a * r.rate - 1e-6);
        }
    }

    #[test]
    fn unreachable_user_is_infeasible() {
        let config = SystemConfig { users: 2, elements: 4, subsurface_size: 4, p_max: 1.0, noise: 1.0, ..SystemConfig::default() };
        let table = GainTable::from_rows(vec![vec![3.0, 0.0], vec![2.0, 0.0]], 1, 2).unwrap();
        let err = solve_noma_infinite(&RateProfile::two_user(0.5).unwrap(), &table, &config, &NomaOptions::default());
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }
}
