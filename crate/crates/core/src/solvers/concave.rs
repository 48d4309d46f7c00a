//! Projected supergradient ascent for concave maximization over convex sets
//! with cheap exact projections (boxes, simplices).
//!
//! Steps use Armijo backtracking: the trial step is halved until the ascent
//! condition holds, which bisects toward the largest acceptable step, and it
//! doubles again after each success. Accepted iterates therefore never
//! decrease the objective.

use crate::error::{Error, Result};

/// Objective callback: returns `(f(x), supergradient at x)`.
pub type Objective<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;
/// Exact Euclidean projection onto the feasible set, in place.
pub type Projection<'a> = dyn Fn(&mut [f64]) + 'a;

pub struct ConcaveProgramSpec<'a> {
    pub dim: usize,
    pub objective: &'a Objective<'a>,
    pub projection: &'a Projection<'a>,
    /// Stop once an accepted step improves by less than `tol` relative.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl<'a> ConcaveProgramSpec<'a> {
    pub fn new(dim: usize, objective: &'a Objective<'a>, projection: &'a Projection<'a>) -> Self {
        Self { dim, objective, projection, tol: 1e-10, max_iter: 10_000, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveResult {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub iterations: usize,
    /// Objective after every accepted step, starting at the projected `x0`.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

fn evaluate(spec: &ConcaveProgramSpec<'_>, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (f, g) = (spec.objective)(x);
    if !f.is_finite() || g.len() != spec.dim || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("objective or supergradient at {x:?}")));
    }
    Ok((f, g))
}

/// Maximizes the concave objective of `spec` starting from `x0`.
pub fn concave_maximize(spec: &ConcaveProgramSpec<'_>, x0: &[f64]) -> Result<ConcaveResult> {
    if spec.dim != x0.len() {
        return Err(Error::InvalidConfig("start point has the wrong dimension".into()));
    }
    if !(spec.tol > 0.0) || !(spec.initial_step > 0.0) {
        return Err(Error::InvalidConfig("tolerance and step must be positive".into()));
    }
    let mut x = x0.to_vec();
    (spec.projection)(&mut x);
    let (mut f, mut g) = evaluate(spec, &x)?;
    let mut history = vec![f];
    let mut step = spec.initial_step;
    let mut iterations = 0;
    let mut y = vec![0.0; spec.dim];

    while iterations < spec.max_iter {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for ((yi, xi), gi) in y.iter_mut().zip(&x).zip(&g) {
                *yi = xi + step * gi;
            }
            (spec.projection)(&mut y);
            let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let moved = y.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved <= 1e-15 * scale {
                break;
            }
            let (fy, gy) = evaluate(spec, &y)?;
            let ascent: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fy >= f && fy >= f + ARMIJO * ascent {
                accepted = Some((fy, gy));
                break;
            }
            step *= 0.5;
        }
        let Some((fy, gy)) = accepted else { break };
        let improvement = fy - f;
        x.copy_from_slice(&y);
        f = fy;
        g = gy;
        history.push(f);
        step *= 2.0;
        if improvement <= spec.tol * f.abs().max(1.0) {
            break;
        }
    }
    Ok(ConcaveResult { value: f, argmax: x, iterations, history })
}

/// Projects onto `{x : lo <= x <= hi}`.
pub fn project_box(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Projects onto the simplex `{x >= 0, sum x = total}`.
pub fn project_simplex(x: &mut [f64], total: f64) {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - total) / (i + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - shift).max(0.0);
    }
}

/// Projects onto `{x >= 0, sum x <= cap}`.
pub fn project_capped_simplex(x: &mut [f64], cap: f64) {
    let clipped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped <= cap {
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
    } else {
        project_simplex(x, cap);
    }
}

/// Central finite-difference gradient with step `h`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_on_interval() {
        let obj = |x: &[f64]| (-(x[0] - 0.3).powi(2), vec![-2.0 * (x[0] - 0.3)]);
        let proj = |x: &mut [f64]| project_box(x, 0.0, 1.0);
        let spec = ConcaveProgramSpec::new(1, &obj, &proj);
        let r = concave_maximize(&spec, &[0.9]).unwrap();
        assert!((r.argmax[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn log_sum_splits_power_equally() {
        let obj = |x: &[f64]| {
            (x.iter().map(|v| (1.0 + v).ln()).sum(), x.iter().map(|v| 1.0 / (1.0 + v)).collect())
        };
        let proj = |x: &mut [f64]| project_capped_simplex(x, 3.0);
        let spec = ConcaveProgramSpec { tol: 1e-14, ..ConcaveProgramSpec::new(3, &obj, &proj) };
        let r = concave_maximize(&spec, &[3.0, 0.0, 0.0]).unwrap();
        for v in &r.argmax {
            assert!((v - 1.0).abs() < 1e-5, "{:?}", r.argmax);
        }
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn nonfinite_objective_aborts() {
        let obj = |x: &[f64]| (x[0].ln(), vec![1.0 / x[0]]);
        let proj = |x: &mut [f64]| project_box(x, -1.0, 1.0);
        let spec = ConcaveProgramSpec::new(1, &obj, &proj);
        assert!(matches!(concave_maximize(&spec, &[-0.5]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn simplex_projection_examples() {
        let mut x = [0.5, 0.5];
        project_simplex(&mut x, 1.0);
        assert_eq!(x, [0.5, 0.5]);
        let mut x = [2.0, 0.0, -1.0];
        project_simplex(&mut x, 1.0);
        assert_eq!(x, [1.0, 0.0, 0.0]);
        let mut x = [0.2, -0.3];
        project_capped_simplex(&mut x, 1.0);
        assert_eq!(x, [0.2, 0.0]);
    }

    proptest! {
        #[test]
        fn supergradient_matches_finite_differences(
            w in prop::collection::vec(0.1f64..5.0, 3),
            a in prop::collection::vec(0.1f64..50.0, 3),
            x in prop::collection::vec(0.05f64..2.0, 3),
        ) {
            // f(x) = sum w_i log(1 + a_i x_i) - 0.5 |x|^2
            let f = |x: &[f64]| {
                (0..3).map(|i| w[i] * (1.0 + a[i] * x[i]).ln()).sum::<f64>()
                    - 0.5 * x.iter().map(|v| v * v).sum::<f64>()
            };
            let grad: Vec<f64> =
                (0..3).map(|i| w[i] * a[i] / (1.0 + a[i] * x[i]) - x[i]).collect();
            let fd = finite_difference_gradient(f, &x, 1e-6);
            for (g, d) in grad.iter().zip(&fd) {
                prop_assert!((g - d).abs() <= 1e-5 * g.abs().max(1.0));
            }
        }

        #[test]
        fn accepted_iterates_never_decrease(
            t in prop::collection::vec(-1.0f64..2.0, 4),
            start in prop::collection::vec(-1.0f64..2.0, 4),
        ) {
            let obj = |x: &[f64]| {
                let f = -x.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>();
                let g = x.iter().zip(&t).map(|(a, b)| -(a - b).signum()).collect();
                (f, g)
            };
            let proj = |x: &mut [f64]| project_capped_simplex(x, 1.5);
            let spec = ConcaveProgramSpec::new(4, &obj, &proj);
            let r = concave_maximize(&spec, &start).unwrap();
            prop_assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn simplex_projection_is_feasible(x in prop::collection::vec(-3.0f64..3.0, 1..6)) {
            let mut y = x.clone();
            project_simplex(&mut y, 2.0);
            prop_assert!(y.iter().all(|v| *v >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        }
    }
}
