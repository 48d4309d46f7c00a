//! The simplex solver against brute-force vertex enumeration, plus weak and
//! strong duality on random bounded programs.

use irs_capacity::solvers::lp::{lp_solve, LinearProgram, LpStatus};
use proptest::prelude::*;

/// Best objective over all feasible intersections of two constraint lines,
/// treating `x >= 0` as constraints as well.
fn vertex_oracle(c: [f64; 2], rows: &[([f64; 2], f64)]) -> f64 {
    let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
    lines.push(([-1.0, 0.0], 0.0));
    lines.push(([0.0, -1.0], 0.0));
    let feasible = |x: [f64; 2]| lines.iter().all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-9);
    let mut best = f64::NEG_INFINITY;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let ((a, b), (d, e)) = (lines[i], lines[j]);
            let det = a[0] * d[1] - a[1] * d[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(b * d[1] - a[1] * e) / det, (a[0] * e - b * d[0]) / det];
            if feasible(x) {
                best = best.max(c[0] * x[0] + c[1] * x[1]);
            }
        }
    }
    best
}

fn row() -> impl Strategy<Value = ([f64; 2], f64)> {
    ((-2.0..3.0f64, -2.0..3.0f64), 0.1..5.0f64).prop_map(|((a, b), r)| ([a, b], r))
}

proptest! {
    #[test]
    fn simplex_matches_vertex_enumeration(
        c in (-1.0..2.0f64, -1.0..2.0f64),
        rows in prop::collection::vec(row(), 1..6),
    ) {
        // A bounding box keeps every program bounded; the origin is feasible.
        let mut all = rows.clone();
        all.push(([1.0, 0.0], 10.0));
        all.push(([0.0, 1.0], 10.0));
        let mut lp = LinearProgram::new(vec![c.0, c.1]);
        for (a, b) in &all {
            lp.add_ineq(a.to_vec(), *b);
        }
        let s = lp_solve(&lp).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        let oracle = vertex_oracle([c.0, c.1], &all);
        prop_assert!((s.value - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{} vs {}", s.value, oracle);

        // Dual feasibility (A^T y >= c, y >= 0) and a zero duality gap.
        let y = &s.ineq_duals;
        prop_assert!(y.iter().all(|&v| v >= -1e-9));
        for (j, cj) in [c.0, c.1].into_iter().enumerate() {
            let aty: f64 = all.iter().zip(y).map(|((a, _), v)| a[j] * v).sum();
            prop_assert!(aty >= cj - 1e-8);
        }
        let by: f64 = all.iter().zip(y).map(|((_, b), v)| b * v).sum();
        prop_assert!((by - s.value).abs() <= 1e-8 * (1.0 + s.value.abs()));
    }

    #[test]
    fn simplex_weight_program_matches_closed_form(w in prop::collection::vec(0.1..5.0f64, 1..8)) {
        // max sum w_j x_j subject to sum x_j = 1: the largest weight wins.
        let mut lp = LinearProgram::new(w.clone());
        lp.add_eq(vec![1.0; w.len()], 1.0);
        let s = lp_solve(&lp).unwrap();
        let best = w.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!((s.value - best).abs() <= 1e-12 * best);
        prop_assert!((s.eq_duals[0] - best).abs() <= 1e-9 * best);
    }
}
