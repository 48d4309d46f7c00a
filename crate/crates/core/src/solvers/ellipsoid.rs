//! Deep-cut ellipsoid method for minimizing a convex function of the dual
//! variables over `{lambda >= 0, a.lambda = b}`.
//!
//! The ellipsoid `{x : (x - c)^T A^{-1} (x - c) <= 1}` is stored as
//! `A = exp(log_scale) * S` with `S` normalized to unit largest diagonal, so
//! long runs shrink the scale instead of driving the entries to underflow.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    center: Vec<f64>,
    shape: Vec<f64>,
    log_scale: f64,
    iterations: usize,
}

/// Outcome of a single cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cut {
    Applied,
    /// The half-space misses the ellipsoid; the state is left unchanged.
    Empty,
}

impl EllipsoidState {
    /// Ellipsoid with the given center and shape matrix, which must be
    /// symmetric positive definite.
    pub fn new(center: Vec<f64>, shape: Vec<Vec<f64>>) -> Result<Self> {
        let d = center.len();
        if d == 0 || shape.len() != d || shape.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidConfig("ellipsoid dimensions are inconsistent".into()));
        }
        if center.iter().chain(shape.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ellipsoid data".into()));
        }
        let mut flat: Vec<f64> = shape.concat();
        for i in 0..d {
            for j in 0..i {
                if (flat[i * d + j] - flat[j * d + i]).abs() > 1e-12 * flat[i * d + i].abs().max(1.0) {
                    return Err(Error::InvalidConfig("ellipsoid shape is not symmetric".into()));
                }
            }
        }
        if cholesky(&flat, d).is_none() {
            return Err(Error::InvalidConfig("ellipsoid shape is not positive definite".into()));
        }
        let m = (0..d).map(|i| flat[i * d + i]).fold(0.0, f64::max);
        flat.iter_mut().for_each(|v| *v /= m);
        Ok(Self { center, shape: flat, log_scale: m.ln(), iterations: 0 })
    }

    /// Ball of radius `radius` around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig("ellipsoid radius must be positive".into()));
        }
        let d = center.len();
        let shape = (0..d)
            .map(|i| (0..d).map(|j| if i == j { radius * radius } else { 0.0 }).collect())
            .collect();
        Self::new(center, shape)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Full shape matrix `A`.
    pub fn shape_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let s = self.log_scale.exp();
        (0..d).map(|i| (0..d).map(|j| s * self.shape[i * d + j]).collect()).collect()
    }

    /// Logarithm of the volume up to the unit-ball constant,
    /// `0.5 ln det A`.
    pub fn volume_proxy(&self) -> f64 {
        let d = self.dim();
        let logdet = cholesky(&self.shape, d)
            .map(|l| (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum::<f64>())
            .unwrap_or(f64::NEG_INFINITY);
        0.5 * (d as f64 * self.log_scale + logdet)
    }

    pub fn is_positive_definite(&self) -> bool {
        cholesky(&self.shape, self.dim()).is_some()
    }

    fn shape_times(&self, g: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.shape[i * d + j] * g[j]).sum()).collect()
    }

    /// `sqrt(g^T A g)`: the largest value of `g.(x - c)` over the ellipsoid.
    pub fn support(&self, g: &[f64]) -> f64 {
        let sg = self.shape_times(g);
        let q: f64 = g.iter().zip(&sg).map(|(a, b)| a * b).sum();
        (q.max(0.0) * self.log_scale.exp()).sqrt()
    }

    /// Keeps the part of the ellipsoid where `g.(x - c) <= -depth` and
    /// replaces the ellipsoid by the minimum-volume one containing it.
    pub fn cut(&mut self, g: &[f64], depth: f64) -> Cut {
        let width = self.support(g);
        if !(width > 0.0) || !width.is_finite() {
            return Cut::Empty;
        }
        self.cut_relative(g, depth.max(0.0) / width)
    }

    /// Cut with depth given as a fraction `alpha` of the support width
    /// `sqrt(g^T A g)`, which stays meaningful after the scale underflows.
    pub fn cut_relative(&mut self, g: &[f64], alpha: f64) -> Cut {
        let d = self.dim();
        let sg = self.shape_times(g);
        let gsg: f64 = g.iter().zip(&sg).map(|(a, b)| a * b).sum();
        if !(gsg > 0.0) || !gsg.is_finite() || !(alpha < 1.0) {
            return Cut::Empty;
        }
        let alpha = alpha.max(0.0);
        let half = (self.log_scale * 0.5).exp();
        self.iterations += 1;
        if d == 1 {
            // Interval of half-width r; keep the fraction (1 - alpha) / 2.
            let r = half * self.shape[0].sqrt();
            let shift = 0.5 * (1.0 + alpha) * r * g[0].signum();
            self.center[0] -= shift;
            self.log_scale += 2.0 * (0.5 * (1.0 - alpha)).ln() + self.shape[0].ln();
            self.shape[0] = 1.0;
            return Cut::Applied;
        }
        let df = d as f64;
        let tau = (1.0 + df * alpha) / (df + 1.0);
        let sigma = 2.0 * (1.0 + df * alpha) / ((df + 1.0) * (1.0 + alpha));
        let delta = df * df * (1.0 - alpha * alpha) / (df * df - 1.0);
        let step = half / gsg.sqrt();
        for (c, b) in self.center.iter_mut().zip(&sg) {
            *c -= tau * step * b;
        }
        for i in 0..d {
            for j in 0..=i {
                let v = 0.5 * (self.shape[i * d + j] + self.shape[j * d + i])
                    - sigma * sg[i] * sg[j] / gsg;
                self.shape[i * d + j] = v;
                self.shape[j * d + i] = v;
            }
        }
        let m = (0..d).map(|i| self.shape[i * d + i]).fold(0.0, f64::max);
        if m > 0.0 {
            self.shape.iter_mut().for_each(|v| *v /= m);
            self.log_scale += delta.ln() + m.ln();
        }
        Cut::Applied
    }
}

/// Lower-triangular Cholesky factor of a row-major `d x d` matrix, or `None`
/// if the matrix is not positive definite.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    /// Relative optimality gap at which to stop.
    pub eps: f64,
    /// Iteration cap; `None` means `ceil(10 d^2 / eps)`.
    pub max_iter: Option<usize>,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self { eps: 1e-4, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidResult {
    /// Best evaluated point.
    pub argmin: Vec<f64>,
    pub value: f64,
    /// Certified lower bound on the minimum.
    pub lower_bound: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit or the ellipsoid degenerated
    /// before the gap closed.
    pub converged: bool,
    /// Volume proxy (in hyperplane coordinates) after every applied cut.
    pub volume_trace: Vec<f64>,
}

/// Orthonormal basis of the complement of `a`, as `d - 1` vectors.
fn hyperplane_basis(a: &[f64]) -> Vec<Vec<f64>> {
    let d = a.len();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![a.iter().map(|v| v / norm).collect()];
    // Gram-Schmidt over the unit vectors, most orthogonal to `a` first.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()));
    for i in order {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for _ in 0..2 {
            for u in &basis {
                let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Minimizes a convex function over `{x >= 0, a.x = b}`.
///
/// `oracle(x)` returns the value and a subgradient at `x`. The search runs in
/// orthonormal coordinates of the hyperplane `a.x = b`, and `init` is
/// projected onto it. A center with a negative coordinate gets a deep
/// feasibility cut. Otherwise the oracle is called, and the cut uses the
/// subgradient restricted to the hyperplane. The run stops once the best
/// value is within `eps` (relative) of the certified lower bound
/// `f(c) - max_{x in E} g.(x - c)`.
pub fn ellipsoid_minimize<F>(
    mut oracle: F,
    equality: (&[f64], f64),
    init: EllipsoidState,
    opts: EllipsoidOptions,
) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (a, b) = equality;
    let d = init.dim();
    if a.len() != d {
        return Err(Error::InvalidConfig("equality has the wrong dimension".into()));
    }
    let aa: f64 = a.iter().map(|v| v * v).sum();
    if !(aa > 0.0) || !aa.is_finite() {
        return Err(Error::InvalidConfig("equality normal must be nonzero".into()));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidConfig("ellipsoid tolerance must be positive".into()));
    }
    let max_iter = opts
        .max_iter
        .unwrap_or_else(|| (10.0 * (d * d) as f64 / opts.eps).ceil() as usize);
    let origin: Vec<f64> = a.iter().map(|v| b * v / aa).collect();
    let basis = hyperplane_basis(a);
    let lift = |y: &[f64]| -> Vec<f64> {
        let mut x = origin.clone();
        for (u, yi) in basis.iter().zip(y) {
            x.iter_mut().zip(u).for_each(|(xv, uv)| *xv += yi * uv);
        }
        x
    };
    let restrict = |g: &[f64]| -> Vec<f64> {
        basis.iter().map(|u| u.iter().zip(g).map(|(x, y)| x * y).sum()).collect()
    };

    if basis.is_empty() {
        // The hyperplane is a single point.
        let x = origin.clone();
        if x.iter().any(|v| *v < 0.0) {
            return Err(Error::Infeasible("the constraint set is empty".into()));
        }
        let (f, _) = oracle(&x)?;
        if !f.is_finite() {
            return Err(Error::NonFinite("ellipsoid oracle output".into()));
        }
        return Ok(EllipsoidResult {
            argmin: x,
            value: f,
            lower_bound: f,
            iterations: 1,
            converged: true,
            volume_trace: vec![],
        });
    }

    let m = basis.len();
    let full = init.shape_matrix();
    let projected: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut s = 0.0;
                    for p in 0..d {
                        for q in 0..d {
                            s += basis[i][p] * full[p][q] * basis[j][q];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let shift: Vec<f64> = init.center().iter().zip(&origin).map(|(c, o)| c - o).collect();
    let mut state = EllipsoidState::new(restrict(&shift), projected)?;

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut trace = vec![state.volume_proxy()];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let c = lift(state.center());
        let (g, depth) = if let Some((k, &v)) = c
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < 0.0)
            .min_by(|x, y| x.1.total_cmp(y.1))
        {
            let mut e = vec![0.0; d];
            e[k] = -1.0;
            (restrict(&e), -v)
        } else {
            let (f, sg) = oracle(&c)?;
            if !f.is_finite() || sg.len() != d || sg.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ellipsoid oracle output".into()));
            }
            if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
                best = Some((c.clone(), f));
            }
            let f_best = best.as_ref().map(|b| b.1).unwrap_or(f);
            let gy = restrict(&sg);
            lower = lower.max(f - state.support(&gy));
            if f_best - lower <= opts.eps * f_best.abs().max(1e-12) {
                converged = true;
                break;
            }
            (gy, f - f_best)
        };
        match state.cut(&g, depth) {
            Cut::Applied => trace.push(state.volume_proxy()),
            Cut::Empty => break,
        }
        if !state.center().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ellipsoid center".into()));
        }
    }

    let (argmin, value) = best.ok_or_else(|| {
        Error::Solver("ellipsoid method never reached a feasible center".into())
    })?;
    if !converged {
        log::warn!(
            "ellipsoid stopped after {iterations} iterations with gap {:.3e}",
            value - lower
        );
    }
    Ok(EllipsoidResult { argmin, value, lower_bound: lower, iterations, converged, volume_trace: trace })
}
