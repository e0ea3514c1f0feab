//! Box-bounded Levenberg–Marquardt on weighted residual vectors, with multi-start.
//!
//! Residuals are supplied already multiplied by √weight, so the objective is `Σ r²`.
//! Jacobians are forward differences; bounds are enforced by projecting every trial point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Stopping rules and finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative change of `Σ r²` below which an accepted step ends the run.
    pub ftol: f64,
    /// Bound on the scaled gradient (cosine between residual and each Jacobian column).
    pub gtol: f64,
    /// Relative step size below which the run ends.
    pub xtol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            max_iterations: 500,
            ftol: 1e-10,
            gtol: 1e-10,
            xtol: 1e-12,
            fd_step: 1e-7,
        }
    }
}

/// Parameter box and typical magnitudes (used for finite-difference steps).
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != scale.len() {
            return invalid("bounds have inconsistent lengths");
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return invalid("every lower bound must lie below its upper bound");
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return invalid("parameter scales must be positive");
        }
        Ok(Bounds {
            lower,
            upper,
            scale,
        })
    }

    pub fn unbounded(scale: Vec<f64>) -> Self {
        let n = scale.len();
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Outcome of one Levenberg–Marquardt run.
#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `Σ r²` at `x`.
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest scaled gradient component, with components blocked by an active bound removed.
    pub gradient_norm: f64,
}

/// Forward-difference Jacobian; steps back from an upper bound.
pub fn jacobian<F>(f: &mut F, x: &[f64], r0: &[f64], bounds: &Bounds, rel_step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let mut h = rel_step * x[j].abs().max(bounds.scale[j]);
        if x[j] + h > bounds.upper[j] {
            h = -h;
        }
        xp[j] = x[j] + h;
        let h_eff = xp[j] - x[j];
        let r = f(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (r[i] - r0[i]) / h_eff;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

fn scaled_gradient(jac: &DMatrix<f64>, r: &[f64], x: &[f64], bounds: &Bounds) -> f64 {
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rn == 0.0 {
        return 0.0;
    }
    let rv = DVector::from_column_slice(r);
    let g = jac.transpose() * &rv;
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let blocked = (x[j] <= bounds.lower[j] && g[j] > 0.0) || (x[j] >= bounds.upper[j] && g[j] < 0.0);
        let cn = jac.column(j).norm();
        if blocked || cn == 0.0 {
            continue;
        }
        worst = worst.max(g[j].abs() / (cn * rn));
    }
    worst
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `Σ r(x)²` from `x0` inside `bounds`.
///
/// A residual evaluation that fails at a trial point rejects that step; a failure at `x0` is
/// returned.
pub fn levenberg_marquardt<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &LsqOptions) -> Result<LsqSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if x0.len() != bounds.len() {
        return invalid("start point and bounds differ in length");
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = f(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return invalid("residuals are not finite at the start point");
    }
    let mut cost = sum_sq(&r);
    let mut jac = jacobian(&mut f, &x, &r, bounds, opts.fd_step)?;
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let gnorm = scaled_gradient(&jac, &r, &x, bounds);
        if gnorm <= opts.gtol {
            converged = true;
            break;
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..n).map(|j| a[(j, j)].max(1e-300)).collect();
        if mu < 0.0 {
            mu = 1e-3;
        }
        // Parameters pinned at a bound with the descent direction pointing outward stay put.
        let free: Vec<usize> = (0..n)
            .filter(|&j| !((x[j] <= bounds.lower[j] && g[j] > 0.0) || (x[j] >= bounds.upper[j] && g[j] < 0.0)))
            .collect();
        let k = free.len();
        let mut lhs = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (p, &i) in free.iter().enumerate() {
            rhs[p] = -g[i];
            for (q, &j) in free.iter().enumerate() {
                lhs[(p, q)] = a[(i, j)];
            }
            lhs[(p, p)] += mu * diag[i];
        }
        let step = match lhs.cholesky() {
            Some(ch) => {
                let sub = ch.solve(&rhs);
                let mut full = DVector::zeros(n);
                for (p, &i) in free.iter().enumerate() {
                    full[i] = sub[p];
                }
                full
            }
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        bounds.project(&mut trial);
        let delta = DVector::from_iterator(n, trial.iter().zip(&x).map(|(t, v)| t - v));
        let small = delta
            .iter()
            .zip(&x)
            .zip(&bounds.scale)
            .all(|((d, v), s)| d.abs() <= opts.xtol * (v.abs() + s));
        if small {
            converged = true;
            break;
        }
        // Predicted decrease of Σ r² for the linearized model along the projected step.
        let predicted = -(2.0 * g.dot(&delta) + delta.dot(&(&a * &delta)));
        let accepted = match f(&trial) {
            Ok(rt) if rt.iter().all(|v| v.is_finite()) => {
                let ct = sum_sq(&rt);
                let rho = if predicted > 0.0 { (cost - ct) / predicted } else { -1.0 };
                if ct < cost && rho > 0.0 {
                    let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                    x = trial;
                    r = rt;
                    cost = ct;
                    jac = jacobian(&mut f, &x, &r, bounds, opts.fd_step)?;
                    mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    nu = 2.0;
                    Some(rel)
                } else {
                    None
                }
            }
            _ => None,
        };
        match accepted {
            Some(rel) if rel < opts.ftol => {
                converged = true;
                break;
            }
            Some(_) => {}
            None => {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e40 {
                    // The step collapsed without reducing the cost: a minimum to within
                    // finite-difference resolution.
                    converged = true;
                    break;
                }
            }
        }
    }
    let gradient_norm = scaled_gradient(&jac, &r, &x, bounds);
    Ok(LsqSolution {
        x,
        residuals: r,
        cost,
        jacobian: jac,
        iterations,
        converged,
        gradient_norm,
    })
}

/// Best converged solution over several start points.
///
/// Start points whose residuals cannot be evaluated are skipped.
pub fn multistart<F>(mut f: F, starts: &[Vec<f64>], bounds: &Bounds, opts: &LsqOptions) -> Result<(LsqSolution, usize)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if starts.is_empty() {
        return invalid("at least one start point is required");
    }
    let mut best: Option<LsqSolution> = None;
    let mut total_iterations = 0;
    let mut last_err = None;
    for x0 in starts {
        match levenberg_marquardt(&mut f, x0, bounds, opts) {
            Ok(sol) => {
                total_iterations += sol.iterations;
                if sol.converged && best.as_ref().is_none_or(|b| sol.cost < b.cost) {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(sol) => Ok((sol, total_iterations)),
        None => match last_err {
            Some(e) if total_iterations == 0 => Err(e),
            _ => Err(Error::NonConvergence {
                iterations: opts.max_iterations,
                starts: starts.len(),
            }),
        },
    }
}

/// `(JᵀJ)⁻¹`, falling back to a pseudo-inverse when the normal matrix is singular.
pub fn covariance(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let a = jac.transpose() * jac;
    if let Some(inv) = a.clone().try_inverse() {
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    let n = a.nrows();
    a.pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y).collect())
        };
        let b = Bounds::unbounded(vec![1.0, 1.0, 1.0]);
        let sol = levenberg_marquardt(f, &[1.0, 0.5, 0.0], &b, &LsqOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 2.5).abs() < 1e-6);
        assert!((sol.x[1] - 1.3).abs() < 1e-6);
        assert!((sol.x[2] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]) };
        let b = Bounds::unbounded(vec![1.0, 1.0]);
        let sol = levenberg_marquardt(f, &[-1.2, 1.0], &b, &LsqOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_bound_is_respected() {
        // unconstrained optimum at x = -1
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0] + 1.0]) };
        let b = Bounds::new(vec![0.0], vec![10.0], vec![1.0]).unwrap();
        let sol = levenberg_marquardt(f, &[3.0], &b, &LsqOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x[0], 0.0);
        assert_eq!(sol.gradient_norm, 0.0);
    }

    #[test]
    fn iteration_limit_reports_non_convergence() {
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]) };
        let b = Bounds::unbounded(vec![1.0, 1.0]);
        let opts = LsqOptions {
            max_iterations: 2,
            ..LsqOptions::default()
        };
        let sol = levenberg_marquardt(f, &[-1.2, 1.0], &b, &opts).unwrap();
        assert!(!sol.converged);
        let err = multistart(f, &[vec![-1.2, 1.0]], &b, &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn multistart_picks_global_basin() {
        // local minimum near x = -2 (cost about 0.16) and global one at x = 2 (cost 0)
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0] * p[0] - 4.0, 0.1 * (p[0] - 2.0)]) };
        let b = Bounds::unbounded(vec![1.0]);
        let (sol, _) = multistart(f, &[vec![-3.0], vec![3.0]], &b, &LsqOptions::default()).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn covariance_of_linear_fit() {
        // y = a + b t with unit weights: cov = (XᵀX)⁻¹
        let ts = [0.0, 1.0, 2.0, 3.0];
        let jac = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { ts[i] });
        let c = covariance(&jac);
        // XᵀX = [[4, 6], [6, 14]], det 20
        assert!((c[(0, 0)] - 14.0 / 20.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 4.0 / 20.0).abs() < 1e-12);
        assert!((c[(0, 1)] + 6.0 / 20.0).abs() < 1e-12);
    }
}
