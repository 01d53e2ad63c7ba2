//! Laplace approximation of the posterior.
//!
//! The mode is found by BFGS ascent on the log posterior in prior-standardized
//! coordinates `u = (theta - m) / s`, where the prior alone has identity
//! curvature. Several deterministic starting points guard against the
//! occasional second local mode. The covariance is the inverse of the
//! negative Hessian at the mode; the Hessian comes from central differences
//! of the analytic gradient.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::bayes::likelihood::log_posterior_with_gradient;
use crate::bayes::{Dataset, GaussianPrior};
use crate::error::{Error, Result};
use crate::psychometric::Params;

/// Gaussian approximation centred on the posterior mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePosterior {
    pub mode: Params,
    /// Inverse of the negative Hessian of the log posterior at the mode.
    pub covariance: [[f64; 3]; 3],
    pub log_posterior_at_mode: f64,
}

impl LaplacePosterior {
    /// Builds a posterior from a mode and covariance, checking symmetry and definiteness.
    pub fn new(mode: Params, covariance: [[f64; 3]; 3], log_posterior_at_mode: f64) -> Result<Self> {
        let lp = Self { mode, covariance, log_posterior_at_mode };
        for i in 0..3 {
            for j in 0..i {
                let (a, b) = (covariance[i][j], covariance[j][i]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Domain("covariance is not symmetric".into()));
                }
            }
        }
        lp.cholesky().ok_or(Error::NonPositiveDefiniteHessian)?;
        Ok(lp)
    }

    /// The prior viewed as its own Laplace approximation.
    pub fn from_prior(prior: &GaussianPrior) -> Self {
        Self {
            mode: prior.mean_params(),
            covariance: prior.covariance(),
            log_posterior_at_mode: prior.log_density(&prior.mean_params()),
        }
    }

    pub fn covariance_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.covariance[i][j])
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> Option<Matrix3<f64>> {
        self.covariance_matrix().cholesky().map(|c| c.l())
    }

    pub fn determinant(&self) -> f64 {
        self.covariance_matrix().determinant()
    }

    /// Posterior standard deviations of `(mu, nu, eta)`.
    pub fn sd(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.covariance[k][k].sqrt())
    }

    /// Log density of the approximating Gaussian.
    pub fn log_density(&self, p: &Params) -> f64 {
        let l = match self.cholesky() {
            Some(l) => l,
            None => return f64::NAN,
        };
        let diff = Vector3::from(p.to_array()) - Vector3::from(self.mode.to_array());
        let z = l.solve_lower_triangular(&diff).expect("non-singular factor");
        let log_det: f64 = (0..3).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        -0.5 * z.norm_squared() - 0.5 * log_det - 1.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Marginal over `(mu, nu)`: the mode projection and the top-left covariance block.
    pub fn marginal_mu_nu(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let c = &self.covariance;
        ([self.mode.mu, self.mode.nu], [[c[0][0], c[0][1]], [c[1][0], c[1][1]]])
    }
}

/// Tuning for [`laplace_fit_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the gradient norm in standardized coordinates.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for the Hessian, standardized units.
    pub hessian_step: f64,
    /// Additional starting point tried before the deterministic set (e.g. the previous mode).
    pub warm_start: Option<Params>,
    /// Skip the deterministic starts when the warm start converges.
    /// Suited to trial-by-trial refits where the mode moves little.
    pub warm_only: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iter: 200, hessian_step: 1e-4, warm_start: None, warm_only: false }
    }
}

/// Negative log posterior in standardized coordinates.
struct Objective<'a> {
    data: &'a Dataset,
    prior: &'a GaussianPrior,
}

impl Objective<'_> {
    fn eval(&self, u: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let p = self.prior.unstandardize(&[u[0], u[1], u[2]]);
        let (v, g) = log_posterior_with_gradient(self.data, self.prior, &p);
        let sd = self.prior.sd;
        (-v, Vector3::new(-g[0] * sd[0], -g[1] * sd[1], -g[2] * sd[2]))
    }

    fn hessian(&self, u: &Vector3<f64>, step: f64) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for j in 0..3 {
            let mut up = *u;
            let mut dn = *u;
            up[j] += step;
            dn[j] -= step;
            let col = (self.eval(&up).1 - self.eval(&dn).1) / (2.0 * step);
            h.set_column(j, &col);
        }
        (h + h.transpose()) * 0.5
    }
}

struct Descent {
    u: Vector3<f64>,
    f: f64,
    g: Vector3<f64>,
}

fn bfgs(obj: &Objective<'_>, start: Vector3<f64>, opts: &FitOptions) -> Descent {
    let (mut f, mut g) = obj.eval(&start);
    let mut u = start;
    let mut h_inv = Matrix3::identity();
    let mut reset = false;

    for _ in 0..opts.max_iter {
        if !f.is_finite() || g.norm() < opts.grad_tol {
            break;
        }
        let mut dir = -(h_inv * g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h_inv = Matrix3::identity();
            dir = -g;
            slope = -g.norm_squared();
        }
        // Cap the step so a poor curvature estimate cannot throw the iterate far away.
        let max_len = 3.0;
        let len = dir.norm();
        if len > max_len {
            dir *= max_len / len;
            slope *= max_len / len;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = u + dir * t;
            let (fc, gc) = obj.eval(&cand);
            if fc.is_finite() {
                let armijo = fc <= f + 1e-4 * t * slope;
                // Near the optimum rounding can mask the decrease; accept steps that shrink the gradient.
                let flat = fc <= f + 1e-12 * f.abs().max(1.0) && gc.norm() < g.norm();
                if armijo || flat {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((cand, fc, gc)) = accepted else {
            if reset {
                break;
            }
            h_inv = Matrix3::identity();
            reset = true;
            continue;
        };
        reset = false;

        let s = cand - u;
        let y = gc - g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = Matrix3::identity();
            h_inv = (i - s * y.transpose() * rho) * h_inv * (i - y * s.transpose() * rho) + s * s.transpose() * rho;
        }
        u = cand;
        f = fc;
        g = gc;
    }
    Descent { u, f, g }
}

/// Damped Newton iterations with the finite-difference Hessian; used when BFGS stalls.
fn newton_polish(obj: &Objective<'_>, d: Descent, opts: &FitOptions) -> Descent {
    let mut cur = d;
    for _ in 0..50 {
        if cur.g.norm() < opts.grad_tol {
            break;
        }
        let h = obj.hessian(&cur.u, opts.hessian_step);
        let step = match h.cholesky() {
            Some(c) => -c.solve(&cur.g),
            None => -cur.g,
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = cur.u + step * t;
            let (fc, gc) = obj.eval(&cand);
            if fc.is_finite() && (fc < cur.f || gc.norm() < cur.g.norm()) && fc <= cur.f + 1e-9 * cur.f.abs().max(1.0) {
                cur = Descent { u: cand, f: fc, g: gc };
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    cur
}

/// Laplace approximation with default options.
pub fn laplace_fit(data: &Dataset, prior: &GaussianPrior) -> Result<LaplacePosterior> {
    laplace_fit_with(data, prior, &FitOptions::default())
}

pub fn laplace_fit_with(data: &Dataset, prior: &GaussianPrior, opts: &FitOptions) -> Result<LaplacePosterior> {
    let obj = Objective { data, prior };

    let mut starts: Vec<Vector3<f64>> = Vec::with_capacity(6);
    let mut best: Option<Descent> = None;
    if let Some(w) = opts.warm_start {
        let u = prior.standardize(&w);
        if u.iter().all(|v| v.is_finite()) {
            if opts.warm_only {
                let d = bfgs(&obj, Vector3::from(u), opts);
                if d.g.norm() < opts.grad_tol {
                    if let Some(fit) = finish(&obj, prior, &d, opts) {
                        return Ok(fit);
                    }
                }
                best = Some(d);
            } else {
                starts.push(Vector3::from(u));
            }
        }
    }
    starts.push(Vector3::zeros());
    for (k, s) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        let mut u = Vector3::zeros();
        u[k] = s;
        starts.push(u);
    }

    for s in starts {
        let d = bfgs(&obj, s, opts);
        let better = match &best {
            None => true,
            Some(b) => {
                let d_ok = d.g.norm() < opts.grad_tol;
                let b_ok = b.g.norm() < opts.grad_tol;
                (d_ok && !b_ok) || (d_ok == b_ok && d.f < b.f)
            }
        };
        if better {
            best = Some(d);
        }
    }
    let mut best = best.expect("at least one start");

    if best.g.norm() >= opts.grad_tol {
        best = newton_polish(&obj, best, opts);
        if best.g.norm() >= opts.grad_tol {
            return Err(Error::NonConvergence { grad_norm: best.g.norm() });
        }
    }

    finish(&obj, prior, &best, opts).ok_or(Error::NonPositiveDefiniteHessian)
}

/// Gaussian at a converged mode; `None` when the Hessian is not positive definite.
fn finish(obj: &Objective<'_>, prior: &GaussianPrior, best: &Descent, opts: &FitOptions) -> Option<LaplacePosterior> {
    let h = obj.hessian(&best.u, opts.hessian_step);
    let cov_u = h.cholesky()?.inverse();
    let sd = prior.sd;
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = sd[i] * sd[j] * 0.5 * (cov_u[(i, j)] + cov_u[(j, i)]);
        }
    }
    Some(LaplacePosterior {
        mode: prior.unstandardize(&[best.u[0], best.u[1], best.u[2]]),
        covariance,
        log_posterior_at_mode: -best.f,
    })
}

/// Gradient norm of the log posterior at `p`, in prior-standardized units.
pub fn standardized_gradient_norm(data: &Dataset, prior: &GaussianPrior, p: &Params) -> f64 {
    let (_, g) = log_posterior_with_gradient(data, prior, p);
    (0..3).map(|k| (g[k] * prior.sd[k]).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychometric::{psi, Design};
    use crate::rng;
    use rand::Rng;

    fn prior() -> GaussianPrior {
        GaussianPrior::with_lapse((3.0, 0.5f64.sqrt()), (0.0, 0.5f64.sqrt()), 0.02, 0.3).unwrap()
    }

    #[test]
    fn empty_data_reproduces_prior() {
        let design = Design::two_afc(0.0, 10.0).unwrap();
        let pr = prior();
        let lp = laplace_fit(&Dataset::new(design), &pr).unwrap();
        let m = lp.mode.to_array();
        for k in 0..3 {
            assert!((m[k] - pr.mean[k]).abs() < 1e-8);
            for j in 0..3 {
                let expected = if j == k { pr.sd[k] * pr.sd[k] } else { 0.0 };
                assert!((lp.covariance[k][j] - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_mode() {
        let design = Design::two_afc(0.0, 10.0).unwrap();
        let truth = Params::from_natural(3.5, 0.5f64.exp(), 0.02).unwrap();
        let mut r = rng::from_seed(11);
        let mut d = Dataset::new(design);
        for _ in 0..80 {
            let x = r.random_range(1.0..7.0);
            let resp = r.random_bool(psi(x, &truth, &design));
            d.push(x, resp).unwrap();
        }
        let pr = prior();
        let lp = laplace_fit(&d, &pr).unwrap();
        assert!(standardized_gradient_norm(&d, &pr, &lp.mode) < 1e-6);
        // deterministic
        assert_eq!(lp, laplace_fit(&d, &pr).unwrap());
        // warm start lands on the same mode
        let opts = FitOptions { warm_start: Some(lp.mode), ..FitOptions::default() };
        let warm = laplace_fit_with(&d, &pr, &opts).unwrap();
        for k in 0..3 {
            assert!((warm.mode.to_array()[k] - lp.mode.to_array()[k]).abs() < 1e-5);
        }
        let opts = FitOptions { warm_only: true, ..opts };
        let quick = laplace_fit_with(&d, &pr, &opts).unwrap();
        for k in 0..3 {
            assert!((quick.mode.to_array()[k] - lp.mode.to_array()[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn validated_constructor() {
        let p = Params::new(0.0, 0.0, 0.0).unwrap();
        let bad = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(LaplacePosterior::new(p, bad, 0.0), Err(Error::NonPositiveDefiniteHessian));
        let asym = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(LaplacePosterior::new(p, asym, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn laplace_log_density_is_gaussian() {
        let pr = prior();
        let lp = LaplacePosterior::from_prior(&pr);
        let p = Params::new(3.4, -0.2, -3.7).unwrap();
        assert!((lp.log_density(&p) - pr.log_density(&p)).abs() < 1e-12);
    }
}
