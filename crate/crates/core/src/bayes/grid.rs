//! Brute-force posterior on a regular 3-D grid.
//!
//! Slow but free of approximation beyond the trapezoid rule; it serves as the
//! reference against which the Laplace fit is checked.

use serde::{Deserialize, Serialize};

use crate::bayes::likelihood::log_posterior_unnorm;
use crate::bayes::{Dataset, GaussianPrior};
use crate::error::{Error, Result};
use crate::psychometric::Params;

/// Cubic integration region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: [f64; 3],
    pub half_width: [f64; 3],
    /// Points per axis (odd, at least 3).
    pub points: usize,
    /// When set, the grid is also evaluated at twice the resolution and the
    /// fit is rejected if the mean moves by more than this (prior-sd units).
    pub refine_tolerance: Option<f64>,
}

impl GridSpec {
    /// Region of `n_sd` prior standard deviations either side of the prior mean.
    pub fn around_prior(prior: &GaussianPrior, n_sd: f64, points: usize) -> Self {
        Self {
            center: prior.mean,
            half_width: std::array::from_fn(|k| n_sd * prior.sd[k]),
            points,
            refine_tolerance: None,
        }
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.center[k] - self.half_width[k] + 2.0 * self.half_width[k] * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Normalized grid density with its first two moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub axes: [Vec<f64>; 3],
    /// Density values, index `(i * n + j) * n + k` for `(mu_i, nu_j, eta_k)`.
    pub density: Vec<f64>,
    pub mean: [f64; 3],
    pub covariance: [[f64; 3]; 3],
}

impl GridPosterior {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.axes[0].len();
        self.density[(i * n + j) * n + k]
    }

    /// Probability mass attached to each node (density times trapezoid weight).
    pub fn node_masses(&self) -> Vec<(Params, f64)> {
        let n = self.axes[0].len();
        let tw = trapezoid_weights(n);
        let vol: f64 = (0..3).map(|a| self.axes[a][1] - self.axes[a][0]).product();
        let mut out = Vec::with_capacity(self.density.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let w = tw[i] * tw[j] * tw[k] * vol * self.at(i, j, k);
                    out.push((Params::from_array([self.axes[0][i], self.axes[1][j], self.axes[2][k]]), w));
                }
            }
        }
        out
    }

    /// Marginal density of one coordinate on its axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let n = self.axes[0].len();
        let tw = trapezoid_weights(n);
        let others: Vec<usize> = (0..3).filter(|a| *a != axis).collect();
        let area: f64 = others.iter().map(|&a| self.axes[a][1] - self.axes[a][0]).product();
        let mut m = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = [i, j, k];
                    let w = tw[idx[others[0]]] * tw[idx[others[1]]] * area;
                    m[idx[axis]] += w * self.at(i, j, k);
                }
            }
        }
        m
    }
}

fn trapezoid_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 } else { 1.0 }).collect()
}

fn evaluate(data: &Dataset, prior: &GaussianPrior, spec: &GridSpec) -> GridPosterior {
    let n = spec.points;
    let axes = [spec.axis(0), spec.axis(1), spec.axis(2)];
    let mut logd = Vec::with_capacity(n * n * n);
    for &mu in &axes[0] {
        for &nu in &axes[1] {
            for &eta in &axes[2] {
                logd.push(log_posterior_unnorm(data, prior, &Params { mu, nu, eta }));
            }
        }
    }
    let top = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = logd.iter().map(|v| (v - top).exp()).collect();

    let tw = trapezoid_weights(n);
    let h: [f64; 3] = std::array::from_fn(|a| axes[a][1] - axes[a][0]);
    let vol = h[0] * h[1] * h[2];
    let mut mass = 0.0;
    let mut first = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let w = tw[i] * tw[j] * tw[k] * vol * density[(i * n + j) * n + k];
                mass += w;
                let v = [axes[0][i], axes[1][j], axes[2][k]];
                for a in 0..3 {
                    first[a] += w * v[a];
                }
            }
        }
    }
    let mean: [f64; 3] = std::array::from_fn(|a| first[a] / mass);
    let mut cov = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let w = tw[i] * tw[j] * tw[k] * vol * density[(i * n + j) * n + k] / mass;
                let v = [axes[0][i] - mean[0], axes[1][j] - mean[1], axes[2][k] - mean[2]];
                for a in 0..3 {
                    for b in 0..3 {
                        cov[a][b] += w * v[a] * v[b];
                    }
                }
            }
        }
    }
    density.iter_mut().for_each(|v| *v /= mass);
    GridPosterior { axes, density, mean, covariance: cov }
}

/// Trapezoid-rule posterior over the region in `spec`.
///
/// The region must span at least three prior standard deviations either
/// side of the prior mean in every dimension.
pub fn grid_posterior_oracle(data: &Dataset, prior: &GaussianPrior, spec: &GridSpec) -> Result<GridPosterior> {
    if spec.points < 3 || spec.points % 2 == 0 {
        return Err(Error::InvalidArgument(format!("grid needs an odd point count >= 3, got {}", spec.points)));
    }
    for k in 0..3 {
        let lo = spec.center[k] - spec.half_width[k];
        let hi = spec.center[k] + spec.half_width[k];
        if lo > prior.mean[k] - 3.0 * prior.sd[k] || hi < prior.mean[k] + 3.0 * prior.sd[k] {
            return Err(Error::InvalidArgument(format!(
                "grid axis {k} [{lo}, {hi}] covers less than 6 prior standard deviations"
            )));
        }
    }
    let coarse = evaluate(data, prior, spec);
    if let Some(tol) = spec.refine_tolerance {
        let fine_spec = GridSpec { points: 2 * (spec.points - 1) + 1, refine_tolerance: None, ..*spec };
        let fine = evaluate(data, prior, &fine_spec);
        let shift = (0..3)
            .map(|k| ((fine.mean[k] - coarse.mean[k]) / prior.sd[k]).abs())
            .fold(0.0, f64::max);
        if shift > tol {
            return Err(Error::GridTooCoarse { shift });
        }
    }
    Ok(coarse)
}
