#![allow(dead_code)]

use psibayes_core::bayes::{Dataset, GaussianPrior};
use psibayes_core::psychometric::{psi, Design, Params};
use psibayes_core::rng;
use rand::Rng;

pub fn prior() -> GaussianPrior {
    GaussianPrior::with_lapse((3.0, 0.5f64.sqrt()), (0.0, 0.5f64.sqrt()), 0.02, 0.3).unwrap()
}

pub fn truth() -> Params {
    Params::from_natural(3.5, 0.5f64.exp(), 0.02).unwrap()
}

pub fn design() -> Design {
    Design::two_afc(0.0, 10.0).unwrap()
}

/// Bernoulli responses of `truth` at the given levels.
pub fn simulate(d: &Design, truth: &Params, xs: &[f64], seed: u64) -> Dataset {
    let mut r = rng::from_seed(seed);
    let mut data = Dataset::new(*d);
    for &x in xs {
        let p = psi(x, truth, d);
        data.push(x, r.random::<f64>() < p).unwrap();
    }
    data
}

/// `n` levels drawn uniformly from `[lo, hi]`.
pub fn uniform_levels(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// Kolmogorov–Smirnov distance between a weighted sample and a CDF.
pub fn ks_distance(values: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for i in idx {
        let f = cdf(values[i]);
        d = d.max((f - acc).abs());
        acc += weights[i] / total;
        d = d.max((f - acc).abs());
    }
    d
}

/// CDF of a density tabulated on an evenly spaced axis (trapezoid, linear interpolation).
pub fn tabulated_cdf(axis: &[f64], density: &[f64]) -> impl Fn(f64) -> f64 {
    let h = axis[1] - axis[0];
    let mut cum = vec![0.0];
    for i in 1..axis.len() {
        cum.push(cum[i - 1] + 0.5 * h * (density[i - 1] + density[i]));
    }
    let total = *cum.last().unwrap();
    let axis = axis.to_vec();
    move |x: f64| {
        if x <= axis[0] {
            return 0.0;
        }
        if x >= axis[axis.len() - 1] {
            return 1.0;
        }
        let k = ((x - axis[0]) / h).floor() as usize;
        let t = (x - axis[k]) / h;
        (cum[k] + t * (cum[k + 1] - cum[k])) / total
    }
}
