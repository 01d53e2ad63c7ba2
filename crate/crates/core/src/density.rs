//! One-dimensional entropy and mutual-information estimators.
//!
//! Three routes are provided: the closed-form Gaussian entropy, a Gaussian
//! kernel density estimate integrated numerically, and a plug-in histogram
//! estimate of the information between a continuous quantity and a binary
//! response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernels further than this many bandwidths from `x` are skipped; their
/// contribution is below `exp(-40)`.
const KERNEL_REACH: f64 = 9.0;

/// Points whose weight falls below this share are ignored when checking
/// that a sample is not concentrated on a single value.
const WEIGHT_FLOOR: f64 = 1e-12;

const ENTROPY_TOL: f64 = 1e-4;

/// `0.5 * ln(2 pi e v)`.
pub fn gaussian_entropy(variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!("Gaussian entropy needs a positive variance, got {variance}")));
    }
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "bandwidth", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `1.06 * sd * n_eff^(-1/5)`, with the Kish effective sample size for weighted points.
    #[default]
    Silverman,
    Fixed(f64),
}

/// Weighted Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    /// Sorted ascending, paired with `weights`.
    points: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
    mean: f64,
    sd: f64,
}

impl Kde {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation of the smoothed density (points plus kernel).
    pub fn effective_sd(&self) -> f64 {
        (self.sd * self.sd + self.bandwidth * self.bandwidth).sqrt()
    }

    pub fn density(&self, x: f64) -> f64 {
        let t = self.bandwidth;
        let lo = self.points.partition_point(|p| *p < x - KERNEL_REACH * t);
        let hi = self.points.partition_point(|p| *p <= x + KERNEL_REACH * t);
        let norm = 1.0 / (t * (2.0 * std::f64::consts::PI).sqrt());
        let mut acc = 0.0;
        for i in lo..hi {
            let z = (x - self.points[i]) / t;
            acc += self.weights[i] * (-0.5 * z * z).exp();
        }
        acc * norm
    }

    /// Integration range: mean ± 8 effective sd, widened to cover every point's kernel.
    fn support(&self) -> (f64, f64) {
        let half = 8.0 * self.effective_sd();
        let reach = 8.0 * self.bandwidth;
        let lo = (self.mean - half).min(self.points[0] - reach);
        let hi = (self.mean + half).max(self.points[self.points.len() - 1] + reach);
        (lo, hi)
    }
}

/// Fits a Gaussian KDE. `weights` default to uniform and are normalized.
pub fn kde_fit(samples: &[f64], weights: Option<&[f64]>, rule: BandwidthRule) -> Result<Kde> {
    if samples.len() < 2 {
        return Err(Error::AllIdentical);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("KDE samples must be finite".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != samples.len() || w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("KDE weights must match the samples and be non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidArgument("KDE weights sum to zero".into()));
            }
            w.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / samples.len() as f64; samples.len()],
    };

    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|a, b| samples[*a].total_cmp(&samples[*b]));
    let points: Vec<f64> = idx.iter().map(|&i| samples[i]).collect();
    let weights: Vec<f64> = idx.iter().map(|&i| w[i]).collect();

    let mut distinct = points.iter().zip(&weights).filter(|(_, w)| **w > WEIGHT_FLOOR).map(|(p, _)| *p);
    let first = distinct.next();
    if first.is_none() || distinct.all(|p| Some(p) == first) {
        return Err(Error::AllIdentical);
    }

    let mean: f64 = points.iter().zip(&weights).map(|(p, w)| p * w).sum();
    let var: f64 = points.iter().zip(&weights).map(|(p, w)| w * (p - mean) * (p - mean)).sum();
    let sd = var.sqrt();
    let bandwidth = match rule {
        BandwidthRule::Silverman => {
            let n_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
            1.06 * sd * n_eff.powf(-0.2)
        }
        BandwidthRule::Fixed(t) => t,
    };
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(Kde { points, weights, bandwidth, mean, sd })
}

/// Integral of `g(f(x))` over the KDE support by composite Simpson, doubling
/// the panel count until two successive estimates agree within `tol`.
fn integrate(k: &Kde, g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let (lo, hi) = k.support();
    // Start with panels no wider than half a bandwidth.
    let mut panels = (((hi - lo) / (0.5 * k.bandwidth)).ceil() as usize).clamp(64, 1 << 16);
    panels += panels % 2;
    let max_panels = panels << 6;

    let eval = |i: usize, n: usize| g(k.density(lo + (hi - lo) * i as f64 / n as f64));
    // Even and odd node sums of the current mesh; refining turns all current nodes
    // into even nodes and only the new midpoints need evaluating.
    let ends = eval(0, panels) + eval(panels, panels);
    let mut even: f64 = (1..panels / 2).map(|j| eval(2 * j, panels)).sum();
    let mut odd: f64 = (0..panels / 2).map(|j| eval(2 * j + 1, panels)).sum();
    let simpson = |n: usize, even: f64, odd: f64| (hi - lo) / n as f64 / 3.0 * (ends + 2.0 * even + 4.0 * odd);
    let mut prev = simpson(panels, even, odd);
    loop {
        let next_panels = panels * 2;
        even += odd;
        odd = (0..panels).map(|j| eval(2 * j + 1, next_panels)).sum();
        panels = next_panels;
        let cur = simpson(panels, even, odd);
        let change = (cur - prev).abs();
        if change < tol {
            return Ok(cur);
        }
        if panels >= max_panels {
            return Err(Error::QuadratureFailure { change });
        }
        prev = cur;
    }
}

/// Integral of the KDE over its support; one up to quadrature error.
pub fn kde_mass(k: &Kde) -> Result<f64> {
    integrate(k, |f| f, 1e-9)
}

/// Differential entropy `-∫ f ln f` of the KDE, in nats.
pub fn kde_entropy(k: &Kde) -> Result<f64> {
    integrate(k, |f| if f > 0.0 { -f * f.ln() } else { 0.0 }, ENTROPY_TOL * 0.01)
}

/// How a continuous variable is cut into bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum Binning {
    /// `ceil(log2 n) + 1` equal-width bins between the extreme values.
    #[default]
    Sturges,
    /// This many equal-width bins between the extreme values.
    Count(usize),
    /// Explicit sorted edges; values outside fall into the end bins.
    Edges(Vec<f64>),
}

impl Binning {
    fn edges(&self, values: &[f64]) -> Result<Vec<f64>> {
        let count = match self {
            Binning::Edges(e) => {
                if e.len() < 3 || e.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidArgument("need at least 2 bins with strictly increasing edges".into()));
                }
                return Ok(e.clone());
            }
            Binning::Count(c) => *c,
            Binning::Sturges => (values.len() as f64).log2().ceil() as usize + 1,
        };
        if count < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {count}")));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Ok((0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect())
    }
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|e| *e <= v)
}

/// Normalized histogram of weighted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], weights: Option<&[f64]>, binning: &Binning) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("histogram of no values".into()));
        }
        let edges = binning.edges(values)?;
        let mut masses = vec![0.0; edges.len() - 1];
        for (i, v) in values.iter().enumerate() {
            masses[bin_of(&edges, *v)] += weights.map_or(1.0, |w| w[i]);
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("histogram weights sum to zero".into()));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Ok(Self { edges, masses })
    }

    /// Differential entropy of the piecewise-constant density, in nats.
    pub fn entropy(&self) -> f64 {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, e)| -m * (m / (e[1] - e[0])).ln())
            .sum()
    }
}

/// Plug-in mutual information between binned `values` and a binary response
/// with `P(r = 1 | sample i) = p_r1[i]`. `weights` default to uniform.
pub fn histogram_mi(values: &[f64], weights: Option<&[f64]>, p_r1: &[f64], binning: &Binning) -> Result<f64> {
    if values.is_empty() || p_r1.len() != values.len() || weights.is_some_and(|w| w.len() != values.len()) {
        return Err(Error::InvalidArgument("values, weights and response probabilities must have equal length".into()));
    }
    let edges = binning.edges(values)?;
    let bins = edges.len() - 1;
    let mut joint = vec![[0.0f64; 2]; bins];
    let mut total = 0.0;
    for (i, v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let b = bin_of(&edges, *v);
        joint[b][1] += w * p_r1[i];
        joint[b][0] += w * (1.0 - p_r1[i]);
        total += w;
    }
    let mut pr = [0.0; 2];
    for cell in joint.iter_mut() {
        for r in 0..2 {
            cell[r] /= total;
            pr[r] += cell[r];
        }
    }
    let mut mi = 0.0;
    for cell in &joint {
        let pb = cell[0] + cell[1];
        for r in 0..2 {
            if cell[r] > 0.0 {
                mi += cell[r] * (cell[r] / (pb * pr[r])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const H_STD: f64 = 1.4189385332046727;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::from_seed(seed);
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        assert!((gaussian_entropy(1.0).unwrap() - H_STD).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((gaussian_entropy(e2).unwrap() - (H_STD + 1.0)).abs() < 1e-12);
        for v in [1e-8, 0.3, 7.0, 1e6] {
            let d = gaussian_entropy(4.0 * v).unwrap() - gaussian_entropy(v).unwrap();
            assert!((d - 2f64.ln()).abs() < 1e-12);
        }
        assert!(gaussian_entropy(0.0).is_err());
        assert!(gaussian_entropy(-1.0).is_err());
    }

    #[test]
    fn kde_two_point_symmetry() {
        for t in [0.1, 0.7, 3.0] {
            let k = kde_fit(&[-1.0, 1.0], None, BandwidthRule::Fixed(t)).unwrap();
            for z in [0.0, 0.3, 1.0, 2.5, 6.0] {
                let (a, b) = (k.density(z), k.density(-z));
                assert!((a - b).abs() <= 1e-15 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn kde_normal_density_and_entropy() {
        let x = normals(50_000, 11);
        let k = kde_fit(&x, None, BandwidthRule::Silverman).unwrap();
        let at0 = k.density(0.0);
        assert!((at0 / 0.3989422804014327 - 1.0).abs() < 0.05, "{at0}");
        assert!((kde_mass(&k).unwrap() - 1.0).abs() < 1e-6);
        let h = kde_entropy(&k).unwrap();
        assert!((h - H_STD).abs() < 0.02, "{h}");

        let c = 3.7;
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let hs = kde_entropy(&kde_fit(&scaled, None, BandwidthRule::Silverman).unwrap()).unwrap();
        assert!((hs - h - c.ln()).abs() < 0.02);
    }

    #[test]
    fn kde_uniform_entropy_band() {
        let mut r = crate::rng::from_seed(5);
        let x: Vec<f64> = (0..50_000).map(|_| r.random::<f64>()).collect();
        let h = kde_entropy(&kde_fit(&x, None, BandwidthRule::Silverman).unwrap()).unwrap();
        assert!(h > -0.05 && h < 0.15, "{h}");
    }

    #[test]
    fn kde_degenerate_inputs() {
        assert_eq!(kde_fit(&[2.0, 2.0, 2.0], None, BandwidthRule::Silverman), Err(Error::AllIdentical));
        let w = [1.0, 1e-15, 1e-15];
        assert_eq!(kde_fit(&[2.0, 3.0, 4.0], Some(&w), BandwidthRule::Silverman), Err(Error::AllIdentical));
        assert_eq!(kde_fit(&[1.0], None, BandwidthRule::Silverman), Err(Error::AllIdentical));
    }

    #[test]
    fn weighted_kde_matches_duplicated_points() {
        let x = [0.0, 1.0, 3.0];
        let w = [1.0, 2.0, 1.0];
        let dup = [0.0, 1.0, 1.0, 3.0];
        let a = kde_fit(&x, Some(&w), BandwidthRule::Fixed(0.5)).unwrap();
        let b = kde_fit(&dup, None, BandwidthRule::Fixed(0.5)).unwrap();
        for z in [-1.0, 0.5, 1.2, 4.0] {
            assert!((a.density(z) - b.density(z)).abs() < 1e-15);
        }
    }

    #[test]
    fn histogram_mi_cases() {
        let x = normals(1001, 2);
        let constant = vec![0.3; x.len()];
        assert_eq!(histogram_mi(&x, None, &constant, &Binning::Sturges).unwrap(), 0.0);

        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[500];
        // Median sample itself sits on the edge; give it its own side's label.
        let p: Vec<f64> = x.iter().map(|v| if *v >= median { 1.0 } else { 0.0 }).collect();
        let edges = Binning::Edges(vec![sorted[0] - 1.0, median, sorted[1000] + 1.0]);
        let mi = histogram_mi(&x, None, &p, &edges).unwrap();
        // 500 below, 501 at or above the median.
        let q: f64 = 500.0 / 1001.0;
        let exact = -(q * q.ln() + (1.0 - q) * (1.0 - q).ln());
        assert!((mi - exact).abs() < 1e-12);
        assert!((mi - 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn histogram_masses_normalized() {
        let x = normals(777, 3);
        let h = Histogram::new(&x, None, &Binning::Count(13)).unwrap();
        assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.masses.len(), 13);
        assert!(Histogram::new(&x, None, &Binning::Count(1)).is_err());
    }
}
