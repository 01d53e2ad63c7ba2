use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psychometric::{logit, Params};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Independent Gaussian prior over `(mu, nu, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl GaussianPrior {
    pub fn new(mean: [f64; 3], sd: [f64; 3]) -> Result<Self> {
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain(format!("prior mean must be finite, got {mean:?}")));
        }
        if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!("prior sd must be positive, got {sd:?}")));
        }
        Ok(Self { mean, sd })
    }

    /// Prior with the lapse centred on `lapse` (natural scale) with sd `eta_sd` on the logit scale.
    pub fn with_lapse(mu: (f64, f64), nu: (f64, f64), lapse: f64, eta_sd: f64) -> Result<Self> {
        if !(lapse > 0.0 && lapse < 1.0) {
            return Err(Error::Domain(format!("lapse must lie in (0, 1), got {lapse}")));
        }
        Self::new([mu.0, nu.0, logit(lapse)], [mu.1, nu.1, eta_sd])
    }

    pub fn mean_params(&self) -> Params {
        Params::from_array(self.mean)
    }

    /// Log density, normalizing constants included.
    pub fn log_density(&self, p: &Params) -> f64 {
        let v = p.to_array();
        (0..3)
            .map(|k| {
                let z = (v[k] - self.mean[k]) / self.sd[k];
                -0.5 * z * z - self.sd[k].ln() - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn grad_log_density(&self, p: &Params) -> [f64; 3] {
        let v = p.to_array();
        std::array::from_fn(|k| -(v[k] - self.mean[k]) / (self.sd[k] * self.sd[k]))
    }

    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for k in 0..3 {
            c[k][k] = self.sd[k] * self.sd[k];
        }
        c
    }

    /// Maps `p` into prior-standardized coordinates.
    pub fn standardize(&self, p: &Params) -> [f64; 3] {
        let v = p.to_array();
        std::array::from_fn(|k| (v[k] - self.mean[k]) / self.sd[k])
    }

    pub fn unstandardize(&self, u: &[f64; 3]) -> Params {
        Params::from_array(std::array::from_fn(|k| self.mean[k] + self.sd[k] * u[k]))
    }
}
