//! Prior, likelihood, Laplace-approximated posterior and sample-based summaries.

mod data;
pub mod grid;
pub mod laplace;
pub mod likelihood;
mod prior;
pub mod samples;

pub use data::{Dataset, TrialRecord};
pub use grid::{grid_posterior_oracle, GridPosterior, GridSpec};
pub use laplace::{laplace_fit, laplace_fit_with, FitOptions, LaplacePosterior};
pub use likelihood::{log_likelihood, log_posterior_unnorm, SequentialPosterior};
pub use prior::GaussianPrior;
pub use samples::{
    functional_samples, importance_resample, importance_sample_posterior, marginalize_lapse, posterior_predictive_simulate,
    posterior_response_quantiles, predicted_response_prob, sample_laplace, weighted_quantile, FunctionalSamples,
    MarginalSampleSet, SampleSet, DEFAULT_PROPOSAL_INFLATION,
};

/// Entropy (nats) of the Laplace Gaussian: `0.5 * ln((2 pi e)^3 det(cov))`.
pub fn posterior_entropy_gaussian(lp: &LaplacePosterior) -> f64 {
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    0.5 * (3.0 * two_pi_e.ln() + lp.determinant().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychometric::Params;

    fn with_cov(c: [[f64; 3]; 3]) -> LaplacePosterior {
        LaplacePosterior::new(Params::new(0.0, 0.0, 0.0).unwrap(), c, 0.0).unwrap()
    }

    #[test]
    fn gaussian_entropy_values() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let h = posterior_entropy_gaussian(&with_cov(id));
        assert!((h - 4.256_815_599_614_018).abs() < 1e-12);
        let c = 2.5;
        let scaled = id.map(|r| r.map(|v| v * c));
        assert!((posterior_entropy_gaussian(&with_cov(scaled)) - h - 1.5 * c.ln()).abs() < 1e-12);
        let thin = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1e-4]];
        assert!((posterior_entropy_gaussian(&with_cov(thin)) - h - 0.5 * 1e-4f64.ln()).abs() < 1e-12);
    }
}
