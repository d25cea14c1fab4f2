//! Statistical models: prior sampling of `psi = (theta, gamma)`, response
//! simulation, log-likelihood and, where defined, Fisher information for
//! `theta`.

mod compartmental;
mod dose_response;
mod logistic;
mod normal;
mod poisson;

pub use compartmental::{
    beta_drs_expand, compartmental_mean_sd, drs_domain_check, BetaDrsCompartmental, Compartmental, DrsConstraint,
    DrsCoordinate, MIN_GAP_HOURS, SAMPLING_HORIZON_HOURS,
};
pub use dose_response::{
    dose_log_likelihood, dose_response_simulate, ld50, load_dose_data, load_posterior_samples, parse_posterior_samples,
    to_original_dose_scale, DoseModel, DoseObservation, DoseResponsePosterior, PosteriorSample, BEETLE_DOSE_RANGE,
    DEFAULT_MODEL_WEIGHTS,
};
pub use logistic::{
    hier_logistic_fisher_approx, logistic_fisher_info, logistic_simulate, model_matrix, HierarchicalPrior, Logistic,
};
pub use normal::NormalLocation;
pub use poisson::{poisson_toy_utility, PoissonToy};

use crate::design::{Design, DesignSpace};
use crate::error::{AceError, Result};
use crate::linalg::Matrix;
use crate::sampling::RngStream;
use crate::scalar::Real;

/// One draw of the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// Parameters of interest.
    pub theta: Vec<T>,
    /// Nuisance parameters.
    pub gamma: Vec<T>,
}

impl<T> Params<T> {
    pub fn new(theta: Vec<T>, gamma: Vec<T>) -> Self {
        Self { theta, gamma }
    }

    pub fn interest(theta: Vec<T>) -> Self {
        Self { theta, gamma: Vec::new() }
    }
}

/// Observed responses; discrete outcomes are stored as whole numbers.
pub type Response<T> = Vec<T>;

pub trait Model<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// `p`, the dimension of `theta`.
    fn interest_dim(&self) -> usize;

    /// Whether `gamma` is non-empty.
    fn has_nuisance(&self) -> bool;

    /// Per-variable domains (and any joint constraint) of the natural design space.
    fn design_space(&self) -> DesignSpace<T>;

    fn sample_prior(&self, rng: &mut RngStream) -> Params<T>;

    fn simulate(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Response<T>>;

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T>;

    fn provides_fisher_information(&self) -> bool {
        false
    }

    /// Fisher information for `theta`. Monte Carlo approximations draw from `rng`.
    fn fisher_information(&self, _params: &Params<T>, _design: &Design<T>, _rng: &mut RngStream) -> Result<Matrix<T>> {
        Err(AceError::Unsupported { model: self.name().to_string(), capability: "Fisher information" })
    }
}

pub(crate) fn check_variables<T: Real>(design: &Design<T>, v: usize, model: &str) -> Result<()> {
    if design.variables() != v {
        return Err(AceError::InvalidArgument(format!(
            "{model} expects {v} design variables, got {}",
            design.variables()
        )));
    }
    Ok(())
}

pub(crate) fn check_response_len<T: Real>(y: &[T], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(AceError::InvalidArgument(format!("response has {} entries for {n} runs", y.len())));
    }
    Ok(())
}

pub(crate) fn poisson_log_pmf(y: f64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y * mean.ln() - mean - crate::special::ln_factorial(y)
}

pub(crate) fn normal_log_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - mean).powi(2) / var)
}
