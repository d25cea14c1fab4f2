use rand_distr::{Distribution, Normal};

use super::{check_response_len, normal_log_pdf, Model, Params, Response};
use crate::design::{CoordinateDomain, Design, DesignSpace};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::sampling::{Marginal, RngStream};
use crate::scalar::Real;

/// Conjugate normal location model: `theta` from `prior`, then each of the
/// `n` runs observes `N(theta, noise_var)`. Design values carry no
/// information, only the run count does, which gives closed-form expected
/// utilities for checking the nested estimators.
#[derive(Debug, Clone)]
pub struct NormalLocation {
    pub prior: Marginal,
    pub noise_var: f64,
}

impl NormalLocation {
    pub fn standard() -> Self {
        Self { prior: Marginal::Normal { mean: 0.0, var: 1.0 }, noise_var: 1.0 }
    }

    fn prior_var(&self) -> f64 {
        self.prior.variance()
    }

    /// `0.5 log(1 + n tau^2 / sigma^2)`.
    pub fn expected_information_gain(&self, n: usize) -> f64 {
        0.5 * (1.0 + n as f64 * self.prior_var() / self.noise_var).ln()
    }

    /// `-1 / (1/tau^2 + n/sigma^2)`, minus the posterior variance.
    pub fn expected_negative_squared_error(&self, n: usize) -> f64 {
        let tau2 = self.prior_var();
        if tau2 == 0.0 {
            return 0.0;
        }
        -1.0 / (1.0 / tau2 + n as f64 / self.noise_var)
    }
}

impl<T: Real> Model<T> for NormalLocation {
    fn name(&self) -> &str {
        "normal_location"
    }

    fn interest_dim(&self) -> usize {
        1
    }

    fn has_nuisance(&self) -> bool {
        false
    }

    fn design_space(&self) -> DesignSpace<T> {
        DesignSpace::new(vec![CoordinateDomain::interval(-T::one(), T::one()).expect("valid")])
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Params<T> {
        Params::interest(vec![T::of(self.prior.sample(rng))])
    }

    fn simulate(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Response<T>> {
        let noise = Normal::new(params.theta[0].as_f64(), self.noise_var.sqrt()).expect("positive variance");
        Ok((0..design.runs()).map(|_| T::of(noise.sample(rng))).collect())
    }

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T> {
        check_response_len(y, design.runs())?;
        let mean = params.theta[0].as_f64();
        Ok(T::of(y.iter().map(|y| normal_log_pdf(y.as_f64(), mean, self.noise_var)).sum()))
    }

    fn provides_fisher_information(&self) -> bool {
        true
    }

    fn fisher_information(&self, _params: &Params<T>, design: &Design<T>, _rng: &mut RngStream) -> Result<Matrix<T>> {
        Ok(Matrix::from_rows(&[vec![T::of(design.runs() as f64 / self.noise_var)]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let m = NormalLocation::standard();
        assert!((m.expected_information_gain(1) - 0.346_573_590_279_972_6).abs() < 1e-15);
        assert!((m.expected_negative_squared_error(3) + 0.25).abs() < 1e-15);
    }
}
