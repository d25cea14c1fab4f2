use rand_distr::{Distribution, Poisson};

use super::{check_response_len, check_variables, poisson_log_pmf, Model, Params, Response};
use crate::design::{CoordinateDomain, Design, DesignSpace};
use crate::error::{AceError, Result};
use crate::linalg::Matrix;
use crate::sampling::{Marginal, RngStream};
use crate::scalar::Real;

/// `2 log|x| + beta x`: the log Fisher information of the one-point Poisson
/// design.
pub fn poisson_toy_utility<T: Real>(beta: T, x: T) -> Result<T> {
    if x == T::zero() {
        return Err(AceError::Domain("log Fisher information is singular at x = 0".into()));
    }
    Ok((T::one() + T::one()) * x.abs().ln() + beta * x)
}

/// `y_k | beta ~ Poisson(exp(beta x_k))` with a scalar prior on `beta`.
#[derive(Debug, Clone)]
pub struct PoissonToy {
    pub prior: Marginal,
}

impl Default for PoissonToy {
    fn default() -> Self {
        Self { prior: Marginal::Normal { mean: 0.5, var: 1.0 } }
    }
}

impl PoissonToy {
    pub fn with_point_prior(beta: f64) -> Self {
        Self { prior: Marginal::PointMass { value: beta } }
    }
}

impl<T: Real> Model<T> for PoissonToy {
    fn name(&self) -> &str {
        "poisson_toy"
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
        check_variables(design, 1, "poisson_toy")?;
        let beta = params.theta[0].as_f64();
        Ok(design
            .values()
            .iter()
            .map(|x| {
                let mean = (beta * x.as_f64()).exp();
                T::of(Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0))
            })
            .collect())
    }

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T> {
        check_response_len(y, design.runs())?;
        let beta = params.theta[0].as_f64();
        Ok(T::of(
            design.values().iter().zip(y).map(|(x, y)| poisson_log_pmf(y.as_f64(), (beta * x.as_f64()).exp())).sum(),
        ))
    }

    fn provides_fisher_information(&self) -> bool {
        true
    }

    fn fisher_information(&self, params: &Params<T>, design: &Design<T>, _rng: &mut RngStream) -> Result<Matrix<T>> {
        check_variables(design, 1, "poisson_toy")?;
        let beta = params.theta[0];
        let info: T = design.values().iter().map(|&x| x * x * (beta * x).exp()).sum();
        Ok(Matrix::from_rows(&[vec![info]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spd_log_det;

    #[test]
    fn closed_form_utility_values() {
        assert!((poisson_toy_utility(0.5_f64, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(poisson_toy_utility(0.0_f64, 1.0).unwrap(), 0.0);
        assert!((poisson_toy_utility(0.5_f64, -1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!(matches!(poisson_toy_utility(0.5_f64, 0.0), Err(AceError::Domain(_))));
    }

    #[test]
    fn log_information_equals_toy_utility() {
        let model = PoissonToy::default();
        let mut rng = RngStream::new(0, 0);
        for &(beta, x) in &[(0.5_f64, 1.0_f64), (-1.2, 0.3), (2.0, -0.7)] {
            let d = Design::new(1, 1, vec![x]).unwrap();
            let info = model.fisher_information(&Params::interest(vec![beta]), &d, &mut rng).unwrap();
            let direct = poisson_toy_utility(beta, x).unwrap();
            assert!((spd_log_det(&info).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn simulated_frequencies_match_likelihood() {
        let model = PoissonToy::default();
        let design = Design::new(1, 1, vec![0.8_f64]).unwrap();
        let params = Params::interest(vec![0.5_f64]);
        let mut rng = RngStream::new(21, 0);
        let reps = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..reps {
            let y = model.simulate(&params, &design, &mut rng).unwrap()[0] as usize;
            if y < 4 {
                counts[y] += 1;
            }
        }
        for (y, &c) in counts.iter().enumerate() {
            let p = model.log_likelihood(&[y as f64], &params, &design).unwrap().exp();
            let freq = c as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "y={y}: {freq} vs {p}");
        }
    }
}
