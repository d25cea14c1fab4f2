use rand::Rng;

use super::{check_response_len, check_variables, Model, Params, Response};
use crate::design::{CoordinateDomain, Design, DesignSpace};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::sampling::{Marginal, PriorSpec, RngStream};
use crate::scalar::Real;
use crate::special::{log_logistic, logistic};

/// `X = [1, D]`: an intercept column followed by the design columns.
pub fn model_matrix<T: Real>(design: &Design<T>) -> Matrix<T> {
    Matrix::from_fn(design.runs(), design.variables() + 1, |r, c| {
        if c == 0 {
            T::one()
        } else {
            design.get(r, c - 1)
        }
    })
}

fn linear_predictor<T: Real>(row: &[T], beta: &[T], omega: Option<&[T]>) -> f64 {
    row.iter()
        .enumerate()
        .map(|(j, &x)| {
            let coef = beta[j] + omega.map_or(T::zero(), |w| w[j]);
            (x * coef).as_f64()
        })
        .sum()
}

fn group_of(run: usize, groups: usize, group_size: usize) -> usize {
    (run / group_size.max(1)).min(groups.saturating_sub(1))
}

/// Bernoulli responses with success probability `logistic(x^T (beta + omega_s))`.
/// Run `k` belongs to group `min(k / group_size, G - 1)`; an empty `omega`
/// gives the homogeneous model.
pub fn logistic_simulate<T: Real>(
    beta: &[T],
    omega: &[Vec<T>],
    group_size: usize,
    x: &Matrix<T>,
    rng: &mut RngStream,
) -> Vec<T> {
    (0..x.rows())
        .map(|k| {
            let w = (!omega.is_empty()).then(|| omega[group_of(k, omega.len(), group_size)].as_slice());
            let p = logistic(linear_predictor(x.row(k), beta, w));
            if rng.random::<f64>() < p {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

fn add_logistic_information(info: &mut Matrix<f64>, row: &[f64], eta: f64) {
    let p = logistic(eta);
    info.add_outer(row, p * (1.0 - p));
}

/// `X^T W X` with `W = diag(rho (1 - rho))`.
pub fn logistic_fisher_info<T: Real>(beta: &[T], x: &Matrix<T>) -> Matrix<T> {
    let p = x.cols();
    let mut info = Matrix::<f64>::zeros(p, p);
    for k in 0..x.rows() {
        let row: Vec<f64> = x.row(k).iter().map(|v| v.as_f64()).collect();
        add_logistic_information(&mut info, &row, linear_predictor(x.row(k), beta, None));
    }
    Matrix::from_fn(p, p, |r, c| T::of(info[(r, c)]))
}

/// Prior-averaged conditional information of the random-effects model:
/// `sum_s (1/R) sum_r X_s^T W_s(beta + omega_s^(r)) X_s`, with each
/// `omega_{s j}^(r) ~ U[-lambda_j, lambda_j]`.
pub fn hier_logistic_fisher_approx<T: Real>(
    beta: &[T],
    lambda: &[T],
    x: &Matrix<T>,
    groups: usize,
    group_size: usize,
    draws: usize,
    rng: &mut RngStream,
) -> Result<Matrix<T>> {
    if draws == 0 {
        return invalid("Monte Carlo size for the information approximation must be positive");
    }
    if groups == 0 {
        return invalid("at least one group is required");
    }
    let p = x.cols();
    let mut info = Matrix::<f64>::zeros(p, p);
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|k| x.row(k).iter().map(|v| v.as_f64()).collect()).collect();
    for s in 0..groups {
        let members: Vec<usize> = (0..x.rows()).filter(|&k| group_of(k, groups, group_size) == s).collect();
        if members.is_empty() {
            continue;
        }
        let mut group_info = Matrix::<f64>::zeros(p, p);
        for _ in 0..draws {
            let omega: Vec<T> = lambda.iter().map(|&l| T::of(l.as_f64() * (2.0 * rng.random::<f64>() - 1.0))).collect();
            for &k in &members {
                add_logistic_information(&mut group_info, &rows[k], linear_predictor(x.row(k), beta, Some(&omega)));
            }
        }
        info = info.add(&group_info.scale(1.0 / draws as f64));
    }
    Ok(Matrix::from_fn(p, p, |r, c| T::of(info[(r, c)])))
}

/// Group-specific effects `omega_{s r} ~ U[-lambda_r, lambda_r]` with
/// triangular priors on the half-widths.
#[derive(Debug, Clone)]
pub struct HierarchicalPrior {
    /// Upper limits `L_r` of the triangular half-width priors.
    pub limits: Vec<f64>,
    pub groups: usize,
    pub group_size: usize,
    /// Monte Carlo size of the Fisher information approximation.
    pub fisher_draws: usize,
}

impl HierarchicalPrior {
    pub fn standard(groups: usize, group_size: usize) -> Self {
        Self { limits: vec![3.0, 3.0, 3.0, 1.0, 1.0], groups, group_size, fisher_draws: 20 }
    }

    fn prior(&self) -> PriorSpec {
        PriorSpec {
            marginals: self.limits.iter().map(|&l| Marginal::TriangularDecreasing { l }).collect(),
            nested: Some(crate::sampling::NestedUniform {
                groups: self.groups,
                scales: (0..self.limits.len()).collect(),
            }),
        }
    }
}

/// First-order logistic regression in `v` variables, optionally with
/// group-level random effects.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub prior_beta: Vec<Marginal>,
    pub hierarchical: Option<HierarchicalPrior>,
}

impl Default for Logistic {
    fn default() -> Self {
        let u = |lo: f64, hi: f64| Marginal::Uniform { lo, hi };
        Self {
            prior_beta: vec![u(-3.0, 3.0), u(4.0, 10.0), u(5.0, 11.0), u(-6.0, 0.0), u(-2.5, 3.5)],
            hierarchical: None,
        }
    }
}

impl Logistic {
    pub fn hierarchical(groups: usize, group_size: usize) -> Self {
        Self { hierarchical: Some(HierarchicalPrior::standard(groups, group_size)), ..Self::default() }
    }

    /// Point prior at the mean of each coefficient's prior.
    pub fn at_prior_means(&self) -> Self {
        Self {
            prior_beta: self.prior_beta.iter().map(|m| Marginal::PointMass { value: m.mean() }).collect(),
            hierarchical: self.hierarchical.clone(),
        }
    }

    pub fn variables(&self) -> usize {
        self.prior_beta.len() - 1
    }

    fn split_gamma<'a, T: Real>(&self, gamma: &'a [T]) -> (&'a [T], Vec<Vec<T>>) {
        match &self.hierarchical {
            None => (&[], Vec::new()),
            Some(h) => {
                let p = h.limits.len();
                let (lambda, rest) = gamma.split_at(p);
                (lambda, rest.chunks(p).map(<[T]>::to_vec).collect())
            }
        }
    }
}

impl<T: Real> Model<T> for Logistic {
    fn name(&self) -> &str {
        if self.hierarchical.is_some() {
            "hierarchical_logistic"
        } else {
            "logistic"
        }
    }

    fn interest_dim(&self) -> usize {
        self.prior_beta.len()
    }

    fn has_nuisance(&self) -> bool {
        self.hierarchical.is_some()
    }

    fn design_space(&self) -> DesignSpace<T> {
        DesignSpace::new(vec![CoordinateDomain::interval(-T::one(), T::one()).expect("valid"); self.variables()])
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Params<T> {
        let theta = self.prior_beta.iter().map(|m| T::of(m.sample(rng))).collect();
        let gamma = self.hierarchical.as_ref().map_or_else(Vec::new, |h| h.prior().draw(rng));
        Params::new(theta, gamma)
    }

    fn simulate(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Response<T>> {
        check_variables(design, self.variables(), Model::<T>::name(self))?;
        let (_, omega) = self.split_gamma(&params.gamma);
        let group_size = self.hierarchical.as_ref().map_or(1, |h| h.group_size);
        Ok(logistic_simulate(&params.theta, &omega, group_size, &model_matrix(design), rng))
    }

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T> {
        check_response_len(y, design.runs())?;
        let (_, omega) = self.split_gamma(&params.gamma);
        let group_size = self.hierarchical.as_ref().map_or(1, |h| h.group_size);
        let x = model_matrix(design);
        let mut ll = 0.0;
        for (k, &yk) in y.iter().enumerate() {
            let w = (!omega.is_empty()).then(|| omega[group_of(k, omega.len(), group_size)].as_slice());
            let eta = linear_predictor(x.row(k), &params.theta, w);
            ll += if yk > T::zero() { log_logistic(eta) } else { log_logistic(-eta) };
        }
        Ok(T::of(ll))
    }

    fn provides_fisher_information(&self) -> bool {
        true
    }

    fn fisher_information(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Matrix<T>> {
        check_variables(design, self.variables(), Model::<T>::name(self))?;
        let x = model_matrix(design);
        match &self.hierarchical {
            None => Ok(logistic_fisher_info(&params.theta, &x)),
            Some(h) => {
                let (lambda, _) = self.split_gamma(&params.gamma);
                hier_logistic_fisher_approx(&params.theta, lambda, &x, h.groups, h.group_size, h.fisher_draws, rng)
            }
        }
    }
}
