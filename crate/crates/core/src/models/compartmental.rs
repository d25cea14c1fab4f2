use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use super::{check_response_len, check_variables, normal_log_pdf, Model, Params, Response};
use crate::design::{CoordinateDomain, Design, DesignConstraint, DesignSpace, MinSpacing};
use crate::error::{AceError, Result};
use crate::linalg::Matrix;
use crate::sampling::{Marginal, RngStream};
use crate::scalar::Real;
use crate::special::beta_quantile;

pub const SAMPLING_HORIZON_HOURS: f64 = 24.0;
/// Fifteen minutes.
pub const MIN_GAP_HOURS: f64 = 0.25;

const NOISE_VAR: f64 = 0.1;

fn scale_a(theta: &[f64]) -> Result<f64> {
    let (t1, t2, t3) = (theta[0], theta[1], theta[2]);
    if t2 == t1 {
        return Err(AceError::Singular("theta_2 equals theta_1".into()));
    }
    Ok(400.0 * t2 / (t3 * (t2 - t1)))
}

fn profile(theta: &[f64], t: f64) -> f64 {
    (-theta[0] * t).exp() - (-theta[1] * t).exp()
}

fn mean_var(theta: &[f64], t: f64, sigma2: f64) -> Result<(f64, f64)> {
    let a = scale_a(theta)?;
    let mu = profile(theta, t);
    let b = 1.0 + a * a * mu * mu / 10.0;
    Ok((a * mu, sigma2 * b))
}

/// Mean and standard deviation of the concentration at time `t`:
/// `a(theta) mu(theta; t)` and `sqrt(sigma^2 b(theta; t))` with `sigma^2 = 0.1`.
pub fn compartmental_mean_sd<T: Real>(theta: &[T], t: T) -> Result<(T, T)> {
    if theta.len() != 3 {
        return Err(AceError::InvalidArgument("compartmental model has three rate parameters".into()));
    }
    if t < T::zero() {
        return Err(AceError::Domain("sampling time must be non-negative".into()));
    }
    let th: Vec<f64> = theta.iter().map(|x| x.as_f64()).collect();
    let (m, v) = if t.is_infinite() {
        scale_a(&th)?;
        (0.0, NOISE_VAR)
    } else {
        mean_var(&th, t.as_f64(), NOISE_VAR)?
    };
    Ok((T::of(m), T::of(v.sqrt())))
}

/// Open one-compartment model with log-normal priors on the three rates.
#[derive(Debug, Clone)]
pub struct Compartmental {
    pub prior: [Marginal; 3],
    pub sigma2: f64,
    /// Enforce the fifteen-minute spacing between sampling times.
    pub min_spacing: bool,
}

impl Default for Compartmental {
    fn default() -> Self {
        let ln = |m: f64| Marginal::LogNormal { log_mean: m.ln(), log_var: 0.05 };
        Self { prior: [ln(0.1), ln(1.0), ln(20.0)], sigma2: NOISE_VAR, min_spacing: false }
    }
}

impl Compartmental {
    pub fn constrained() -> Self {
        Self { min_spacing: true, ..Self::default() }
    }

    fn times<T: Real>(design: &Design<T>) -> Vec<f64> {
        design.values().iter().map(|t| t.as_f64()).collect()
    }

    fn check_times(times: &[f64]) -> Result<()> {
        if times.iter().any(|t| !(0.0..=SAMPLING_HORIZON_HOURS).contains(t)) {
            return Err(AceError::Domain("sampling times must lie in [0, 24]".into()));
        }
        Ok(())
    }

    pub(crate) fn simulate_times<T: Real>(&self, theta: &[T], times: &[f64], rng: &mut RngStream) -> Result<Vec<T>> {
        Self::check_times(times)?;
        let th: Vec<f64> = theta.iter().map(|x| x.as_f64()).collect();
        times
            .iter()
            .map(|&t| {
                let (m, v) = mean_var(&th, t, self.sigma2)?;
                Ok(T::of(Normal::new(m, v.sqrt()).expect("positive variance").sample(rng)))
            })
            .collect()
    }

    pub(crate) fn log_likelihood_times<T: Real>(&self, y: &[T], theta: &[T], times: &[f64]) -> Result<T> {
        check_response_len(y, times.len())?;
        let th: Vec<f64> = theta.iter().map(|x| x.as_f64()).collect();
        let mut ll = 0.0;
        for (&t, y) in times.iter().zip(y) {
            let (m, v) = mean_var(&th, t, self.sigma2)?;
            ll += normal_log_pdf(y.as_f64(), m, v);
        }
        Ok(T::of(ll))
    }

    /// `J^T V^{-1} J` with `J` the Jacobian of the mean in `theta` and
    /// `V = diag(sigma^2 b)`.
    pub(crate) fn fisher_times<T: Real>(&self, theta: &[T], times: &[f64]) -> Result<Matrix<T>> {
        let th: Vec<f64> = theta.iter().map(|x| x.as_f64()).collect();
        let a = scale_a(&th)?;
        let (t1, t2, t3) = (th[0], th[1], th[2]);
        let da = [a / (t2 - t1), -a * t1 / (t2 * (t2 - t1)), -a / t3];
        let mut info = Matrix::<f64>::zeros(3, 3);
        for &t in times {
            let mu = profile(&th, t);
            let dmu = [-t * (-t1 * t).exp(), t * (-t2 * t).exp(), 0.0];
            let grad: Vec<f64> = (0..3).map(|j| da[j] * mu + a * dmu[j]).collect();
            let var = self.sigma2 * (1.0 + a * a * mu * mu / 10.0);
            info.add_outer(&grad, 1.0 / var);
        }
        Ok(Matrix::from_fn(3, 3, |r, c| T::of(info[(r, c)])))
    }
}

impl<T: Real> Model<T> for Compartmental {
    fn name(&self) -> &str {
        "compartmental"
    }

    fn interest_dim(&self) -> usize {
        3
    }

    fn has_nuisance(&self) -> bool {
        false
    }

    fn design_space(&self) -> DesignSpace<T> {
        let space = DesignSpace::new(vec![
            CoordinateDomain::interval(T::zero(), T::of(SAMPLING_HORIZON_HOURS)).expect("valid")
        ]);
        if self.min_spacing {
            space.with_constraint(Arc::new(MinSpacing { var: 0, gap: T::of(MIN_GAP_HOURS) }))
        } else {
            space
        }
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Params<T> {
        Params::interest(self.prior.iter().map(|m| T::of(m.sample(rng))).collect())
    }

    fn simulate(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Response<T>> {
        check_variables(design, 1, "compartmental")?;
        self.simulate_times(&params.theta, &Self::times(design), rng)
    }

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T> {
        self.log_likelihood_times(y, &params.theta, &Self::times(design))
    }

    fn provides_fisher_information(&self) -> bool {
        true
    }

    fn fisher_information(&self, params: &Params<T>, design: &Design<T>, _rng: &mut RngStream) -> Result<Matrix<T>> {
        check_variables(design, 1, "compartmental")?;
        self.fisher_times(&params.theta, &Self::times(design))
    }
}

/// `t_j = 24 Q(j / (n + 1); alpha_1, alpha_2)` for `j = 1..n`.
pub fn beta_drs_expand<T: Real>(alpha1: T, alpha2: T, n: usize) -> Result<Vec<T>> {
    if !(alpha1 > T::zero() && alpha2 > T::zero()) {
        return Err(AceError::Domain("Beta shape parameters must be positive".into()));
    }
    Ok(drs_quantiles(alpha1.as_f64(), alpha2.as_f64(), n)
        .into_iter()
        .map(|q| T::of(SAMPLING_HORIZON_HOURS * q))
        .collect())
}

thread_local! {
    // Likelihood loops hit the same design thousands of times in a row and
    // each quantile is a bisection, so remember the last expansion.
    static LAST_QUANTILES: std::cell::RefCell<Option<((u64, u64, usize), Vec<f64>)>> =
        const { std::cell::RefCell::new(None) };
}

fn drs_quantiles(a1: f64, a2: f64, n: usize) -> Vec<f64> {
    let key = (a1.to_bits(), a2.to_bits(), n);
    LAST_QUANTILES.with(|cell| {
        if let Some((k, q)) = cell.borrow().as_ref() {
            if *k == key {
                return q.clone();
            }
        }
        let q: Vec<f64> = (1..=n).map(|j| beta_quantile(j as f64 / (n + 1) as f64, a1, a2)).collect();
        *cell.borrow_mut() = Some((key, q.clone()));
        q
    })
}

/// Which shape parameter a DRS domain varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrsCoordinate {
    Alpha1,
    Alpha2,
}

/// Membership of `(alpha_1, alpha_2)` in the DRS coordinate domain: every
/// consecutive pair of Beta quantiles is more than `0.25 / 24` apart.
pub fn drs_domain_check<T: Real>(alpha1: T, alpha2: T, n: usize, which: DrsCoordinate) -> bool {
    let candidate = match which {
        DrsCoordinate::Alpha1 => alpha1,
        DrsCoordinate::Alpha2 => alpha2,
    };
    if !(candidate > T::zero()) || !(alpha1 > T::zero() && alpha2 > T::zero()) {
        return false;
    }
    if n < 2 {
        return true;
    }
    let q = drs_quantiles(alpha1.as_f64(), alpha2.as_f64(), n);
    q.windows(2).all(|w| (w[1] - w[0]).abs() > MIN_GAP_HOURS / SAMPLING_HORIZON_HOURS)
}

/// Restricts a two-coordinate DRS design to the spacing-feasible set.
#[derive(Debug, Clone)]
pub struct DrsConstraint {
    pub n_times: usize,
}

impl<T: Real> DesignConstraint<T> for DrsConstraint {
    fn admits(&self, design: &Design<T>) -> bool {
        design.len() == 2
            && drs_domain_check(design.coordinate(0), design.coordinate(1), self.n_times, DrsCoordinate::Alpha1)
    }

    fn admits_coordinate(&self, design: &Design<T>, i: usize, x: T) -> bool {
        let d = design.with_coordinate(i, x);
        let which = if i == 0 { DrsCoordinate::Alpha1 } else { DrsCoordinate::Alpha2 };
        drs_domain_check(d.coordinate(0), d.coordinate(1), self.n_times, which)
    }
}

/// The compartmental model with sampling times restricted to scaled Beta
/// quantiles: the design is the pair `(alpha_1, alpha_2)`.
#[derive(Debug, Clone)]
pub struct BetaDrsCompartmental {
    pub inner: Compartmental,
    pub n_times: usize,
    pub alpha_range: (f64, f64),
}

impl BetaDrsCompartmental {
    pub fn new(n_times: usize) -> Self {
        Self { inner: Compartmental::default(), n_times, alpha_range: (0.05, 5.0) }
    }

    fn times<T: Real>(&self, design: &Design<T>) -> Result<Vec<f64>> {
        if design.len() != 2 {
            return Err(AceError::InvalidArgument("a Beta DRS design has exactly two coordinates".into()));
        }
        Ok(beta_drs_expand(design.coordinate(0).as_f64(), design.coordinate(1).as_f64(), self.n_times)?)
    }
}

impl<T: Real> Model<T> for BetaDrsCompartmental {
    fn name(&self) -> &str {
        "compartmental_drs"
    }

    fn interest_dim(&self) -> usize {
        3
    }

    fn has_nuisance(&self) -> bool {
        false
    }

    fn design_space(&self) -> DesignSpace<T> {
        let (lo, hi) = self.alpha_range;
        let dom = CoordinateDomain::interval(T::of(lo), T::of(hi)).expect("valid alpha range");
        DesignSpace::new(vec![dom.clone(), dom]).with_constraint(Arc::new(DrsConstraint { n_times: self.n_times }))
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Params<T> {
        Model::<T>::sample_prior(&self.inner, rng)
    }

    fn simulate(&self, params: &Params<T>, design: &Design<T>, rng: &mut RngStream) -> Result<Response<T>> {
        self.inner.simulate_times(&params.theta, &self.times(design)?, rng)
    }

    fn log_likelihood(&self, y: &[T], params: &Params<T>, design: &Design<T>) -> Result<T> {
        self.inner.log_likelihood_times(y, &params.theta, &self.times(design)?)
    }

    fn provides_fisher_information(&self) -> bool {
        true
    }

    fn fisher_information(&self, params: &Params<T>, design: &Design<T>, _rng: &mut RngStream) -> Result<Matrix<T>> {
        self.inner.fisher_times(&params.theta, &self.times(design)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THETA: [f64; 3] = [0.1, 1.0, 20.0];

    #[test]
    fn mean_and_sd_reference_values() {
        let a = 400.0 / (20.0 * 0.9);
        assert!((scale_a(&THETA).unwrap() - 22.222_222_222_222_22).abs() < 1e-12);
        let mu = (-0.1f64).exp() - (-1.0f64).exp();
        assert!((mu - 0.536_958).abs() < 1e-6);
        let (m, sd) = compartmental_mean_sd(&THETA, 1.0).unwrap();
        assert!((m - a * mu).abs() < 1e-12);
        assert!((m - 11.932_4).abs() < 1e-3);
        assert!((sd * sd - 0.1 * (1.0 + (a * mu).powi(2) / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn long_time_limit() {
        let (m, sd) = compartmental_mean_sd(&THETA, f64::INFINITY).unwrap();
        assert_eq!(m, 0.0);
        assert!((sd * sd - 0.1).abs() < 1e-15);
        let (m, sd) = compartmental_mean_sd(&THETA, 200.0).unwrap();
        assert!(m.abs() < 1e-6 && (sd * sd - 0.1).abs() < 1e-9);
    }

    #[test]
    fn equal_rates_are_singular() {
        assert!(matches!(compartmental_mean_sd(&[0.5, 0.5, 20.0], 1.0), Err(AceError::Singular(_))));
    }

    #[test]
    fn zero_time_response_is_pure_noise() {
        let model = Compartmental::default();
        let d = Design::new(1, 1, vec![0.0_f64]).unwrap();
        let p = Params::interest(THETA.to_vec());
        let mut rng = RngStream::new(5, 0);
        let ys: Vec<f64> = (0..50_000).map(|_| model.simulate(&p, &d, &mut rng).unwrap()[0]).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        assert!(m.abs() < 3.0 * (0.1 / 50_000f64).sqrt());
        assert!((v - 0.1).abs() < 0.003);
    }

    #[test]
    fn simulation_is_reproducible_and_centred() {
        let model = Compartmental::default();
        let d = Design::new(3, 1, vec![1.0_f64, 4.0, 12.0]).unwrap();
        let p = Params::interest(THETA.to_vec());
        let a = model.simulate(&p, &d, &mut RngStream::new(8, 2)).unwrap();
        let b = model.simulate(&p, &d, &mut RngStream::new(8, 2)).unwrap();
        assert_eq!(a, b);

        let one = Design::new(1, 1, vec![1.0_f64]).unwrap();
        let (mean, sd) = compartmental_mean_sd(&THETA, 1.0).unwrap();
        let mut rng = RngStream::new(9, 0);
        let reps = 100_000;
        let m = (0..reps).map(|_| model.simulate(&p, &one, &mut rng).unwrap()[0]).sum::<f64>() / reps as f64;
        assert!((m - mean).abs() < 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn fisher_matches_finite_difference_jacobian() {
        let model = Compartmental::default();
        let times = [0.5, 2.0, 6.0, 15.0];
        let d = Design::new(4, 1, times.to_vec()).unwrap();
        let theta = [0.12, 0.9, 18.0];
        let info = model.fisher_information(&Params::interest(theta.to_vec()), &d, &mut RngStream::new(0, 0)).unwrap();
        let mean = |th: &[f64], t: f64| mean_var(th, t, 0.1).unwrap().0;
        let mut oracle = Matrix::<f64>::zeros(3, 3);
        for &t in &times {
            let grad: Vec<f64> = (0..3)
                .map(|j| {
                    let h = 1e-6 * theta[j];
                    let (mut up, mut dn) = (theta, theta);
                    up[j] += h;
                    dn[j] -= h;
                    (mean(&up, t) - mean(&dn, t)) / (2.0 * h)
                })
                .collect();
            oracle.add_outer(&grad, 1.0 / mean_var(&theta, t, 0.1).unwrap().1);
        }
        for r in 0..3 {
            for c in 0..3 {
                let rel = (info[(r, c)] - oracle[(r, c)]).abs() / oracle[(r, c)].abs().max(1e-8);
                assert!(rel < 1e-5, "({r},{c}) {} vs {}", info[(r, c)], oracle[(r, c)]);
            }
        }
    }

    #[test]
    fn uniform_drs_expansions() {
        let t = beta_drs_expand(1.0_f64, 1.0, 3).unwrap();
        for (x, e) in t.iter().zip([6.0, 12.0, 18.0]) {
            assert!((x - e).abs() < 1e-8);
        }
        assert!((beta_drs_expand(1.0_f64, 1.0, 1).unwrap()[0] - 12.0).abs() < 1e-8);
        assert!((beta_drs_expand(2.0_f64, 2.0, 1).unwrap()[0] - 12.0).abs() < 1e-8);
    }

    #[test]
    fn drs_domain_examples() {
        assert!(drs_domain_check(1.0_f64, 1.0, 3, DrsCoordinate::Alpha1));
        assert!(drs_domain_check(0.3_f64, 7.0, 1, DrsCoordinate::Alpha2));
        // Beta(50, 50) has sd ~0.05, so 18 quantiles crowd around one half.
        let q = drs_quantiles(50.0, 50.0, 18);
        let min_gap = q.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        assert!(min_gap < MIN_GAP_HOURS / SAMPLING_HORIZON_HOURS);
        assert!(!drs_domain_check(50.0_f64, 50.0, 18, DrsCoordinate::Alpha1));
        assert!(!drs_domain_check(-1.0_f64, 2.0, 3, DrsCoordinate::Alpha1));
    }

    #[test]
    fn variance_never_below_noise_floor() {
        let model = Compartmental::default();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..200 {
            let p: Params<f64> = model.sample_prior(&mut rng);
            for t in [0.0, 0.3, 1.0, 5.0, 24.0] {
                let (_, sd) = compartmental_mean_sd(&p.theta, t).unwrap();
                assert!(sd * sd >= 0.1 - 1e-15);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn drs_times_strictly_increase(a1 in 0.2f64..10.0, a2 in 0.2f64..10.0, n in 1usize..=100) {
            let t = beta_drs_expand(a1, a2, n).unwrap();
            prop_assert_eq!(t.len(), n);
            for w in t.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }
    }
}
