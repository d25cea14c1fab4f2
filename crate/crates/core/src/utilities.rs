//! Monte Carlo approximations of expected utilities. Every estimator returns
//! the per-outer-sample values so that callers can form the pooled-variance
//! comparison used by the acceptance test.

use std::sync::Arc;

use rayon::prelude::*;

use crate::design::Design;
use crate::error::{AceError, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::models::{dose_log_likelihood, dose_response_simulate, DoseResponsePosterior, Model, Params};
use crate::sampling::RngStream;
use crate::scalar::{log_mean_exp, log_sum_exp, mean, sample_variance, Real};

/// Parameter draws rejected in a row before a singular-information error.
pub const MAX_INFO_RESAMPLES: usize = 100;

/// Per-outer-sample utility values at a single design.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySampleBatch<T> {
    pub values: Vec<T>,
    pub mean: T,
    /// Parameter draws rejected because the information matrix was singular.
    pub rejected: usize,
}

impl<T: Real> UtilitySampleBatch<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        let mean = mean(&values);
        Self { values, mean, rejected: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn variance(&self) -> T {
        sample_variance(&self.values)
    }

    pub fn standard_error(&self) -> T {
        (self.variance() / T::of_usize(self.len())).sqrt()
    }
}

/// Outer (`B`) and inner (`B~`) sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NestedMcConfig {
    pub outer: usize,
    pub inner: usize,
}

impl NestedMcConfig {
    pub fn new(outer: usize, inner: usize) -> Result<Self> {
        let cfg = Self { outer, inner };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer < 2 {
            return Err(AceError::InvalidArgument(format!("outer sample size {} < 2", self.outer)));
        }
        if self.inner < 1 {
            return Err(AceError::InvalidArgument("inner sample size must be positive".into()));
        }
        Ok(())
    }
}

/// An expected-utility estimator. Larger is better for every implementation.
pub trait Utility<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the estimate uses the inner sample size.
    fn is_nested(&self) -> bool {
        false
    }

    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>>;
}

/// Runs `f` once per outer index on its own substream and collects in index order.
fn outer_loop<U, F>(count: usize, rng: &mut RngStream, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(&mut RngStream) -> Result<U> + Sync + Send,
{
    let base = rng.fork_seed();
    (0..count)
        .into_par_iter()
        .map(|l| {
            let mut sub = RngStream::new(base, l as u64);
            f(&mut sub)
        })
        .collect()
}

fn degenerate(what: &str) -> AceError {
    AceError::DegenerateWeights(format!("every inner likelihood underflowed in the {what}"))
}

/// Self-normalized weights from log weights.
fn normalized_weights<T: Real>(log_w: &[T]) -> Option<Vec<T>> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    Some(log_w.iter().map(|&w| (w - lse).exp()).collect())
}

/// Nested Monte Carlo estimate of the expected Shannon information gain on `theta`.
pub fn sig_nested<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    cfg: NestedMcConfig,
    rng: &mut RngStream,
) -> Result<UtilitySampleBatch<T>> {
    cfg.validate()?;
    let values = outer_loop(cfg.outer, rng, |r| {
        let psi = model.sample_prior(r);
        let y = model.simulate(&psi, design, r)?;
        let mut marginal = Vec::with_capacity(cfg.inner);
        let mut conditional = Vec::with_capacity(if model.has_nuisance() { cfg.inner } else { 0 });
        for _ in 0..cfg.inner {
            let inner = model.sample_prior(r);
            marginal.push(model.log_likelihood(&y, &inner, design)?);
            if model.has_nuisance() {
                let held = Params::new(psi.theta.clone(), inner.gamma);
                conditional.push(model.log_likelihood(&y, &held, design)?);
            }
        }
        let log_marginal = log_mean_exp(&marginal);
        if !log_marginal.is_finite() {
            return Err(degenerate("marginal likelihood"));
        }
        let log_conditional = if model.has_nuisance() {
            log_mean_exp(&conditional)
        } else {
            model.log_likelihood(&y, &psi, design)?
        };
        if !log_conditional.is_finite() {
            return Err(degenerate("conditional likelihood"));
        }
        Ok(log_conditional - log_marginal)
    })?;
    Ok(UtilitySampleBatch::from_values(values))
}

/// Self-normalized importance-sampling posterior mean of `theta` from `count`
/// fresh prior draws.
pub fn importance_posterior_mean<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &[T],
    design: &Design<T>,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    let mut draws = Vec::with_capacity(count);
    let mut log_w = Vec::with_capacity(count);
    for _ in 0..count {
        let psi = model.sample_prior(rng);
        log_w.push(model.log_likelihood(y, &psi, design)?);
        draws.push(psi.theta);
    }
    let w = normalized_weights(&log_w).ok_or_else(|| degenerate("importance weights"))?;
    let p = model.interest_dim();
    let mut post = vec![T::zero(); p];
    for (theta, &wb) in draws.iter().zip(&w) {
        for (acc, &t) in post.iter_mut().zip(theta) {
            *acc = *acc + wb * t;
        }
    }
    Ok(post)
}

/// Nested Monte Carlo estimate of the negative squared error loss on `theta`.
pub fn nsel_nested<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    cfg: NestedMcConfig,
    rng: &mut RngStream,
) -> Result<UtilitySampleBatch<T>> {
    cfg.validate()?;
    let values = outer_loop(cfg.outer, rng, |r| {
        let psi = model.sample_prior(r);
        let y = model.simulate(&psi, design, r)?;
        let post = importance_posterior_mean(model, &y, design, cfg.inner, r)?;
        Ok(-psi.theta.iter().zip(&post).map(|(&t, &e)| (t - e) * (t - e)).fold(T::zero(), |a, b| a + b))
    })?;
    Ok(UtilitySampleBatch::from_values(values))
}

/// Draws parameters until the information is positive definite, returning
/// the functional of the factor and the number of rejected draws.
fn information_draw<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    rng: &mut RngStream,
    f: impl Fn(&Cholesky<T>) -> T,
) -> Result<(T, usize)> {
    for rejected in 0..=MAX_INFO_RESAMPLES {
        let psi = model.sample_prior(rng);
        let info = model.fisher_information(&psi, design, rng)?;
        if let Some(value) = Cholesky::new(&info).map(|c| f(&c)).filter(|v| v.is_finite()) {
            return Ok((value, rejected));
        }
    }
    Err(AceError::SingularInformation(MAX_INFO_RESAMPLES))
}

fn information_batch<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    outer: usize,
    rng: &mut RngStream,
    f: impl Fn(&Cholesky<T>) -> T + Sync + Send,
) -> Result<UtilitySampleBatch<T>> {
    if !model.provides_fisher_information() {
        return Err(AceError::Unsupported { model: model.name().to_string(), capability: "Fisher information" });
    }
    if outer < 1 {
        return Err(AceError::InvalidArgument("sample size must be positive".into()));
    }
    let draws = outer_loop(outer, rng, |r| information_draw(model, design, r, &f))?;
    let rejected = draws.iter().map(|d| d.1).sum();
    let mut batch = UtilitySampleBatch::from_values(draws.into_iter().map(|d| d.0).collect());
    batch.rejected = rejected;
    if rejected > 0 {
        log::debug!("{rejected} parameter draws rejected for singular information");
    }
    Ok(batch)
}

/// Monte Carlo estimate of the prior expected log-determinant of the information.
pub fn pseudo_bayes_d<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    outer: usize,
    rng: &mut RngStream,
) -> Result<UtilitySampleBatch<T>> {
    information_batch(model, design, outer, rng, |c| c.log_det())
}

/// Monte Carlo estimate of minus the prior expected trace of the inverse information.
pub fn pseudo_bayes_a<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    design: &Design<T>,
    outer: usize,
    rng: &mut RngStream,
) -> Result<UtilitySampleBatch<T>> {
    information_batch(model, design, outer, rng, |c| -c.inverse().trace())
}

/// Pseudo-Bayesian D-efficiency of `first` relative to `second`.
#[derive(Debug, Clone, PartialEq)]
pub struct DEfficiency<T> {
    pub percent: T,
    pub first: UtilitySampleBatch<T>,
    pub second: UtilitySampleBatch<T>,
}

/// D-efficiency with both designs evaluated on one shared prior sample.
/// A draw singular for either design is rejected for both.
pub fn d_efficiency<T: Real, M: Model<T> + ?Sized>(
    first: &Design<T>,
    second: &Design<T>,
    model: &M,
    p: usize,
    outer: usize,
    rng: &mut RngStream,
) -> Result<DEfficiency<T>> {
    if !model.provides_fisher_information() {
        return Err(AceError::Unsupported { model: model.name().to_string(), capability: "Fisher information" });
    }
    if p == 0 || outer == 0 {
        return Err(AceError::InvalidArgument("p and the sample size must be positive".into()));
    }
    let log_det = |info: Matrix<T>| Cholesky::new(&info).map(|c| c.log_det()).filter(|v| v.is_finite());
    let pairs = outer_loop(outer, rng, |r| {
        for rejected in 0..=MAX_INFO_RESAMPLES {
            let psi = model.sample_prior(r);
            let seed = r.fork_seed();
            let a = log_det(model.fisher_information(&psi, first, &mut RngStream::new(seed, 0))?);
            let b = log_det(model.fisher_information(&psi, second, &mut RngStream::new(seed, 0))?);
            if let (Some(a), Some(b)) = (a, b) {
                return Ok((a, b, rejected));
            }
        }
        Err(AceError::SingularInformation(MAX_INFO_RESAMPLES))
    })?;
    let rejected = pairs.iter().map(|x| x.2).sum();
    let mut first = UtilitySampleBatch::from_values(pairs.iter().map(|x| x.0).collect());
    let mut second = UtilitySampleBatch::from_values(pairs.iter().map(|x| x.1).collect());
    first.rejected = rejected;
    second.rejected = rejected;
    let percent = T::of(100.0) * ((first.mean - second.mean) / T::of_usize(p)).exp();
    Ok(DEfficiency { percent, first, second })
}

/// Model-averaged negative squared error loss for LD50 (original dose scale)
/// after observing new counts at the design's doses. The importance proposal is one fixed set of
/// `B~` posterior draws shared by all outer iterations.
pub fn nsel_ld50_model_averaged<T: Real>(
    posterior: &DoseResponsePosterior<T>,
    design: &Design<T>,
    cfg: NestedMcConfig,
    rng: &mut RngStream,
) -> Result<UtilitySampleBatch<T>> {
    cfg.validate()?;
    if design.variables() != 1 {
        return Err(AceError::InvalidArgument("dose designs have a single variable".into()));
    }
    let doses = design.column(0);
    if let Some(x) = doses.iter().find(|x| x.abs() > T::one()) {
        return Err(AceError::Domain(format!("coded dose {x} outside [-1, 1]")));
    }
    if doses.is_empty() {
        // Nothing is observed, so the posterior mean of LD50 is the current one
        // and the expected loss is the current posterior variance.
        let v = -posterior.ld50_variance();
        return Ok(UtilitySampleBatch::from_values(vec![v; cfg.outer]));
    }
    let proposal: Vec<_> = (0..cfg.inner).map(|_| posterior.draw(rng).clone()).collect();
    let lambda = posterior.lambda;
    let values = outer_loop(cfg.outer, rng, |r| {
        let truth = posterior.draw(r);
        let y0 = dose_response_simulate(truth.model, &truth.beta, doses, lambda, r);
        let log_w: Vec<T> =
            proposal.iter().map(|s| dose_log_likelihood(s.model, &s.beta, doses, &y0, lambda)).collect();
        let w = normalized_weights(&log_w).ok_or_else(|| degenerate("LD50 importance weights"))?;
        let est = proposal.iter().zip(&w).fold(T::zero(), |acc, (s, &wb)| acc + wb * s.ld50);
        let err = truth.ld50 - est;
        Ok(-err * err)
    })?;
    Ok(UtilitySampleBatch::from_values(values))
}

/// Shannon information gain on `theta`.
#[derive(Clone)]
pub struct Sig<T> {
    pub model: Arc<dyn Model<T>>,
}

/// Negative squared error loss on `theta`.
#[derive(Clone)]
pub struct Nsel<T> {
    pub model: Arc<dyn Model<T>>,
}

/// Pseudo-Bayesian D-optimality.
#[derive(Clone)]
pub struct PseudoD<T> {
    pub model: Arc<dyn Model<T>>,
}

/// Pseudo-Bayesian A-optimality.
#[derive(Clone)]
pub struct PseudoA<T> {
    pub model: Arc<dyn Model<T>>,
}

/// Model-averaged negative squared error loss for LD50.
#[derive(Clone)]
pub struct NselLd50<T> {
    pub posterior: Arc<DoseResponsePosterior<T>>,
}

impl<T: Real> Utility<T> for Sig<T> {
    fn name(&self) -> &str {
        "sig"
    }
    fn is_nested(&self) -> bool {
        true
    }
    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>> {
        sig_nested(self.model.as_ref(), design, cfg, rng)
    }
}

impl<T: Real> Utility<T> for Nsel<T> {
    fn name(&self) -> &str {
        "nsel"
    }
    fn is_nested(&self) -> bool {
        true
    }
    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>> {
        nsel_nested(self.model.as_ref(), design, cfg, rng)
    }
}

impl<T: Real> Utility<T> for PseudoD<T> {
    fn name(&self) -> &str {
        "pseudo_d"
    }
    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>> {
        pseudo_bayes_d(self.model.as_ref(), design, cfg.outer, rng)
    }
}

impl<T: Real> Utility<T> for PseudoA<T> {
    fn name(&self) -> &str {
        "pseudo_a"
    }
    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>> {
        pseudo_bayes_a(self.model.as_ref(), design, cfg.outer, rng)
    }
}

impl<T: Real> Utility<T> for NselLd50<T> {
    fn name(&self) -> &str {
        "nsel_ld50"
    }
    fn is_nested(&self) -> bool {
        true
    }
    fn evaluate(&self, design: &Design<T>, cfg: NestedMcConfig, rng: &mut RngStream) -> Result<UtilitySampleBatch<T>> {
        nsel_ld50_model_averaged(&self.posterior, design, cfg, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{parse_posterior_samples, Logistic, NormalLocation, PoissonToy};
    use crate::sampling::{lhs_random_design, Marginal};

    fn cfg(outer: usize, inner: usize) -> NestedMcConfig {
        NestedMcConfig::new(outer, inner).unwrap()
    }

    fn point_normal() -> NormalLocation {
        NormalLocation { prior: Marginal::PointMass { value: 0.7 }, ..NormalLocation::standard() }
    }

    #[test]
    fn batch_mean_is_average() {
        let b = UtilitySampleBatch::from_values(vec![1.0_f64, 2.0, 4.5]);
        assert!((b.mean - 7.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn config_requires_two_outer_samples() {
        assert!(NestedMcConfig::new(1, 5).is_err());
        assert!(NestedMcConfig::new(2, 0).is_err());
    }

    #[test]
    fn point_prior_sig_and_nsel_are_zero() {
        let d = Design::new(3, 1, vec![0.0_f64; 3]).unwrap();
        let mut rng = RngStream::new(2, 0);
        let s = sig_nested(&point_normal(), &d, cfg(50, 20), &mut rng).unwrap();
        assert!(s.values.iter().all(|&v| v.abs() < 1e-12));
        let n = nsel_nested(&point_normal(), &d, cfg(50, 20), &mut rng).unwrap();
        assert!(n.values.iter().all(|&v| v.abs() < 1e-24));
    }

    #[test]
    fn single_inner_draw_is_its_own_posterior_mean() {
        let model = NormalLocation::standard();
        let d = Design::new(2, 1, vec![0.0; 2]).unwrap();
        let mut a = RngStream::new(9, 1);
        let mut b = a.clone();
        let est = importance_posterior_mean(&model, &[3.0, 2.5], &d, 1, &mut a).unwrap();
        let direct = <NormalLocation as Model<f64>>::sample_prior(&model, &mut b);
        assert_eq!(est, direct.theta);
    }

    #[test]
    fn conjugate_normal_oracles_at_moderate_size() {
        let model = NormalLocation::standard();
        let mut rng = RngStream::new(5, 0);
        let one = Design::new(1, 1, vec![0.0_f64]).unwrap();
        let s = sig_nested(&model, &one, cfg(4000, 4000), &mut rng).unwrap();
        assert!((s.mean - 0.5 * 2f64.ln()).abs() < 0.02, "{}", s.mean);
        let three = Design::new(3, 1, vec![0.0_f64; 3]).unwrap();
        let n = nsel_nested(&model, &three, cfg(4000, 4000), &mut rng).unwrap();
        assert!((n.mean + 0.25).abs() < 0.02, "{}", n.mean);
    }

    #[test]
    fn outer_loop_is_thread_count_independent() {
        let model = NormalLocation::standard();
        let d = Design::new(2, 1, vec![0.0; 2]).unwrap();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| sig_nested(&model, &d, cfg(64, 16), &mut RngStream::new(11, 3)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn poisson_log_information_matches_closed_form() {
        let model = PoissonToy::default();
        let d = Design::new(1, 1, vec![1.0_f64]).unwrap();
        let b = pseudo_bayes_d(&model, &d, 20_000, &mut RngStream::new(3, 0)).unwrap();
        assert!((b.mean - 0.5).abs() < 3.0 * b.standard_error());
    }

    #[test]
    fn poisson_point_prior_a_value() {
        let model = PoissonToy::with_point_prior(0.5);
        let d = Design::new(1, 1, vec![1.0]).unwrap();
        let b = pseudo_bayes_a(&model, &d, 10, &mut RngStream::new(3, 0)).unwrap();
        assert!(b.values.iter().all(|&v| (v + (-0.5f64).exp()).abs() < 1e-12));
        assert!(b.variance() < 1e-28);
        let two = Design::new(2, 1, vec![1.0, 1.0]).unwrap();
        let half = pseudo_bayes_a(&model, &two, 10, &mut RngStream::new(3, 0)).unwrap();
        assert!((half.mean - 0.5 * b.mean).abs() < 1e-12);
    }

    #[test]
    fn singular_information_is_rejected_then_errors() {
        let model = PoissonToy::default();
        let zero = Design::new(1, 1, vec![0.0]).unwrap();
        assert!(matches!(
            pseudo_bayes_d(&model, &zero, 5, &mut RngStream::new(0, 0)),
            Err(AceError::SingularInformation(_))
        ));
    }

    #[test]
    fn doubling_logistic_design_adds_p_log_two() {
        let model = Logistic::default();
        let mut rng = RngStream::new(7, 0);
        let d = lhs_random_design(12, 4, &Model::<f64>::design_space(&model).domains, &mut rng).unwrap();
        let eff = d_efficiency(&d.doubled(), &d, &model, 5, 200, &mut rng).unwrap();
        let gap: Vec<f64> = eff.first.values.iter().zip(&eff.second.values).map(|(a, b)| a - b).collect();
        assert!(gap.iter().all(|g| (g - 5.0 * 2f64.ln()).abs() < 1e-9));
        assert!((eff.percent - 200.0).abs() < 1e-8);
    }

    #[test]
    fn efficiency_identity_and_antisymmetry() {
        let model = Logistic::default();
        let mut rng = RngStream::new(8, 0);
        let space = Model::<f64>::design_space(&model);
        let a = lhs_random_design(10, 4, &space.domains, &mut rng).unwrap();
        let b = lhs_random_design(10, 4, &space.domains, &mut rng).unwrap();
        let same = d_efficiency(&a, &a, &model, 5, 100, &mut RngStream::new(1, 0)).unwrap();
        assert!((same.percent - 100.0).abs() < 1e-10);
        let ab = d_efficiency(&a, &b, &model, 5, 100, &mut RngStream::new(1, 0)).unwrap();
        let ba = d_efficiency(&b, &a, &model, 5, 100, &mut RngStream::new(1, 0)).unwrap();
        assert!((ab.percent * ba.percent - 1e4).abs() < 1e-6);
    }

    fn toy_posterior() -> DoseResponsePosterior<f64> {
        let csv = "u,b0,b1,b2,weight\n1,0.2,4.0,,\n1,0.5,5.0,,\n1,-0.1,3.5,,\n3,0.1,2.0,,\n3,0.0,2.5,,\n";
        parse_posterior_samples(csv.as_bytes()).unwrap()
    }

    #[test]
    fn empty_dose_design_gives_minus_posterior_variance() {
        let post = toy_posterior();
        let b = nsel_ld50_model_averaged(&post, &Design::empty(1), cfg(10, 10), &mut RngStream::new(0, 0)).unwrap();
        assert!((b.mean + post.ld50_variance()).abs() < 1e-15);
    }

    #[test]
    fn collapsed_posterior_has_zero_loss() {
        let post: DoseResponsePosterior<f64> =
            parse_posterior_samples("u,b0,b1,b2,weight\n2,0.1,3.0,0.4,\n".as_bytes()).unwrap();
        let d = Design::new(2, 1, vec![-0.3, 0.6]).unwrap();
        let b = nsel_ld50_model_averaged(&post, &d, cfg(20, 10), &mut RngStream::new(0, 0)).unwrap();
        assert!(b.values.iter().all(|&v| v.abs() < 1e-24));
    }

    #[test]
    fn uninformative_doses_leave_variance_unchanged() {
        // Every draw has death probability almost exactly one at these doses.
        let csv = "u,b0,b1,b2,weight\n1,40.0,4.0,,\n1,44.0,5.0,,\n1,38.0,3.5,,\n1,41.0,4.5,,\n";
        let post: DoseResponsePosterior<f64> = parse_posterior_samples(csv.as_bytes()).unwrap();
        let d = Design::new(1, 1, vec![1.0]).unwrap();
        let b = nsel_ld50_model_averaged(&post, &d, cfg(4000, 2000), &mut RngStream::new(4, 0)).unwrap();
        let v = post.ld50_variance();
        assert!((b.mean + v).abs() < 0.1 * v, "{} vs {}", b.mean, -v);
    }

    #[test]
    fn dose_outside_coded_range_is_rejected() {
        let d = Design::new(1, 1, vec![1.5]).unwrap();
        assert!(nsel_ld50_model_averaged(&toy_posterior(), &d, cfg(4, 4), &mut RngStream::new(0, 0)).is_err());
    }
}
