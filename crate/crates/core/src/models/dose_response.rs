use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::poisson_log_pmf;
use crate::error::{AceError, Result};
use crate::sampling::RngStream;
use crate::scalar::Real;
use crate::special::{logistic, normal_cdf};

/// Approximate posterior model probabilities for the beetle mortality data,
/// indexed by model `u = 1..6`.
pub const DEFAULT_MODEL_WEIGHTS: [f64; 6] = [0.0216, 0.0686, 0.7580, 0.0612, 0.0304, 0.0602];

/// Original dose range (log10 mg/L) that the coded interval `[-1, 1]` maps to.
pub const BEETLE_DOSE_RANGE: (f64, f64) = (1.6907, 1.8839);

const WEIGHT_TOL: f64 = 1e-6;

/// Affine map from the coded design scale `[-1, 1]` to the original dose scale.
pub fn to_original_dose_scale<T: Real>(coded: T) -> T {
    let (lo, hi) = BEETLE_DOSE_RANGE;
    T::of(lo + (coded.as_f64() + 1.0) * 0.5 * (hi - lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logit,
    CLogLog,
    Probit,
}

/// One of the six link-by-predictor dose-response models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoseModel {
    pub link: Link,
    pub second_order: bool,
}

impl DoseModel {
    pub fn from_index(u: usize) -> Result<Self> {
        let link = match u {
            1 | 2 => Link::Logit,
            3 | 4 => Link::CLogLog,
            5 | 6 => Link::Probit,
            _ => return Err(AceError::InvalidArgument(format!("model index {u} outside 1..6"))),
        };
        Ok(Self { link, second_order: u % 2 == 0 })
    }

    pub fn index(&self) -> usize {
        let base = match self.link {
            Link::Logit => 1,
            Link::CLogLog => 3,
            Link::Probit => 5,
        };
        base + usize::from(self.second_order)
    }

    pub fn coefficients(&self) -> usize {
        if self.second_order {
            3
        } else {
            2
        }
    }

    /// Value of the linear predictor at which the death probability is one half.
    pub fn half_point(&self) -> f64 {
        match self.link {
            Link::CLogLog => (-(0.5f64).ln()).ln(),
            _ => 0.0,
        }
    }

    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self.link {
            Link::Logit => logistic(eta),
            Link::CLogLog => -(-eta.exp()).exp_m1(),
            Link::Probit => normal_cdf(eta),
        }
    }

    pub fn linear_predictor<T: Real>(&self, beta: &[T], dose: T) -> f64 {
        let x = dose.as_f64();
        let mut eta = beta[0].as_f64() + beta[1].as_f64() * x;
        if self.second_order {
            eta += beta[2].as_f64() * x * x;
        }
        eta
    }

    pub fn death_probability<T: Real>(&self, beta: &[T], dose: T) -> f64 {
        self.inverse_link(self.linear_predictor(beta, dose))
    }
}

/// LD50 on the coded dose scale. First-order models give `(w - b0) / b1`;
/// second-order models give the `+sqrt` root of the quadratic.
pub fn ld50<T: Real>(model: DoseModel, beta: &[T]) -> Result<T> {
    if beta.len() != model.coefficients() {
        return Err(AceError::InvalidArgument(format!(
            "model {} takes {} coefficients, got {}",
            model.index(),
            model.coefficients(),
            beta.len()
        )));
    }
    let w = model.half_point();
    let (b0, b1) = (beta[0].as_f64(), beta[1].as_f64());
    let value = if model.second_order {
        let b2 = beta[2].as_f64();
        if b2 == 0.0 {
            return Err(AceError::UndefinedLd50("zero quadratic coefficient".into()));
        }
        let disc = b1 * b1 - 4.0 * b2 * (b0 - w);
        if disc < 0.0 {
            return Err(AceError::UndefinedLd50("negative discriminant".into()));
        }
        (-b1 + disc.sqrt()) / (2.0 * b2)
    } else {
        if b1 == 0.0 {
            return Err(AceError::UndefinedLd50("zero slope".into()));
        }
        (w - b0) / b1
    };
    if !value.is_finite() {
        return Err(AceError::UndefinedLd50("non-finite root".into()));
    }
    Ok(T::of(value))
}

/// Death counts `y_k ~ Poisson(lambda rho_k)` at each dose.
pub fn dose_response_simulate<T: Real>(
    model: DoseModel,
    beta: &[T],
    doses: &[T],
    lambda: T,
    rng: &mut RngStream,
) -> Vec<T> {
    doses
        .iter()
        .map(|&x| {
            let mean = lambda.as_f64() * model.death_probability(beta, x);
            if mean <= 0.0 {
                T::zero()
            } else {
                T::of(Poisson::new(mean).expect("positive mean").sample(rng))
            }
        })
        .collect()
}

pub fn dose_log_likelihood<T: Real>(model: DoseModel, beta: &[T], doses: &[T], counts: &[T], lambda: T) -> T {
    T::of(
        doses
            .iter()
            .zip(counts)
            .map(|(&x, y)| poisson_log_pmf(y.as_f64(), lambda.as_f64() * model.death_probability(beta, x)))
            .sum(),
    )
}

/// One posterior draw of a dose-response model, with its LD50.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample<T> {
    pub model: DoseModel,
    /// Coefficients on the coded dose scale.
    pub beta: Vec<T>,
    /// LD50 on the original dose scale.
    pub ld50: T,
}

/// Per-model posterior draws together with posterior model probabilities:
/// a draw from the joint posterior picks `u` by weight, then one of model
/// `u`'s samples uniformly.
#[derive(Debug, Clone)]
pub struct DoseResponsePosterior<T> {
    samples: Vec<PosteriorSample<T>>,
    by_model: [Vec<usize>; 6],
    weights: [f64; 6],
    cumulative: [f64; 6],
    pub lambda: T,
    discarded: usize,
}

impl<T: Real> DoseResponsePosterior<T> {
    /// Draws with undefined LD50 are dropped and counted. Without explicit
    /// weights, the tabulated beetle weights are renormalized over the
    /// models that have samples.
    pub fn new(draws: Vec<(DoseModel, Vec<T>)>, weights: Option<[f64; 6]>) -> Result<Self> {
        let mut samples = Vec::with_capacity(draws.len());
        let mut discarded = 0;
        for (model, beta) in draws {
            match ld50(model, &beta) {
                Ok(ld) => samples.push(PosteriorSample { model, beta, ld50: to_original_dose_scale(ld) }),
                Err(AceError::UndefinedLd50(_)) => discarded += 1,
                Err(e) => return Err(AceError::Ingestion(e.to_string())),
            }
        }
        if samples.is_empty() {
            return Err(AceError::Ingestion("posterior has no usable samples".into()));
        }
        let mut by_model: [Vec<usize>; 6] = Default::default();
        for (i, s) in samples.iter().enumerate() {
            by_model[s.model.index() - 1].push(i);
        }
        let weights = match weights {
            Some(w) => {
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(AceError::Ingestion("model weights must be non-negative".into()));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(AceError::Ingestion(format!("model weights sum to {total}, not 1")));
                }
                for u in 0..6 {
                    if w[u] > 0.0 && by_model[u].is_empty() {
                        return Err(AceError::Ingestion(format!("model {} has weight but no samples", u + 1)));
                    }
                }
                w
            }
            None => {
                let mut w = [0.0; 6];
                for u in 0..6 {
                    if !by_model[u].is_empty() {
                        w[u] = DEFAULT_MODEL_WEIGHTS[u];
                    }
                }
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                w
            }
        };
        let mut cumulative = [0.0; 6];
        let mut acc = 0.0;
        for u in 0..6 {
            acc += weights[u];
            cumulative[u] = acc;
        }
        Ok(Self { samples, by_model, weights, cumulative, lambda: T::of(60.0), discarded })
    }

    pub fn weights(&self) -> [f64; 6] {
        self.weights
    }

    pub fn samples(&self) -> &[PosteriorSample<T>] {
        &self.samples
    }

    /// Draws rejected at ingestion because LD50 was undefined.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &PosteriorSample<T> {
        let target = rng.random::<f64>() * self.cumulative[5];
        let mut u = self.cumulative.iter().position(|&c| target < c).unwrap_or(5);
        while self.by_model[u].is_empty() {
            u = (u + 5) % 6;
        }
        let members = &self.by_model[u];
        &self.samples[members[rng.random_range(0..members.len())]]
    }

    fn model_means(&self) -> [f64; 6] {
        let mut means = [0.0; 6];
        for u in 0..6 {
            let m = &self.by_model[u];
            if !m.is_empty() {
                means[u] = m.iter().map(|&i| self.samples[i].ld50.as_f64()).sum::<f64>() / m.len() as f64;
            }
        }
        means
    }

    /// Model-averaged posterior mean of LD50 under the ingested sample.
    pub fn ld50_mean(&self) -> T {
        let means = self.model_means();
        T::of((0..6).map(|u| self.weights[u] * means[u]).sum())
    }

    /// Model-averaged posterior variance of LD50 under the ingested sample.
    pub fn ld50_variance(&self) -> T {
        let overall = self.ld50_mean().as_f64();
        let mut var = 0.0;
        for u in 0..6 {
            let m = &self.by_model[u];
            if m.is_empty() {
                continue;
            }
            let ss: f64 = m.iter().map(|&i| (self.samples[i].ld50.as_f64() - overall).powi(2)).sum();
            var += self.weights[u] * ss / m.len() as f64;
        }
        T::of(var)
    }
}

fn parse_field(s: &str, what: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| AceError::Ingestion(format!("line {line}: `{s}` is not a number in column {what}")))
}

/// Parses the `u,b0,b1,b2,weight` posterior-sample schema. Rows with
/// coefficients are samples (`b2` empty for first-order models); rows with
/// only `u` and `weight` set that model's posterior probability.
pub fn parse_posterior_samples<T: Real, R: Read>(reader: R) -> Result<DoseResponsePosterior<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["u", "b0", "b1", "b2", "weight"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(AceError::Ingestion(format!("expected header `{}`", expected.join(","))));
    }
    let mut draws = Vec::new();
    let mut weights: [Option<f64>; 6] = [None; 6];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let u = rec[0]
            .parse::<usize>()
            .map_err(|_| AceError::Ingestion(format!("line {line}: bad model index `{}`", &rec[0])))?;
        let model = DoseModel::from_index(u).map_err(|e| AceError::Ingestion(format!("line {line}: {e}")))?;
        let b0 = parse_field(&rec[1], "b0", line)?;
        let b1 = parse_field(&rec[2], "b1", line)?;
        let b2 = parse_field(&rec[3], "b2", line)?;
        let w = parse_field(&rec[4], "weight", line)?;
        match (b0, b1, w) {
            (None, None, Some(w)) => {
                if b2.is_some() {
                    return Err(AceError::Ingestion(format!("line {line}: weight rows carry no coefficients")));
                }
                if weights[u - 1].replace(w).is_some() {
                    return Err(AceError::Ingestion(format!("line {line}: duplicate weight for model {u}")));
                }
            }
            (Some(b0), Some(b1), None) => {
                let mut beta = vec![T::of(b0), T::of(b1)];
                match (model.second_order, b2) {
                    (true, Some(b2)) => beta.push(T::of(b2)),
                    (false, None) => {}
                    (true, None) => return Err(AceError::Ingestion(format!("line {line}: model {u} needs b2"))),
                    (false, Some(_)) => {
                        return Err(AceError::Ingestion(format!("line {line}: model {u} is first order; leave b2 empty")))
                    }
                }
                draws.push((model, beta));
            }
            _ => return Err(AceError::Ingestion(format!("line {line}: row is neither a sample nor a weight"))),
        }
    }
    let supplied = weights.iter().any(Option::is_some);
    let weights = supplied.then(|| {
        let mut w = [0.0; 6];
        for u in 0..6 {
            w[u] = weights[u].unwrap_or(0.0);
        }
        w
    });
    DoseResponsePosterior::new(draws, weights)
}

pub fn load_posterior_samples<T: Real>(path: impl AsRef<Path>) -> Result<DoseResponsePosterior<T>> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| AceError::Ingestion(format!("{}: {e}", path.as_ref().display())))?;
    parse_posterior_samples(file)
}

/// One group of the original dose-mortality data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
pub struct DoseObservation {
    pub dose: f64,
    pub n: u32,
    pub deaths: u32,
}

/// Reads the `dose,n,deaths` schema.
pub fn load_dose_data(path: impl AsRef<Path>) -> Result<Vec<DoseObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows: Vec<DoseObservation> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.deaths > r.n) {
        return Err(AceError::Ingestion(format!("more deaths than subjects at dose {}", bad.dose)));
    }
    Ok(rows)
}
