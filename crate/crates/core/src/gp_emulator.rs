//! One-dimensional Gaussian-process smoothing of noisy utility evaluations
//! along a single design coordinate.

use crate::design::CoordinateDomain;
use crate::error::{invalid, AceError, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::sampling::RngStream;
use crate::scalar::{mean, sample_variance, Real};

pub const LOG_RHO_BOUNDS: (f64, f64) = (-10.0, 15.0);
pub const LOG_ETA_BOUNDS: (f64, f64) = (-10.0, 5.0);
pub const MAX_SCORING_ITERATIONS: usize = 50;
const LOG_ETA_STARTS: [f64; 3] = [-4.0, -1.0, 1.0];
const DIAGONAL_BOOST: f64 = 1e-10;
const MAX_HALVINGS: usize = 30;
const SCORE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const POLISH_ITERATIONS: usize = 20;

/// Sample mean, sample standard deviation (divisor `m - 1`) and standardized values.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<T> {
    pub mean: T,
    pub sd: T,
    pub z: Vec<T>,
}

impl<T: Real> Standardized<T> {
    pub fn restore(&self) -> Vec<T> {
        self.z.iter().map(|&z| self.mean + self.sd * z).collect()
    }
}

pub fn standardize<T: Real>(values: &[T]) -> Result<Standardized<T>> {
    if values.len() < 2 {
        return invalid("standardizing needs at least two values");
    }
    let mu = mean(values);
    let sd = sample_variance(values).sqrt();
    if !(sd > T::zero()) || values.iter().all(|&v| v == values[0]) {
        return Err(AceError::ConstantResponse);
    }
    let z = values.iter().map(|&v| (v - mu) / sd).collect();
    Ok(Standardized { mean: mu, sd, z })
}

fn correlation(points: &[f64], rho: f64, eta: f64) -> Matrix<f64> {
    let m = points.len();
    Matrix::from_fn(m, m, |s, t| {
        if s == t {
            1.0 + eta
        } else {
            (-rho * (points[s] - points[t]).powi(2)).exp()
        }
    })
}

/// Factorizes, retrying once with a small diagonal boost.
fn factorize<T: Real>(a: &Matrix<T>) -> Option<Cholesky<T>> {
    Cholesky::new(a).or_else(|| {
        let mut boosted = a.clone();
        for i in 0..a.rows() {
            boosted[(i, i)] = boosted[(i, i)] + T::of(DIAGONAL_BOOST);
        }
        Cholesky::new(&boosted)
    })
}

/// Zero-mean GP log-likelihood without the constant term, in log parameters.
pub fn gp_log_likelihood(points: &[f64], z: &[f64], log_rho: f64, log_eta: f64) -> f64 {
    let a = correlation(points, log_rho.exp(), log_eta.exp());
    match factorize(&a) {
        Some(c) => {
            let alpha = c.solve(z);
            -0.5 * c.log_det() - 0.5 * z.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()
        }
        None => f64::NEG_INFINITY,
    }
}

fn clip(x: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(LOG_RHO_BOUNDS.0, LOG_RHO_BOUNDS.1), x[1].clamp(LOG_ETA_BOUNDS.0, LOG_ETA_BOUNDS.1)]
}

fn trace_product(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Score vector and expected information in `(log rho, log eta)`.
fn score_and_information(points: &[f64], z: &[f64], x: [f64; 2]) -> Option<([f64; 2], [[f64; 2]; 2])> {
    let (rho, eta) = (x[0].exp(), x[1].exp());
    let m = points.len();
    let a = correlation(points, rho, eta);
    let c = factorize(&a)?;
    let inv = c.inverse();
    let alpha = c.solve(z);
    let d_rho = Matrix::from_fn(m, m, |s, t| {
        let d2 = (points[s] - points[t]).powi(2);
        -rho * d2 * (-rho * d2).exp()
    });
    let p_rho = inv.matmul(&d_rho);
    let d_rho_alpha = d_rho.mul_vec(&alpha);
    let quad_rho: f64 = alpha.iter().zip(&d_rho_alpha).map(|(a, b)| a * b).sum();
    let quad_eta: f64 = eta * alpha.iter().map(|a| a * a).sum::<f64>();
    let score = [-0.5 * p_rho.trace() + 0.5 * quad_rho, -0.5 * eta * inv.trace() + 0.5 * quad_eta];
    let f_rr = 0.5 * trace_product(&p_rho, &p_rho);
    let f_re = 0.5 * eta * trace_product(&p_rho, &inv);
    let f_ee = 0.5 * eta * eta * trace_product(&inv, &inv);
    Some((score, [[f_rr, f_re], [f_re, f_ee]]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub log_rho: f64,
    pub log_eta: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn fisher_scoring(points: &[f64], z: &[f64], start: [f64; 2]) -> Hyperparams {
    let mut x = clip(start);
    let mut ll = gp_log_likelihood(points, z, x[0], x[1]);
    let mut converged = false;
    for _ in 0..MAX_SCORING_ITERATIONS {
        let Some((s, f)) = score_and_information(points, z, x) else { break };
        if s[0].hypot(s[1]) < SCORE_TOL {
            converged = true;
            break;
        }
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        let step = if det.abs() > 1e-12 * (f[0][0] * f[1][1]).abs().max(1e-300) && det.is_finite() {
            [(f[1][1] * s[0] - f[0][1] * s[1]) / det, (f[0][0] * s[1] - f[1][0] * s[0]) / det]
        } else {
            s
        };
        if !(step[0].is_finite() && step[1].is_finite()) {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..MAX_HALVINGS {
            let cand = clip([x[0] + t * step[0], x[1] + t * step[1]]);
            let cll = gp_log_likelihood(points, z, cand[0], cand[1]);
            if cll > ll {
                let delta = (cand[0] - x[0]).hypot(cand[1] - x[1]);
                x = cand;
                ll = cll;
                moved = true;
                if delta < STEP_TOL {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !moved {
            converged = true;
        }
        if converged {
            break;
        }
    }
    Hyperparams { log_rho: x[0], log_eta: x[1], log_likelihood: ll, converged }
}

fn score(points: &[f64], z: &[f64], x: [f64; 2]) -> Option<[f64; 2]> {
    score_and_information(points, z, x).map(|(s, _)| s)
}

/// Newton steps on the analytic score with a central-difference Hessian.
/// The likelihood is flat to rounding error near its maximum, so these steps
/// are judged by the score norm rather than by likelihood values.
fn newton_polish(points: &[f64], z: &[f64], h: Hyperparams) -> Hyperparams {
    let mut x = [h.log_rho, h.log_eta];
    let interior = |x: [f64; 2]| {
        x[0] > LOG_RHO_BOUNDS.0 && x[0] < LOG_RHO_BOUNDS.1 && x[1] > LOG_ETA_BOUNDS.0 && x[1] < LOG_ETA_BOUNDS.1
    };
    if !interior(x) {
        return h;
    }
    let Some(mut s) = score(points, z, x) else { return h };
    let mut converged = h.converged;
    for _ in 0..POLISH_ITERATIONS {
        let norm = s[0].hypot(s[1]);
        if norm < SCORE_TOL {
            converged = true;
            break;
        }
        let eps = 1e-5;
        let mut hess = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[j] += eps;
            dn[j] -= eps;
            let (Some(su), Some(sd)) = (score(points, z, up), score(points, z, dn)) else { return h };
            for i in 0..2 {
                hess[i][j] = (su[i] - sd[i]) / (2.0 * eps);
            }
        }
        let off = 0.5 * (hess[0][1] + hess[1][0]);
        let det = hess[0][0] * hess[1][1] - off * off;
        // Only a negative definite Hessian gives an ascent direction.
        if !(hess[0][0] < 0.0 && det > 0.0) {
            break;
        }
        let step = [-(hess[1][1] * s[0] - off * s[1]) / det, -(hess[0][0] * s[1] - off * s[0]) / det];
        let cand = [x[0] + step[0], x[1] + step[1]];
        if !interior(cand) || step[0].hypot(step[1]) > 0.1 {
            break;
        }
        let Some(cs) = score(points, z, cand) else { break };
        if cs[0].hypot(cs[1]) >= norm {
            break;
        }
        x = cand;
        s = cs;
    }
    let ll = gp_log_likelihood(points, z, x[0], x[1]);
    if ll < h.log_likelihood - 1e-9 * (1.0 + h.log_likelihood.abs()) {
        return h;
    }
    Hyperparams { log_rho: x[0], log_eta: x[1], log_likelihood: ll, converged }
}

fn median_distance_log_rho(points: &[f64]) -> f64 {
    let mut d2: Vec<f64> = Vec::new();
    for s in 0..points.len() {
        for t in s + 1..points.len() {
            d2.push((points[s] - points[t]).powi(2));
        }
    }
    d2.sort_by(|a, b| a.total_cmp(b));
    let med = d2.get(d2.len() / 2).copied().filter(|&d| d > 0.0).unwrap_or(1.0);
    (1.0 / med).ln()
}

/// Maximum-likelihood `(log rho, log eta)` by Fisher scoring from several
/// starts: the median-distance lengthscale at three nugget levels, and the
/// best point of a coarse scan of the bounded parameter box. The best result
/// is refined by a few Newton steps on the score.
pub fn fit_hyperparams<T: Real>(points: &[T], z: &[T]) -> Result<Hyperparams> {
    if points.len() < 3 || points.len() != z.len() {
        return invalid("hyperparameter fitting needs at least three points with values");
    }
    let xs: Vec<f64> = points.iter().map(|p| p.as_f64()).collect();
    let zs: Vec<f64> = z.iter().map(|p| p.as_f64()).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return invalid("coordinate-design points must be distinct");
    }
    let rho0 = median_distance_log_rho(&xs);
    let mut starts: Vec<[f64; 2]> = LOG_ETA_STARTS.iter().map(|&e| [rho0, e]).collect();
    let mut best_scan = ([rho0, LOG_ETA_STARTS[0]], f64::NEG_INFINITY);
    let mut lr = LOG_RHO_BOUNDS.0;
    while lr <= LOG_RHO_BOUNDS.1 {
        let mut le = LOG_ETA_BOUNDS.0;
        while le <= LOG_ETA_BOUNDS.1 {
            let ll = gp_log_likelihood(&xs, &zs, lr, le);
            if ll > best_scan.1 {
                best_scan = ([lr, le], ll);
            }
            le += 1.0;
        }
        lr += 1.0;
    }
    starts.push(best_scan.0);
    let mut best: Option<Hyperparams> = None;
    for s in starts {
        let h = fisher_scoring(&xs, &zs, s);
        if best.is_none_or(|b| h.log_likelihood > b.log_likelihood) {
            best = Some(h);
        }
    }
    let best = newton_polish(&xs, &zs, best.expect("at least one start"));
    if !best.converged {
        log::debug!("Fisher scoring stopped after {MAX_SCORING_ITERATIONS} iterations without converging");
    }
    Ok(best)
}

/// A fitted emulator: the posterior predictive mean of the standardized
/// utility given the coordinate design.
#[derive(Debug, Clone)]
pub struct EmulatorFit<T> {
    pub points: Vec<T>,
    pub mean: T,
    pub sd: T,
    pub z: Vec<T>,
    pub rho: T,
    pub eta: T,
    pub log_likelihood: f64,
    pub converged: bool,
    weights: Vec<T>,
}

impl<T: Real> EmulatorFit<T> {
    /// Standardizes the values and fits the hyperparameters by maximum likelihood.
    pub fn fit(points: &[T], values: &[T]) -> Result<Self> {
        let st = standardize(values)?;
        let h = fit_hyperparams(points, &st.z)?;
        let mut fit = Self::assemble(points, st, T::of(h.log_rho.exp()), T::of(h.log_eta.exp()))?;
        fit.log_likelihood = h.log_likelihood;
        fit.converged = h.converged;
        Ok(fit)
    }

    /// Emulator with the given hyperparameters instead of their estimates.
    pub fn with_hyperparams(points: &[T], values: &[T], rho: T, eta: T) -> Result<Self> {
        if !(rho > T::zero() && eta > T::zero()) {
            return invalid("rho and eta must be positive");
        }
        let st = standardize(values)?;
        Self::assemble(points, st, rho, eta)
    }

    fn assemble(points: &[T], st: Standardized<T>, rho: T, eta: T) -> Result<Self> {
        if points.len() != st.z.len() {
            return invalid("one value per point required");
        }
        let a = Matrix::from_fn(points.len(), points.len(), |s, t| {
            if s == t {
                T::one() + eta
            } else {
                (-rho * (points[s] - points[t]).powi(2)).exp()
            }
        });
        let chol = factorize(&a).ok_or_else(|| AceError::Singular("emulator correlation matrix".into()))?;
        let weights = chol.solve(&st.z);
        let ll = -0.5 * chol.log_det().as_f64()
            - 0.5 * st.z.iter().zip(&weights).map(|(a, b)| (*a * *b).as_f64()).sum::<f64>();
        Ok(Self {
            points: points.to_vec(),
            mean: st.mean,
            sd: st.sd,
            z: st.z,
            rho,
            eta,
            log_likelihood: ll,
            converged: true,
            weights,
        })
    }

    /// Correlation matrix `A` at the fitted hyperparameters.
    pub fn correlation_matrix(&self) -> Matrix<T> {
        let m = self.points.len();
        Matrix::from_fn(m, m, |s, t| {
            if s == t {
                T::one() + self.eta
            } else {
                (-self.rho * (self.points[s] - self.points[t]).powi(2)).exp()
            }
        })
    }

    pub fn predict_mean(&self, x: T) -> T {
        let mut s = T::zero();
        for (&p, &w) in self.points.iter().zip(&self.weights) {
            s = s + (-self.rho * (p - x).powi(2)).exp() * w;
        }
        self.mean + self.sd * s
    }
}

/// Maximizes the emulator over candidates from `domain` that satisfy
/// `admits`. Intervals are searched with `n_grid` uniform draws; finite grids
/// are searched exhaustively. Ties go to the first candidate.
pub fn maximize_on_grid<T: Real>(
    fit: &EmulatorFit<T>,
    domain: &CoordinateDomain<T>,
    admits: impl Fn(T) -> bool,
    n_grid: usize,
    rng: &mut RngStream,
) -> Result<T> {
    if n_grid == 0 {
        return invalid("n_grid must be positive");
    }
    let candidates: Vec<T> = match domain {
        CoordinateDomain::Grid(points) => points.clone(),
        CoordinateDomain::Interval { .. } => (0..n_grid).map(|_| domain.sample(rng)).collect(),
    };
    let mut best: Option<(T, T)> = None;
    for x in candidates.into_iter().filter(|&x| admits(x)) {
        let u = fit.predict_mean(x);
        if best.is_none_or(|(_, bu)| u > bu) {
            best = Some((x, u));
        }
    }
    best.map(|b| b.0).ok_or(AceError::EmptyDomain)
}
