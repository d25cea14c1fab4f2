//! Special functions evaluated in double precision.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::ln_gamma};

const QUANTILE_TOL: f64 = 1e-12;

/// CDF of the standard Student t distribution with `df` degrees of freedom.
pub fn student_t_cdf(x: f64, df: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").cdf(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln(k!)`.
pub fn ln_factorial(k: f64) -> f64 {
    if k < 2.0 {
        0.0
    } else {
        ln_gamma(k + 1.0)
    }
}

/// Quantile of `Beta(a, b)` at probability `p`, by bisection on the
/// regularized incomplete beta function.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "Beta shapes must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        // Relative to the nearer endpoint so quantiles crowding 0 or 1 stay ordered.
        let tol = QUANTILE_TOL * mid.min(1.0 - mid).max(f64::MIN_POSITIVE);
        if hi - lo <= tol || mid == lo || mid == hi {
            return mid;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(logistic(x))` without cancellation.
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
