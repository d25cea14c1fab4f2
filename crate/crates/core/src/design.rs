//! Designs, coordinate domains and design constraints.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// An `n x v` design matrix stored as `vec(D)`: columns stacked, so
/// coordinate `i` is run `i % n` of variable `i / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    n: usize,
    v: usize,
    values: Vec<T>,
}

impl<T: Real> Design<T> {
    pub fn new(n: usize, v: usize, values: Vec<T>) -> Result<Self> {
        if v == 0 {
            return invalid("a design needs at least one variable");
        }
        if values.len() != n * v {
            return invalid(format!("expected {} coordinates for a {n}x{v} design, got {}", n * v, values.len()));
        }
        Ok(Self { n, v, values })
    }

    /// Builds from run rows `d_k`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let v = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != v) {
            return invalid("ragged design rows");
        }
        let n = rows.len();
        let mut values = vec![T::zero(); n * v];
        for (k, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                values[j * n + k] = x;
            }
        }
        Self::new(n, v, values)
    }

    pub fn empty(v: usize) -> Self {
        Self { n: 0, v, values: Vec::new() }
    }

    pub fn runs(&self) -> usize {
        self.n
    }

    pub fn variables(&self) -> usize {
        self.v
    }

    /// `q = n * v`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn coordinate(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn set_coordinate(&mut self, i: usize, x: T) {
        self.values[i] = x;
    }

    pub fn with_coordinate(&self, i: usize, x: T) -> Self {
        let mut d = self.clone();
        d.values[i] = x;
        d
    }

    pub fn get(&self, run: usize, var: usize) -> T {
        self.values[var * self.n + run]
    }

    /// Variable (column) that coordinate `i` belongs to.
    pub fn variable_of(&self, i: usize) -> usize {
        i / self.n
    }

    pub fn run_of(&self, i: usize) -> usize {
        i % self.n
    }

    pub fn row(&self, run: usize) -> Vec<T> {
        (0..self.v).map(|j| self.get(run, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|k| self.row(k)).collect()
    }

    pub fn column(&self, var: usize) -> &[T] {
        &self.values[var * self.n..(var + 1) * self.n]
    }

    /// Appends a copy of run `k`.
    pub fn with_replicated_run(&self, k: usize) -> Self {
        let mut rows = self.rows();
        rows.push(rows[k].clone());
        Self::from_rows(&rows).expect("consistent rows")
    }

    /// Deletes run `h`.
    pub fn without_run(&self, h: usize) -> Self {
        let mut rows = self.rows();
        rows.remove(h);
        if rows.is_empty() {
            return Self::empty(self.v);
        }
        Self::from_rows(&rows).expect("consistent rows")
    }

    /// Row-wise duplication: every run appears twice.
    pub fn doubled(&self) -> Self {
        let mut rows = self.rows();
        rows.extend(self.rows());
        Self::from_rows(&rows).expect("consistent rows")
    }
}

/// The admissible set for one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateDomain<T> {
    Interval { lo: T, hi: T },
    /// A finite candidate set, sorted ascending.
    Grid(Vec<T>),
}

impl<T: Real> CoordinateDomain<T> {
    pub fn interval(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || !(hi > lo) {
            return invalid(format!("degenerate interval [{lo}, {hi}]"));
        }
        Ok(Self::Interval { lo, hi })
    }

    pub fn grid(mut points: Vec<T>) -> Result<Self> {
        if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
            return invalid("a grid domain needs at least two finite points");
        }
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        points.dedup();
        Ok(Self::Grid(points))
    }

    pub fn lo(&self) -> T {
        match self {
            Self::Interval { lo, .. } => *lo,
            Self::Grid(p) => p[0],
        }
    }

    pub fn hi(&self) -> T {
        match self {
            Self::Interval { hi, .. } => *hi,
            Self::Grid(p) => p[p.len() - 1],
        }
    }

    pub fn contains(&self, x: T) -> bool {
        match self {
            Self::Interval { lo, hi } => x >= *lo && x <= *hi,
            Self::Grid(p) => p.contains(&x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            Self::Interval { lo, hi } => {
                let u: f64 = rng.random();
                *lo + (*hi - *lo) * T::of(u)
            }
            Self::Grid(p) => p[rng.random_range(0..p.len())],
        }
    }
}

/// A joint restriction on the design beyond the per-variable domains, such
/// as a minimum spacing between sampling times.
pub trait DesignConstraint<T: Real>: Send + Sync + fmt::Debug {
    fn admits(&self, design: &Design<T>) -> bool;

    /// Whether setting coordinate `i` of `design` to `x` stays admissible.
    fn admits_coordinate(&self, design: &Design<T>, i: usize, x: T) -> bool {
        self.admits(&design.with_coordinate(i, x))
    }
}

/// Every pair of runs must differ by at least `gap` in variable `var`.
#[derive(Debug, Clone)]
pub struct MinSpacing<T> {
    pub var: usize,
    pub gap: T,
}

impl<T: Real> DesignConstraint<T> for MinSpacing<T> {
    fn admits(&self, design: &Design<T>) -> bool {
        let mut col = design.column(self.var).to_vec();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite design"));
        col.windows(2).all(|w| w[1] - w[0] >= self.gap)
    }

    fn admits_coordinate(&self, design: &Design<T>, i: usize, x: T) -> bool {
        if design.variable_of(i) != self.var {
            return self.admits(design);
        }
        let own = design.run_of(i);
        design
            .column(self.var)
            .iter()
            .enumerate()
            .all(|(k, &t)| k == own || (t - x).abs() >= self.gap)
    }
}

/// Domains per variable plus an optional joint constraint.
#[derive(Debug, Clone)]
pub struct DesignSpace<T: Real> {
    pub domains: Vec<CoordinateDomain<T>>,
    pub constraint: Option<Arc<dyn DesignConstraint<T>>>,
}

impl<T: Real> DesignSpace<T> {
    pub fn new(domains: Vec<CoordinateDomain<T>>) -> Self {
        Self { domains, constraint: None }
    }

    pub fn with_constraint(mut self, c: Arc<dyn DesignConstraint<T>>) -> Self {
        self.constraint = Some(c);
        self
    }

    pub fn variables(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_of(&self, design: &Design<T>, i: usize) -> &CoordinateDomain<T> {
        &self.domains[design.variable_of(i)]
    }

    pub fn admits(&self, design: &Design<T>) -> bool {
        design.variables() == self.domains.len()
            && (0..design.len()).all(|i| self.domain_of(design, i).contains(design.coordinate(i)))
            && self.constraint.as_ref().is_none_or(|c| c.admits(design))
    }

    /// Membership of a candidate value for coordinate `i` given the rest of
    /// `design`.
    pub fn admits_coordinate(&self, design: &Design<T>, i: usize, x: T) -> bool {
        self.domain_of(design, i).contains(x)
            && self.constraint.as_ref().is_none_or(|c| c.admits_coordinate(design, i, x))
    }
}
