//! Random streams, prior sampling and Latin hypercube designs.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::design::{CoordinateDomain, Design, DesignSpace};
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector partitions one seed into
/// independent streams for parallel multi-starts.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Draws a fresh seed from this stream; pairs with [`RngStream::new`] to
    /// derive per-task sub-streams.
    pub fn fork_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One independent prior marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, var: f64 },
    LogNormal { log_mean: f64, log_var: f64 },
    /// Density `2 (L - x) / L^2` on `[0, L]`.
    TriangularDecreasing { l: f64 },
    PointMass { value: f64 },
    Poisson { lambda: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Self::Normal { mean, var } => mean.is_finite() && var.is_finite() && var > 0.0,
            Self::LogNormal { log_mean, log_var } => log_mean.is_finite() && log_var.is_finite() && log_var > 0.0,
            Self::TriangularDecreasing { l } => l.is_finite() && l > 0.0,
            Self::PointMass { value } => value.is_finite(),
            Self::Poisson { lambda } => lambda.is_finite() && lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid prior marginal {self:?}"))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Normal { mean, var } => Normal::new(mean, var.sqrt()).expect("validated").sample(rng),
            Self::LogNormal { log_mean, log_var } => {
                LogNormal::new(log_mean, log_var.sqrt()).expect("validated").sample(rng)
            }
            Self::TriangularDecreasing { l } => {
                let u: f64 = rng.random();
                l * (1.0 - (1.0 - u).sqrt())
            }
            Self::PointMass { value } => value,
            Self::Poisson { lambda } => Poisson::new(lambda).expect("validated").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Normal { mean, .. } => mean,
            Self::LogNormal { log_mean, log_var } => (log_mean + 0.5 * log_var).exp(),
            Self::TriangularDecreasing { l } => l / 3.0,
            Self::PointMass { value } => value,
            Self::Poisson { lambda } => lambda,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Normal { var, .. } => var,
            Self::LogNormal { log_mean, log_var } => (log_var.exp() - 1.0) * (2.0 * log_mean + log_var).exp(),
            Self::TriangularDecreasing { l } => l * l / 18.0,
            Self::PointMass { .. } => 0.0,
            Self::Poisson { lambda } => lambda,
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, Self::PointMass { .. })
    }
}

/// Group-level effects nested under drawn half-widths: for each of `groups`
/// groups and each listed index `r`, a draw `U[-x_r, x_r]` where `x_r` is
/// the value of marginal `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedUniform {
    pub groups: usize,
    pub scales: Vec<usize>,
}

/// Independent marginals with at most one level of hierarchical nesting.
///
/// A draw is laid out as the marginal values followed by the nested effects
/// in group-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub marginals: Vec<Marginal>,
    #[serde(default)]
    pub nested: Option<NestedUniform>,
}

impl PriorSpec {
    pub fn independent(marginals: Vec<Marginal>) -> Self {
        Self { marginals, nested: None }
    }

    pub fn empty() -> Self {
        Self::independent(Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.marginals {
            m.validate()?;
        }
        if let Some(nest) = &self.nested {
            for &r in &nest.scales {
                match self.marginals.get(r) {
                    None => return invalid(format!("nested scale index {r} out of range")),
                    Some(Marginal::Normal { .. }) => {
                        return invalid("nested half-widths must have non-negative support")
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Length of one draw.
    pub fn dim(&self) -> usize {
        self.marginals.len() + self.nested.as_ref().map_or(0, |n| n.groups * n.scales.len())
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_degenerate(&self) -> bool {
        self.marginals.iter().all(Marginal::is_point_mass)
    }

    pub fn draw<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut out: Vec<f64> = self.marginals.iter().map(|m| m.sample(rng)).collect();
        if let Some(nest) = &self.nested {
            for _ in 0..nest.groups {
                for &r in &nest.scales {
                    let half = out[r];
                    let u: f64 = rng.random();
                    out.push(half * (2.0 * u - 1.0));
                }
            }
        }
        out.into_iter().map(T::of).collect()
    }
}

/// `count` independent prior draws.
pub fn sample_prior<T: Real>(spec: &PriorSpec, count: usize, rng: &mut RngStream) -> Result<Vec<Vec<T>>> {
    spec.validate()?;
    if count == 0 {
        return invalid("sample count must be positive");
    }
    Ok((0..count).map(|_| spec.draw(rng)).collect())
}

/// Points of a one-dimensional coordinate-design.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateDesign<T> {
    pub points: Vec<T>,
}

impl<T> CoordinateDesign<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A random one-dimensional Latin hypercube: one uniform point in each of
/// `m` equal-width strata, returned in random order.
///
/// On a grid domain the sorted candidates are cut into `m` contiguous blocks
/// and one candidate is drawn from each, so the points are distinct.
pub fn lhs_1d<T: Real>(m: usize, domain: &CoordinateDomain<T>, rng: &mut RngStream) -> Result<CoordinateDesign<T>> {
    if m < 2 {
        return invalid(format!("coordinate-design size must be at least 2, got {m}"));
    }
    let mut points: Vec<T> = match domain {
        CoordinateDomain::Interval { lo, hi } => {
            if !(*hi > *lo) {
                return invalid("degenerate coordinate domain");
            }
            let width = (*hi - *lo) / T::of_usize(m);
            (0..m)
                .map(|s| {
                    let x = *lo + width * (T::of_usize(s) + T::of(rng.uniform()));
                    x.min(*hi)
                })
                .collect()
        }
        CoordinateDomain::Grid(cands) => {
            if m > cands.len() {
                return invalid(format!("cannot draw {m} distinct points from a {}-point grid", cands.len()));
            }
            (0..m)
                .map(|s| {
                    let start = s * cands.len() / m;
                    let end = (s + 1) * cands.len() / m;
                    cands[rng.random_range(start..end)]
                })
                .collect()
        }
    };
    points.shuffle(rng);
    Ok(CoordinateDesign { points })
}

/// An `n x v` design whose columns are independent Latin hypercube samples,
/// flattened column-major.
pub fn lhs_random_design<T: Real>(
    n: usize,
    v: usize,
    domains: &[CoordinateDomain<T>],
    rng: &mut RngStream,
) -> Result<Design<T>> {
    if n == 0 || v == 0 {
        return invalid("runs and variables must both be positive");
    }
    if domains.len() != v {
        return invalid(format!("{v} variables but {} domains", domains.len()));
    }
    let mut values = Vec::with_capacity(n * v);
    for domain in domains {
        if n == 1 {
            values.push(domain.sample(rng));
        } else if let CoordinateDomain::Grid(c) = domain {
            if n > c.len() {
                values.extend((0..n).map(|_| domain.sample(rng)));
            } else {
                values.extend(lhs_1d(n, domain, rng)?.points);
            }
        } else {
            values.extend(lhs_1d(n, domain, rng)?.points);
        }
    }
    Design::new(n, v, values)
}

/// Random Latin hypercube designs are redrawn until they satisfy the space's
/// joint constraint.
pub fn admissible_random_design<T: Real>(
    n: usize,
    space: &DesignSpace<T>,
    rng: &mut RngStream,
    max_tries: usize,
) -> Result<Design<T>> {
    for _ in 0..max_tries {
        let d = lhs_random_design(n, space.variables(), &space.domains, rng)?;
        if space.admits(&d) {
            return Ok(d);
        }
    }
    invalid(format!("no admissible random design found in {max_tries} draws"))
}

fn min_pairwise_distance(unit: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..unit.len() {
        for b in 0..a {
            let d: f64 = unit[a].iter().zip(&unit[b]).map(|(x, y)| (x - y).powi(2)).sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}

/// Maximin Latin hypercube via simulated annealing over within-column swaps
/// of stratum indices; points sit at stratum midpoints.
pub fn maximin_lhs<T: Real>(
    n: usize,
    v: usize,
    domains: &[CoordinateDomain<T>],
    iterations: usize,
    rng: &mut RngStream,
) -> Result<Design<T>> {
    if n < 2 || v == 0 {
        return invalid("maximin LHS needs at least two runs");
    }
    if domains.len() != v {
        return invalid(format!("{v} variables but {} domains", domains.len()));
    }
    let to_unit = |perm: &[Vec<usize>]| -> Vec<Vec<f64>> {
        (0..n).map(|k| (0..v).map(|j| (perm[j][k] as f64 + 0.5) / n as f64).collect()).collect()
    };
    let mut perm: Vec<Vec<usize>> = (0..v)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    let mut current = min_pairwise_distance(&to_unit(&perm));
    let mut best = (current, perm.clone());
    let t0 = 0.1 / n as f64;
    for it in 0..iterations {
        let temp = t0 * (1.0 - it as f64 / iterations as f64) + 1e-12;
        let j = rng.random_range(0..v);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        perm[j].swap(a, b);
        let cand = min_pairwise_distance(&to_unit(&perm));
        if cand >= current || rng.uniform() < ((cand - current) / temp).exp() {
            current = cand;
            if cand > best.0 {
                best = (cand, perm.clone());
            }
        } else {
            perm[j].swap(a, b);
        }
    }
    let unit = to_unit(&best.1);
    let mut values = Vec::with_capacity(n * v);
    for (j, domain) in domains.iter().enumerate() {
        let (lo, hi) = (domain.lo(), domain.hi());
        for row in &unit {
            values.push(lo + (hi - lo) * T::of(row[j]));
        }
    }
    Design::new(n, v, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stratum_counts(points: &[f64], lo: f64, hi: f64) -> Vec<usize> {
        let m = points.len();
        let mut counts = vec![0; m];
        for &p in points {
            let s = (((p - lo) / (hi - lo)) * m as f64).floor() as usize;
            counts[s.min(m - 1)] += 1;
        }
        counts
    }

    #[test]
    fn lhs_four_points_on_unit_interval() {
        let mut rng = RngStream::new(1, 0);
        let d = lhs_1d(4, &CoordinateDomain::interval(0.0, 1.0).unwrap(), &mut rng).unwrap();
        assert_eq!(stratum_counts(&d.points, 0.0, 1.0), vec![1; 4]);
    }

    #[test]
    fn lhs_twenty_points_on_symmetric_interval() {
        let mut rng = RngStream::new(2, 0);
        let d = lhs_1d(20, &CoordinateDomain::interval(-1.0, 1.0).unwrap(), &mut rng).unwrap();
        assert_eq!(stratum_counts(&d.points, -1.0, 1.0), vec![1; 20]);
        assert!(d.points.iter().all(|p| (-1.0..=1.0).contains(p)));
    }

    #[test]
    fn lhs_is_reproducible() {
        let dom = CoordinateDomain::interval(0.0, 2.0).unwrap();
        let a = lhs_1d::<f64>(2, &dom, &mut RngStream::new(9, 3)).unwrap();
        let b = lhs_1d::<f64>(2, &dom, &mut RngStream::new(9, 3)).unwrap();
        let c = lhs_1d::<f64>(2, &dom, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn lhs_rejects_bad_arguments() {
        let dom = CoordinateDomain::interval(0.0, 1.0).unwrap();
        assert!(lhs_1d::<f64>(1, &dom, &mut RngStream::new(0, 0)).is_err());
        let bad = CoordinateDomain::Interval { lo: 1.0, hi: 1.0 };
        assert!(lhs_1d::<f64>(4, &bad, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn grid_lhs_points_are_distinct_members() {
        let grid: Vec<f64> = (0..41).map(|k| -1.0 + 2.0 * k as f64 / 41.0).collect();
        let dom = CoordinateDomain::grid(grid.clone()).unwrap();
        let d = lhs_1d(20, &dom, &mut RngStream::new(5, 0)).unwrap();
        let mut pts = d.points.clone();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        assert_eq!(pts.len(), 20);
        assert!(pts.iter().all(|p| grid.contains(p)));
    }

    #[test]
    fn random_design_shapes() {
        let dom = CoordinateDomain::interval(-1.0, 1.0).unwrap();
        let one = lhs_random_design::<f64>(1, 1, &[dom.clone()], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(one.len(), 1);
        assert!((-1.0..=1.0).contains(&one.coordinate(0)));

        let big = lhs_random_design::<f64>(48, 4, &vec![dom.clone(); 4], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(big.len(), 192);
        for j in 0..4 {
            assert_eq!(stratum_counts(big.column(j), -1.0, 1.0), vec![1; 48]);
        }

        let a = lhs_random_design::<f64>(2, 2, &vec![dom.clone(); 2], &mut RngStream::new(7, 1)).unwrap();
        let b = lhs_random_design::<f64>(2, 2, &vec![dom.clone(); 2], &mut RngStream::new(7, 1)).unwrap();
        assert_eq!(a, b);
        assert!(lhs_random_design::<f64>(2, 2, &[dom], &mut RngStream::new(7, 1)).is_err());
    }

    #[test]
    fn point_mass_prior() {
        let spec = PriorSpec::independent(vec![Marginal::PointMass { value: 0.5 }]);
        let draws: Vec<Vec<f64>> = sample_prior(&spec, 3, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(draws, vec![vec![0.5]; 3]);
    }

    #[test]
    fn triangular_prior_mean_is_a_third() {
        let spec = PriorSpec::independent(vec![Marginal::TriangularDecreasing { l: 3.0 }]);
        let draws: Vec<Vec<f64>> = sample_prior(&spec, 1_000_000, &mut RngStream::new(11, 0)).unwrap();
        let m = draws.iter().map(|d| d[0]).sum::<f64>() / draws.len() as f64;
        assert!((m - 1.0).abs() < 0.01, "mean {m}");
        assert!(draws.iter().all(|d| (0.0..=3.0).contains(&d[0])));
    }

    #[test]
    fn log_normal_prior_median() {
        let spec = PriorSpec::independent(vec![Marginal::LogNormal { log_mean: 0.1f64.ln(), log_var: 0.05 }]);
        let mut xs: Vec<f64> = sample_prior::<f64>(&spec, 1_000_000, &mut RngStream::new(12, 0))
            .unwrap()
            .into_iter()
            .map(|d| d[0])
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = xs[xs.len() / 2];
        assert!((median / 0.1 - 1.0).abs() < 0.01, "median {median}");
    }

    #[test]
    fn every_family_matches_analytic_moments() {
        let families = [
            Marginal::Uniform { lo: -3.0, hi: 3.0 },
            Marginal::Normal { mean: 0.5, var: 1.0 },
            Marginal::LogNormal { log_mean: 0.0, log_var: 0.05 },
            Marginal::TriangularDecreasing { l: 1.0 },
            Marginal::Poisson { lambda: 60.0 },
        ];
        let count = 1_000_000;
        for (k, fam) in families.iter().enumerate() {
            let mut rng = RngStream::new(100, k as u64);
            let xs: Vec<f64> = (0..count).map(|_| fam.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / count as f64;
            let se = (fam.variance() / count as f64).sqrt();
            assert!((m - fam.mean()).abs() < 3.0 * se, "{fam:?}: mean {m} vs {}", fam.mean());
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (count - 1) as f64;
            let fourth = xs.iter().map(|x| (x - fam.mean()).powi(4)).sum::<f64>() / count as f64;
            let se_v = ((fourth - fam.variance().powi(2)) / count as f64).sqrt();
            assert!((v - fam.variance()).abs() < 3.0 * se_v, "{fam:?}: var {v} vs {}", fam.variance());
        }
    }

    #[test]
    fn hierarchical_draws_respect_half_widths() {
        let spec = PriorSpec {
            marginals: vec![Marginal::TriangularDecreasing { l: 3.0 }, Marginal::TriangularDecreasing { l: 1.0 }],
            nested: Some(NestedUniform { groups: 3, scales: vec![0, 1] }),
        };
        assert_eq!(spec.dim(), 8);
        let mut rng = RngStream::new(4, 0);
        for _ in 0..1000 {
            let d: Vec<f64> = spec.draw(&mut rng);
            for s in 0..3 {
                assert!(d[2 + 2 * s].abs() <= d[0]);
                assert!(d[3 + 2 * s].abs() <= d[1]);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for bad in [
            Marginal::Uniform { lo: 1.0, hi: 0.0 },
            Marginal::Normal { mean: 0.0, var: 0.0 },
            Marginal::TriangularDecreasing { l: -1.0 },
            Marginal::Poisson { lambda: 0.0 },
            Marginal::PointMass { value: f64::NAN },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn maximin_beats_random_lhs_on_average() {
        let dom = vec![CoordinateDomain::interval(-1.0, 1.0).unwrap(); 4];
        let mut rng = RngStream::new(3, 0);
        let mm = maximin_lhs::<f64>(12, 4, &dom, 5000, &mut rng).unwrap();
        let unit = |d: &Design<f64>| -> Vec<Vec<f64>> {
            d.rows().into_iter().map(|r| r.iter().map(|x| (x + 1.0) / 2.0).collect()).collect()
        };
        let mm_score = min_pairwise_distance(&unit(&mm));
        let rnd_score: f64 = (0..20)
            .map(|_| min_pairwise_distance(&unit(&lhs_random_design(12, 4, &dom, &mut rng).unwrap())))
            .sum::<f64>()
            / 20.0;
        assert!(mm_score > rnd_score);
        for j in 0..4 {
            assert_eq!(stratum_counts(mm.column(j), -1.0, 1.0), vec![1; 12]);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn strata_coverage(m in 2usize..60, lo in -10.0f64..10.0, width in 0.01f64..20.0, seed: u64) {
            let dom = CoordinateDomain::interval(lo, lo + width).unwrap();
            let d = lhs_1d(m, &dom, &mut RngStream::new(seed, 0)).unwrap();
            let mut sorted = d.points.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (s, p) in sorted.iter().enumerate() {
                let lo_s = lo + width * s as f64 / m as f64;
                let hi_s = lo + width * (s + 1) as f64 / m as f64;
                prop_assert!(*p >= lo_s - 1e-12 && *p <= hi_s + 1e-12);
            }
        }
    }
}
