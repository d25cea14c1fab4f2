//! Approximate coordinate exchange: emulator-guided one-coordinate proposals
//! (phase I), replicate consolidation by point exchange (phase II), and
//! multi-start selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{CoordinateDomain, Design, DesignSpace};
use crate::error::{AceError, Result};
use crate::gp_emulator::{maximize_on_grid, EmulatorFit};
use crate::sampling::{admissible_random_design, lhs_1d, RngStream};
use crate::scalar::Real;
use crate::special::student_t_cdf;
use crate::utilities::{NestedMcConfig, Utility, UtilitySampleBatch};

const STRATUM_TRIES: usize = 20;
const MIN_EMULATOR_POINTS: usize = 3;
const INITIAL_DESIGN_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AceConfig {
    /// Outer sample size for acceptance tests and final evaluations.
    pub b: usize,
    /// Outer sample size for the utility evaluations the emulator is fitted to.
    pub b_emulator: usize,
    /// Inner sample size at the `b` tier; defaults to `b`.
    pub b_inner: Option<usize>,
    /// Inner sample size at the `b_emulator` tier; defaults to `b_emulator`.
    pub b_inner_emulator: Option<usize>,
    /// Coordinate-design size.
    pub m: usize,
    pub phase1_sweeps: usize,
    pub phase2_iterations: usize,
    pub starts: usize,
    /// Evaluations averaged when choosing among starts.
    pub reps: usize,
    pub n_grid: usize,
    pub phase2_enabled: bool,
}

impl Default for AceConfig {
    fn default() -> Self {
        Self {
            b: 20_000,
            b_emulator: 1_000,
            b_inner: None,
            b_inner_emulator: None,
            m: 20,
            phase1_sweeps: 20,
            phase2_iterations: 100,
            starts: 20,
            reps: 20,
            n_grid: 10_000,
            phase2_enabled: true,
        }
    }
}

impl AceConfig {
    pub fn validate(&self) -> Result<()> {
        self.comparison().validate()?;
        self.emulator().validate()?;
        let positive = [
            ("m", self.m),
            ("starts", self.starts),
            ("reps", self.reps),
            ("n_grid", self.n_grid),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(AceError::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.m < MIN_EMULATOR_POINTS {
            return Err(AceError::InvalidArgument(format!("m must be at least {MIN_EMULATOR_POINTS}")));
        }
        Ok(())
    }

    pub fn comparison(&self) -> NestedMcConfig {
        NestedMcConfig { outer: self.b, inner: self.b_inner.unwrap_or(self.b) }
    }

    pub fn emulator(&self) -> NestedMcConfig {
        NestedMcConfig { outer: self.b_emulator, inner: self.b_inner_emulator.unwrap_or(self.b_emulator) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    I,
    II,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::I => "I",
            Phase::II => "II",
        })
    }
}

/// One step of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    pub start: usize,
    pub phase: Phase,
    pub sweep: usize,
    /// Coordinate (phase I) or replicated run (phase II), zero-based.
    pub index: usize,
    /// Estimated utility of the current design after the step.
    pub utility: T,
    pub p_accept: f64,
    pub accepted: bool,
    /// The current design after the step.
    pub design: Design<T>,
}

/// Acceptance probability that `new` is at least as good as `cur`, and the
/// outcome of one uniform draw against it.
pub fn bayes_t_accept<T: Real>(
    new: &UtilitySampleBatch<T>,
    cur: &UtilitySampleBatch<T>,
    rng: &mut RngStream,
) -> Result<(f64, bool)> {
    let p = acceptance_probability(new, cur)?;
    Ok((p, rng.uniform() < p))
}

pub fn acceptance_probability<T: Real>(new: &UtilitySampleBatch<T>, cur: &UtilitySampleBatch<T>) -> Result<f64> {
    let b = new.len();
    if b < 2 || cur.len() != b {
        return Err(AceError::InvalidArgument(format!(
            "acceptance test needs two batches of equal size >= 2, got {} and {}",
            b,
            cur.len()
        )));
    }
    let ss = |batch: &UtilitySampleBatch<T>| {
        let m = batch.mean.as_f64();
        batch.values.iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>()
    };
    let bf = b as f64;
    let df = 2.0 * bf - 2.0;
    let nu = (ss(new) + ss(cur)) / df;
    let gap = new.mean.as_f64() - cur.mean.as_f64();
    if !(nu > 0.0) {
        return Ok(if gap > 0.0 {
            1.0
        } else if gap < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    let p = 1.0 - student_t_cdf(-bf * gap / (2.0 * bf * nu).sqrt(), df);
    Ok(p.clamp(0.0, 1.0))
}

/// The pair of fresh comparison-size batches behind an acceptance test.
fn compare<T: Real>(
    utility: &dyn Utility<T>,
    proposal: &Design<T>,
    current: &Design<T>,
    cfg: &AceConfig,
    rng: &mut RngStream,
) -> Result<(UtilitySampleBatch<T>, UtilitySampleBatch<T>, f64, bool)> {
    let base = rng.fork_seed();
    let (new, cur) = rayon::join(
        || utility.evaluate(proposal, cfg.comparison(), &mut RngStream::new(base, 0)),
        || utility.evaluate(current, cfg.comparison(), &mut RngStream::new(base, 1)),
    );
    let (new, cur) = (new?, cur?);
    let (p, accepted) = bayes_t_accept(&new, &cur, rng)?;
    Ok((new, cur, p, accepted))
}

/// Evaluates several designs at the emulator tier on independent streams.
/// Designs whose evaluation fails are reported as `None`.
fn scan<T: Real>(
    utility: &dyn Utility<T>,
    designs: &[Design<T>],
    cfg: NestedMcConfig,
    rng: &mut RngStream,
) -> Vec<Option<T>> {
    let base = rng.fork_seed();
    designs
        .par_iter()
        .enumerate()
        .map(|(j, d)| match utility.evaluate(d, cfg, &mut RngStream::new(base, j as u64)) {
            Ok(b) if b.mean.is_finite() => Some(b.mean),
            Ok(_) => None,
            Err(e) => {
                log::debug!("utility evaluation failed during scan: {e}");
                None
            }
        })
        .collect()
}

/// Random `m`-point coordinate design for coordinate `i`, keeping only points
/// admissible given the rest of `current`. On an interval each stratum is
/// redrawn a few times before it is given up.
pub fn coordinate_design<T: Real>(
    current: &Design<T>,
    i: usize,
    space: &DesignSpace<T>,
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    let domain = space.domain_of(current, i);
    let ok = |x: T| space.admits_coordinate(current, i, x);
    let points = match domain {
        CoordinateDomain::Grid(cands) if cands.len() <= m => cands.iter().copied().filter(|&x| ok(x)).collect(),
        CoordinateDomain::Grid(_) => lhs_1d(m, domain, rng)?.points.into_iter().filter(|&x| ok(x)).collect(),
        CoordinateDomain::Interval { lo, hi } => {
            let width = (*hi - *lo) / T::of_usize(m);
            let mut pts = Vec::with_capacity(m);
            for s in 0..m {
                for _ in 0..STRATUM_TRIES {
                    let x = (*lo + width * (T::of_usize(s) + T::of(rng.uniform()))).min(*hi);
                    if ok(x) {
                        pts.push(x);
                        break;
                    }
                }
            }
            pts
        }
    };
    Ok(points)
}

/// One phase I step on coordinate `i`: emulate the utility along the
/// coordinate, propose the emulator maximizer, and accept it by the
/// comparison test against the current design.
#[allow(clippy::too_many_arguments)]
pub fn phase1_coordinate_step<T: Real>(
    current: &Design<T>,
    i: usize,
    utility: &dyn Utility<T>,
    space: &DesignSpace<T>,
    cfg: &AceConfig,
    start: usize,
    sweep: usize,
    rng: &mut RngStream,
) -> Result<(Design<T>, TraceRecord<T>)> {
    if i >= current.len() {
        return Err(AceError::InvalidArgument(format!("coordinate {i} out of range")));
    }
    let skip = |utility_value: T| TraceRecord {
        start,
        phase: Phase::I,
        sweep,
        index: i,
        utility: utility_value,
        p_accept: 0.0,
        accepted: false,
        design: current.clone(),
    };
    let xi = coordinate_design(current, i, space, cfg.m, rng)?;
    let candidates: Vec<Design<T>> = xi.iter().map(|&x| current.with_coordinate(i, x)).collect();
    let values = scan(utility, &candidates, cfg.emulator(), rng);
    let (pts, vals): (Vec<T>, Vec<T>) =
        xi.iter().zip(&values).filter_map(|(&x, v)| v.map(|v| (x, v))).unzip();
    if pts.len() < MIN_EMULATOR_POINTS {
        log::debug!("coordinate {i}: only {} usable emulator points; step skipped", pts.len());
        let cur = utility.evaluate(current, cfg.emulator(), rng)?;
        return Ok((current.clone(), skip(cur.mean)));
    }
    let fit = match EmulatorFit::fit(&pts, &vals) {
        Ok(f) => f,
        Err(AceError::ConstantResponse) => {
            return Ok((current.clone(), skip(vals[0])));
        }
        Err(e) => return Err(e),
    };
    let domain = space.domain_of(current, i);
    let best = maximize_on_grid(&fit, domain, |x| space.admits_coordinate(current, i, x), cfg.n_grid, rng)?;
    let proposal = current.with_coordinate(i, best);
    let (new, cur, p, accepted) = compare(utility, &proposal, current, cfg, rng)?;
    let next = if accepted { proposal } else { current.clone() };
    let record = TraceRecord {
        start,
        phase: Phase::I,
        sweep,
        index: i,
        utility: if accepted { new.mean } else { cur.mean },
        p_accept: p,
        accepted,
        design: next.clone(),
    };
    Ok((next, record))
}

/// One pass of phase I steps over every coordinate in order.
pub fn phase1_sweep<T: Real>(
    current: &Design<T>,
    utility: &dyn Utility<T>,
    space: &DesignSpace<T>,
    cfg: &AceConfig,
    start: usize,
    sweep: usize,
    rng: &mut RngStream,
) -> Result<(Design<T>, Vec<TraceRecord<T>>)> {
    let mut design = current.clone();
    let mut trace = Vec::with_capacity(design.len());
    for i in 0..design.len() {
        let (next, rec) = phase1_coordinate_step(&design, i, utility, space, cfg, start, sweep, rng)?;
        design = next;
        trace.push(rec);
    }
    Ok((design, trace))
}

fn argmax_first<T: Real>(values: &[Option<T>]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (j, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
    }
    best.map(|b| b.0)
}

/// One phase II iteration: replicate the best run, then delete the run whose
/// removal hurts least, and accept the result against the current design.
pub fn phase2_point_exchange<T: Real>(
    current: &Design<T>,
    utility: &dyn Utility<T>,
    space: &DesignSpace<T>,
    cfg: &AceConfig,
    start: usize,
    iteration: usize,
    rng: &mut RngStream,
) -> Result<(Design<T>, TraceRecord<T>)> {
    let n = current.runs();
    if n < 2 {
        return Err(AceError::InvalidArgument("point exchange needs at least two runs".into()));
    }
    let augmented: Vec<Design<T>> = (0..n).map(|k| current.with_replicated_run(k)).collect();
    let k = argmax_first(&scan(utility, &augmented, cfg.emulator(), rng))
        .ok_or_else(|| AceError::InvalidArgument("every augmented design failed to evaluate".into()))?;
    let reduced: Vec<Design<T>> = (0..=n).map(|h| augmented[k].without_run(h)).collect();
    let mut scores = scan(utility, &reduced, cfg.emulator(), rng);
    for (s, d) in scores.iter_mut().zip(&reduced) {
        if !space.admits(d) {
            *s = None;
        }
    }
    let Some(h) = argmax_first(&scores) else {
        let cur = utility.evaluate(current, cfg.emulator(), rng)?;
        let rec = TraceRecord {
            start,
            phase: Phase::II,
            sweep: iteration,
            index: k,
            utility: cur.mean,
            p_accept: 0.0,
            accepted: false,
            design: current.clone(),
        };
        return Ok((current.clone(), rec));
    };
    let proposal = reduced[h].clone();
    let (new, cur, p, accepted) = compare(utility, &proposal, current, cfg, rng)?;
    let next = if accepted { proposal } else { current.clone() };
    let record = TraceRecord {
        start,
        phase: Phase::II,
        sweep: iteration,
        index: k,
        utility: if accepted { new.mean } else { cur.mean },
        p_accept: p,
        accepted,
        design: next.clone(),
    };
    Ok((next, record))
}

/// Output of a single start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartResult<T> {
    pub start: usize,
    pub initial: Design<T>,
    pub design: Design<T>,
    pub trace: Vec<TraceRecord<T>>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Runs phase I sweeps and then, when enabled, phase II iterations from `initial`.
pub fn run_ace<T: Real>(
    utility: &dyn Utility<T>,
    space: &DesignSpace<T>,
    cfg: &AceConfig,
    initial: &Design<T>,
    start: usize,
    rng: &mut RngStream,
) -> Result<StartResult<T>> {
    cfg.validate()?;
    if initial.variables() != space.variables() {
        return Err(AceError::InvalidArgument(format!(
            "initial design has {} variables, space has {}",
            initial.variables(),
            space.variables()
        )));
    }
    if !space.admits(initial) {
        return Err(AceError::Domain("initial design violates the design space".into()));
    }
    let mut design = initial.clone();
    let mut trace = Vec::new();
    for sweep in 0..cfg.phase1_sweeps {
        let (next, recs) = phase1_sweep(&design, utility, space, cfg, start, sweep, rng)?;
        design = next;
        trace.extend(recs);
        log::debug!("start {start}: sweep {sweep} done, utility {}", trace.last().map(|r| r.utility).unwrap_or_default());
    }
    if cfg.phase2_enabled && design.runs() >= 2 {
        for it in 0..cfg.phase2_iterations {
            let (next, rec) = phase2_point_exchange(&design, utility, space, cfg, start, it, rng)?;
            design = next;
            trace.push(rec);
        }
    }
    let accepted = trace.iter().filter(|r| r.accepted).count();
    let rejected = trace.len() - accepted;
    Ok(StartResult { start, initial: initial.clone(), design, trace, accepted, rejected })
}

/// A finished start with its replicate evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary<T> {
    pub result: StartResult<T>,
    /// Batch means of `reps` independent comparison-size evaluations.
    pub evaluations: Vec<T>,
    pub averaged_utility: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AceResult<T> {
    pub design: Design<T>,
    pub utility: T,
    pub selected: usize,
    /// Successful starts in start order.
    pub starts: Vec<StartSummary<T>>,
    pub failed_starts: usize,
}

impl<T: Real> AceResult<T> {
    pub fn accepted(&self) -> usize {
        self.starts.iter().map(|s| s.result.accepted).sum()
    }

    pub fn rejected(&self) -> usize {
        self.starts.iter().map(|s| s.result.rejected).sum()
    }

    pub fn trace(&self) -> impl Iterator<Item = &TraceRecord<T>> {
        self.starts.iter().flat_map(|s| s.result.trace.iter())
    }
}

/// `reps` independent comparison-size evaluations of one design.
pub fn replicate_evaluations<T: Real>(
    utility: &dyn Utility<T>,
    design: &Design<T>,
    cfg: NestedMcConfig,
    reps: usize,
    rng: &mut RngStream,
) -> Result<Vec<UtilitySampleBatch<T>>> {
    let base = rng.fork_seed();
    (0..reps).map(|c| utility.evaluate(design, cfg, &mut RngStream::new(base, c as u64))).collect()
}

/// Runs `cfg.starts` starts from random Latin hypercube designs with `n`
/// runs, each on its own stream, and selects the start with the largest
/// average over `cfg.reps` comparison-size evaluations (lowest index on ties).
pub fn multi_start<T: Real>(
    utility: &dyn Utility<T>,
    space: &DesignSpace<T>,
    n: usize,
    cfg: &AceConfig,
    rng: &mut RngStream,
) -> Result<AceResult<T>> {
    cfg.validate()?;
    let base = rng.fork_seed();
    let outcomes: Vec<Result<StartSummary<T>>> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut r = RngStream::new(base, s as u64);
            let initial = admissible_random_design(n, space, &mut r, INITIAL_DESIGN_TRIES)?;
            let result = run_ace(utility, space, cfg, &initial, s, &mut r)?;
            let evaluations: Vec<T> = replicate_evaluations(utility, &result.design, cfg.comparison(), cfg.reps, &mut r)?
                .into_iter()
                .map(|b| b.mean)
                .collect();
            let averaged_utility = crate::scalar::mean(&evaluations);
            log::info!("start {s}: averaged utility {averaged_utility}");
            Ok(StartSummary { result, evaluations, averaged_utility })
        })
        .collect();
    let mut starts = Vec::new();
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(s) => starts.push(s),
            Err(e) => {
                log::warn!("start failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    if starts.is_empty() {
        let msg = first_error.map(|e| e.to_string()).unwrap_or_default();
        return Err(AceError::AllStartsFailed(cfg.starts, msg));
    }
    let mut selected = 0;
    for (j, s) in starts.iter().enumerate() {
        if s.averaged_utility > starts[selected].averaged_utility {
            selected = j;
        }
    }
    let failed_starts = cfg.starts - starts.len();
    Ok(AceResult {
        design: starts[selected].result.design.clone(),
        utility: starts[selected].averaged_utility,
        selected: starts[selected].result.start,
        starts,
        failed_starts,
    })
}
