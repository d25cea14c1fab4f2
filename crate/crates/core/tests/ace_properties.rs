use std::sync::Arc;

use acedesign::models::PoissonToy;
use acedesign::utilities::{pseudo_bayes_d, PseudoD};
use acedesign::{
    bayes_t_accept, multi_start, phase1_coordinate_step, phase1_sweep, phase2_point_exchange, run_ace, AceConfig,
    CoordinateDomain, Design, DesignSpace, NestedMcConfig, Phase, RngStream, Utility, UtilitySampleBatch,
};

fn unit_space(v: usize) -> DesignSpace<f64> {
    DesignSpace::new(vec![CoordinateDomain::interval(-1.0, 1.0).unwrap(); v])
}

/// `E[2 log|x| + beta x]` under the default `N(0.5, 1)` prior.
fn toy_expected(x: f64) -> f64 {
    2.0 * x.abs().ln() + 0.5 * x
}

fn toy() -> PseudoD<f64> {
    PseudoD { model: Arc::new(PoissonToy::default()) }
}

// The emulator peaks slightly inside the largest training point (the log
// singularity at 0 forces a short length scale), so one step lands in the
// top stratum rather than exactly on the boundary.
#[test]
fn one_step_moves_toward_the_toy_optimum() {
    let utility = toy();
    let space = unit_space(1);
    let start = Design::new(1, 1, vec![0.5]).unwrap();
    let cfg = AceConfig::default();
    let mut rng = RngStream::new(1001, 0);
    let reps = 50;
    let hits = (0..reps)
        .filter(|_| {
            let (next, _) = phase1_coordinate_step(&start, 0, &utility, &space, &cfg, 0, 0, &mut rng).unwrap();
            (0.85..=1.0).contains(&next.coordinate(0))
        })
        .count();
    assert!(hits * 10 >= reps * 9, "{hits}/{reps} steps landed in [0.85, 1]");
}

#[test]
fn worse_candidate_is_rejected() {
    let model = PoissonToy::default();
    let good = Design::new(1, 1, vec![1.0]).unwrap();
    let bad = Design::new(1, 1, vec![0.5]).unwrap();
    let mut rng = RngStream::new(1002, 0);
    let trials = 50;
    let rejected = (0..trials)
        .filter(|_| {
            let new = pseudo_bayes_d(&model, &bad, 20_000, &mut rng).unwrap();
            let cur = pseudo_bayes_d(&model, &good, 20_000, &mut rng).unwrap();
            !bayes_t_accept(&new, &cur, &mut rng).unwrap().1
        })
        .count();
    assert!(rejected * 10 >= trials * 9);
}

struct Flat;

impl Utility<f64> for Flat {
    fn name(&self) -> &str {
        "flat"
    }
    fn evaluate(&self, _: &Design<f64>, cfg: NestedMcConfig, _: &mut RngStream) -> acedesign::Result<UtilitySampleBatch<f64>> {
        Ok(UtilitySampleBatch::from_values(vec![3.0; cfg.outer]))
    }
}

#[test]
fn constant_utility_leaves_design_unchanged() {
    let space = unit_space(2);
    let d = Design::new(3, 2, vec![0.1, -0.4, 0.7, 0.2, 0.0, -0.9]).unwrap();
    let cfg = AceConfig { b: 10, b_emulator: 10, ..AceConfig::default() };
    let (next, trace) = phase1_sweep(&d, &Flat, &space, &cfg, 0, 0, &mut RngStream::new(3, 0)).unwrap();
    assert_eq!(next, d);
    assert_eq!(trace.len(), 6);
    assert!(trace.iter().all(|r| !r.accepted));
}

#[test]
fn phase_one_trace_length_is_sweeps_times_coordinates() {
    let space = unit_space(1);
    let d = Design::new(3, 1, vec![0.3, -0.6, 0.9]).unwrap();
    let cfg = AceConfig { b: 200, b_emulator: 50, phase1_sweeps: 4, phase2_enabled: false, ..AceConfig::default() };
    let r = run_ace(&toy(), &space, &cfg, &d, 0, &mut RngStream::new(4, 0)).unwrap();
    assert_eq!(r.trace.len(), 4 * 3);
    assert!(r.trace.iter().all(|t| t.phase == Phase::I));
    for (k, t) in r.trace.iter().enumerate() {
        assert_eq!((t.sweep, t.index), (k / 3, k % 3));
    }
    // At most one coordinate moves per step.
    let mut prev = d.clone();
    for t in &r.trace {
        let moved = prev.values().iter().zip(t.design.values()).filter(|(a, b)| a != b).count();
        assert!(moved <= 1);
        prev = t.design.clone();
    }
}

/// With a point prior the pseudo-D utility `log sum x^2 e^{beta x}` is exact,
/// so a clustered pair consolidates onto the better point deterministically.
#[test]
fn clustered_runs_consolidate() {
    let utility = PseudoD { model: Arc::new(PoissonToy::with_point_prior(0.5)) };
    let space = unit_space(1);
    let d = Design::new(2, 1, vec![1.0, 0.9]).unwrap();
    let u = |xs: &[f64]| xs.iter().map(|x| x * x * (0.5 * x).exp()).sum::<f64>().ln();
    assert!(u(&[1.0, 1.0]) > u(&[1.0, 0.9]));
    let cfg = AceConfig { b: 100, b_emulator: 20, ..AceConfig::default() };
    let mut rng = RngStream::new(5, 0);
    let trials = 20;
    let consolidated = (0..trials)
        .filter(|&it| {
            let (next, _) = phase2_point_exchange(&d, &utility, &space, &cfg, 0, it, &mut rng).unwrap();
            next.values() == [1.0, 1.0]
        })
        .count();
    assert!(consolidated * 10 >= trials * 9, "{consolidated}/{trials}");
}

#[test]
fn toy_starts_improve_and_selection_finds_optimum() {
    let space = unit_space(1);
    let res = multi_start(&toy(), &space, 1, &AceConfig::default(), &mut RngStream::new(2016, 0)).unwrap();
    assert_eq!(res.starts.len(), 20);
    assert!((res.design.coordinate(0) - 1.0).abs() < 0.01, "selected {}", res.design.coordinate(0));
    let improved = res
        .starts
        .iter()
        .filter(|s| toy_expected(s.result.design.coordinate(0)) > toy_expected(s.result.initial.coordinate(0)))
        .count();
    assert!(improved >= 19, "{improved}/20 starts improved");
    let best = res.starts.iter().map(|s| s.averaged_utility).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.utility, best);
}
