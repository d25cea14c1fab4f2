use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use acedesign::ace::replicate_evaluations;
use acedesign::io::{read_design_csv, write_design_csv, write_summary_csv, write_table, write_trace_csv};
use acedesign::sampling::{admissible_random_design, maximin_lhs};
use acedesign::utilities::d_efficiency;
use acedesign::{multi_start, CoordinateDomain, Design, NestedMcConfig, RngStream};
use rayon::prelude::*;

use crate::config::Problem;
use crate::error::CliError;

pub const EVALUATION_HEADER: [&str; 3] = ["rep", "utility_estimate", "standard_error"];

/// Settings shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub b: Option<usize>,
    pub reps: Option<usize>,
}

impl Overrides {
    /// Folds the command-line overrides into the problem configuration.
    pub fn apply(&self, problem: &mut Problem) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            problem.config.seed = s;
        }
        if let Some(o) = &self.out {
            problem.config.output_dir = o.clone();
        }
        if let Some(b) = self.b {
            problem.config.ace.b = b;
        }
        if let Some(r) = self.reps {
            problem.config.ace.reps = r;
        }
        problem.config.ace.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

fn output_file(problem: &Problem, name: &str) -> Result<BufWriter<File>, CliError> {
    let dir = &problem.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn metadata(problem: &Problem) -> Vec<(&'static str, String)> {
    vec![
        ("seed", problem.config.seed.to_string()),
        ("config", problem.compact_config()),
        ("utility", problem.utility.name().to_string()),
        ("model", problem.model_name()),
    ]
}

pub fn read_design(path: &Path) -> Result<Design<f64>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read design {}: {e}", path.display())))?;
    read_design_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn optimize(problem: &Problem) -> Result<(), CliError> {
    let cfg = &problem.config.ace;
    log::info!(
        "optimizing {} for {} with {} runs, {} starts",
        problem.utility.name(),
        problem.model_name(),
        problem.runs,
        cfg.starts
    );
    let mut rng = RngStream::new(problem.config.seed, 0);
    let result = multi_start(problem.utility.as_ref(), &problem.space, problem.runs, cfg, &mut rng)?;
    log::info!(
        "start {} selected, averaged utility {:.6}, {} accepted / {} rejected",
        result.selected,
        result.utility,
        result.accepted(),
        result.rejected()
    );
    let mut design = Vec::new();
    write_design_csv(&mut design, &result.design, &metadata(problem))?;
    let mut trace = Vec::new();
    write_trace_csv(&mut trace, result.trace())?;
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &result)?;
    output_file(problem, "design.csv")?.write_all(&design)?;
    output_file(problem, "trace.csv")?.write_all(&trace)?;
    output_file(problem, "summary.csv")?.write_all(&summary)?;
    Ok(())
}

pub fn evaluate(problem: &Problem, design_path: &Path) -> Result<(), CliError> {
    let design = read_design(design_path)?;
    problem.check_design(&design, "design")?;
    let cfg = problem.config.ace.comparison();
    let reps = problem.config.ace.reps;
    log::info!("evaluating {} replicate(s) at B = {}", reps, cfg.outer);
    let mut rng = RngStream::new(problem.config.seed, 0);
    let batches = replicate_evaluations(problem.utility.as_ref(), &design, cfg, reps, &mut rng)?;
    let rows: Vec<Vec<f64>> =
        batches.iter().enumerate().map(|(c, b)| vec![c as f64, b.mean, b.standard_error()]).collect();
    let mut buf = Vec::new();
    write_table(&mut buf, &EVALUATION_HEADER, rows)?;
    output_file(problem, "evaluation.csv")?.write_all(&buf)?;
    Ok(())
}

/// D-efficiency of the first design relative to the second, in percent.
pub fn efficiency(problem: &Problem, first: &Path, second: &Path) -> Result<f64, CliError> {
    let model = problem
        .model
        .as_ref()
        .filter(|m| m.provides_fisher_information())
        .ok_or_else(|| CliError::Config(format!("{} provides no Fisher information", problem.model_name())))?;
    let d1 = read_design(first)?;
    let d2 = read_design(second)?;
    for (d, label) in [(&d1, "first design"), (&d2, "second design")] {
        if d.variables() != problem.variables() {
            return Err(CliError::Config(format!(
                "{label} has {} variables, the problem {}",
                d.variables(),
                problem.variables()
            )));
        }
    }
    let mut rng = RngStream::new(problem.config.seed, 0);
    let eff = d_efficiency(&d1, &d2, model.as_ref(), model.interest_dim(), problem.config.ace.b, &mut rng)?;
    Ok(eff.percent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpec {
    /// `N` designs drawn uniformly from the design space.
    Random(usize),
    /// `K` evenly spaced values per free coordinate (grid domains use their own points).
    Regular(usize),
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, count) = s.split_once(':').ok_or_else(|| format!("grid spec `{s}` is not KIND:COUNT"))?;
        let count: usize = count.parse().map_err(|_| format!("grid count `{count}` is not a positive integer"))?;
        if count == 0 {
            return Err("grid count must be positive".into());
        }
        match kind {
            "random" => Ok(Self::Random(count)),
            "regular" => Ok(Self::Regular(count)),
            _ => Err(format!("unknown grid kind `{kind}`; use random or regular")),
        }
    }
}

fn regular_axis(domain: &CoordinateDomain<f64>, k: usize) -> Vec<f64> {
    match domain {
        CoordinateDomain::Grid(points) => points.clone(),
        _ => {
            let (lo, hi) = (domain.lo(), domain.hi());
            if k == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect()
            }
        }
    }
}

/// Sweep points as flattened designs (column-major like [`Design`]).
pub fn sweep_points(problem: &Problem, grid: GridSpec, rng: &mut RngStream) -> Result<Vec<Vec<f64>>, CliError> {
    let free = problem.runs * problem.variables();
    if free > 2 {
        return Err(CliError::Config(format!("a sweep allows at most 2 free coordinates, this design has {free}")));
    }
    let probe = Design::new(problem.runs, problem.variables(), vec![0.0; free])?;
    let domains: Vec<&CoordinateDomain<f64>> = (0..free).map(|i| problem.space.domain_of(&probe, i)).collect();
    Ok(match grid {
        GridSpec::Random(n) => (0..n).map(|_| domains.iter().map(|d| d.sample(rng)).collect()).collect(),
        GridSpec::Regular(k) => {
            let axes: Vec<Vec<f64>> = domains.iter().map(|d| regular_axis(d, k)).collect();
            match axes.as_slice() {
                [a] => a.iter().map(|&x| vec![x]).collect(),
                [a, b] => a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect(),
                _ => vec![vec![]],
            }
        }
    })
}

pub fn sweep_header(free: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=free).map(|i| format!("c{i}")).collect();
    h.extend(["utility_estimate", "standard_error", "admissible"].map(String::from));
    h
}

pub fn sweep(problem: &Problem, grid: GridSpec) -> Result<(), CliError> {
    let mut rng = RngStream::new(problem.config.seed, 0);
    let points = sweep_points(problem, grid, &mut rng)?;
    let cfg: NestedMcConfig = problem.config.ace.comparison();
    let base = rng.fork_seed();
    log::info!("sweeping {} point(s) at B = {}", points.len(), cfg.outer);
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<Vec<f64>, CliError> {
            let design = Design::new(problem.runs, problem.variables(), x.clone())?;
            let mut row = x.clone();
            if problem.space.admits(&design) {
                let batch = problem.utility.evaluate(&design, cfg, &mut RngStream::new(base, idx as u64))?;
                row.extend([batch.mean, batch.standard_error(), 1.0]);
            } else {
                row.extend([0.0, 0.0, 0.0]);
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let header = sweep_header(problem.runs * problem.variables());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut buf = Vec::new();
    write_table(&mut buf, &header, rows)?;
    output_file(problem, "sweep.csv")?.write_all(&buf)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LhsKind {
    Maximin,
    Random,
}

pub fn lhs(problem: &Problem, kind: LhsKind, iterations: usize) -> Result<(), CliError> {
    let mut rng = RngStream::new(problem.config.seed, 0);
    let (n, v) = (problem.runs, problem.variables());
    let design = match kind {
        LhsKind::Maximin => {
            let d = maximin_lhs(n, v, &problem.space.domains, iterations, &mut rng)?;
            if !problem.space.admits(&d) {
                return Err(CliError::Runtime("the maximin Latin hypercube violates the design constraint".into()));
            }
            d
        }
        LhsKind::Random => admissible_random_design(n, &problem.space, &mut rng, 10_000)?,
    };
    let mut meta = metadata(problem);
    meta.push(("lhs", format!("{kind:?}").to_lowercase()));
    let mut buf = Vec::new();
    write_design_csv(&mut buf, &design, &meta)?;
    output_file(problem, "lhs.csv")?.write_all(&buf)?;
    Ok(())
}
