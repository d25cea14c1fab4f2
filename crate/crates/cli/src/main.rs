//! `ace`: run, evaluate and compare Bayesian designs from a JSON problem file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{GridSpec, LhsKind, Overrides};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ace", version, about = "Bayesian optimal design by approximate coordinate exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Problem configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Outer Monte Carlo size for comparisons and evaluations.
    #[arg(long = "B", value_name = "N")]
    b: Option<usize>,
    /// Replicate evaluations.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run multi-start ACE and write design.csv, trace.csv and summary.csv.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Write `reps` independent utility evaluations of a design to evaluation.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
    },
    /// Print the D-efficiency (percent) of DESIGN1 relative to DESIGN2.
    Efficiency {
        #[command(flatten)]
        common: Common,
        design1: PathBuf,
        design2: PathBuf,
    },
    /// Evaluate the utility over a grid of one- or two-coordinate designs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `random:N` or `regular:K`.
        #[arg(long, default_value = "regular:41")]
        grid: GridSpec,
    },
    /// Write a comparator Latin hypercube design to lhs.csv.
    Lhs {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = LhsKind::Maximin)]
        kind: LhsKind,
        /// Annealing iterations for the maximin construction.
        #[arg(long, default_value_t = 20_000)]
        iterations: usize,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Optimize { common }
            | Self::Evaluate { common, .. }
            | Self::Efficiency { common, .. }
            | Self::Sweep { common, .. }
            | Self::Lhs { common, .. } => common,
        }
    }
}

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("ACE_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => return Err(CliError::Config(format!("ACE_LOG must be quiet, info or debug, not `{other}`"))),
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging()?;
    let common = cli.command.common();
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let mut problem = config::load(&common.config)?;
    Overrides { seed: common.seed, out: common.out.clone(), b: common.b, reps: common.reps }.apply(&mut problem)?;
    match &cli.command {
        Command::Optimize { .. } => commands::optimize(&problem),
        Command::Evaluate { design, .. } => commands::evaluate(&problem, design),
        Command::Efficiency { design1, design2, .. } => {
            let eff = commands::efficiency(&problem, design1, design2)?;
            println!("{eff:.2}");
            Ok(())
        }
        Command::Sweep { grid, .. } => commands::sweep(&problem, *grid),
        Command::Lhs { kind, iterations, .. } => commands::lhs(&problem, *kind, *iterations),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
