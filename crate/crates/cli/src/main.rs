use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gecco::GeccoError;

mod commands;
mod config;
mod io;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Solver(String),
    Io(String),
}

impl CliError {
    /// Classifies a library error raised while loading data or fitting.
    fn from_fit(e: GeccoError) -> CliError {
        match e {
            GeccoError::InvalidParameter(m) => CliError::Config(m),
            GeccoError::Numerical(_) | GeccoError::Diverged { .. } => CliError::Solver(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "gecco", version, about = "Generalized convex clustering")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run single-threaded so repeated runs give identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit at the configured gamma and alpha.
    Fit(RunArgs),
    /// Fit a grid of gamma and alpha values.
    Path(RunArgs),
    /// Adaptive feature and fusion weighting.
    Adaptive(RunArgs),
    /// Write a simulated dataset with its truth and a config.
    Simulate {
        /// spherical, halfmoons, poisson, or a multi-view scenario S1..S6.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Samples for the single-view scenarios.
        #[arg(long, default_value_t = 120)]
        n: usize,
        #[arg(long, default_value_t = 25)]
        noise_features: usize,
        #[arg(long, default_value_t = 0.05)]
        outliers: f64,
        /// View widths for a multi-view scenario, e.g. `60,30,15`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        dims: Option<Vec<usize>>,
    },
    /// Adjusted Rand index, and selection F1 when masks are given.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, requires = "masks")]
        selected: Option<PathBuf>,
        #[arg(long, requires = "selected")]
        masks: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&commands::Run::new(&a.config, a.seed, &a.out)?),
        Command::Path(a) => commands::path(&commands::Run::new(&a.config, a.seed, &a.out)?),
        Command::Adaptive(a) => commands::adaptive(&commands::Run::new(&a.config, a.seed, &a.out)?),
        Command::Simulate {
            scenario,
            seed,
            out,
            n,
            noise_features,
            outliers,
            dims,
        } => {
            let dims = dims.map(|d| [d[0], d[1], d[2]]);
            let args = commands::SimulateArgs {
                scenario,
                seed,
                n,
                noise_features,
                outliers,
                dims,
            };
            commands::simulate(&args, &out).map(|_| true)
        }
        Command::Evaluate {
            labels,
            truth,
            selected,
            masks,
            out,
        } => {
            let args = commands::EvaluateArgs {
                labels,
                truth,
                selected,
                masks,
            };
            commands::evaluate(&args, &out).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(cli);
    eprintln!("wall time {:.3?}", start.elapsed());
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("solver did not converge; results were written and flagged");
            ExitCode::from(4)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.code())
        }
    }
}
