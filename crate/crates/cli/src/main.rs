//! `hk`: Hellinger-Kantorovich distances, plans, barycenters and dual checks
//! from the command line.
//!
//! Exit codes: 0 success, 1 input or validation failure, 2 non-convergence
//! (the report is still written), 3 tuple budget exceeded.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hk_core::HkError;

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NONCONVERGENCE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hk", version, about = "Hellinger-Kantorovich transport toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug, Clone)]
pub struct Flags {
    /// Target duality gap of the entropy-transport solver.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Regularization schedule as start:end:factor.
    #[arg(long, global = true, value_name = "A:B:FACTOR")]
    pub epsilon_schedule: Option<String>,
    /// Scaling iteration budget per solve.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Candidate grid points per axis.
    #[arg(long, global = true, value_name = "N")]
    pub grid: Option<usize>,
    /// Padding of the candidate grid around the supports.
    #[arg(long, global = true, value_name = "X")]
    pub pad: Option<f64>,
    /// Largest product of support sizes the multimarginal solver accepts.
    #[arg(long, global = true)]
    pub tuple_budget: Option<usize>,
    /// Output path; `bary` writes the measure here and the report next to it.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Barycenter weights, comma separated.
    #[arg(long, global = true, value_delimiter = ',', value_name = "W1,W2,...")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// HK distance between two measures.
    Dist { a: PathBuf, b: PathBuf },
    /// Optimal entropy-transport plan between two measures.
    Plan { a: PathBuf, b: PathBuf },
    /// Barycenter of several measures.
    Bary {
        #[arg(required = true)]
        measures: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaryMethod::Multimarginal)]
        method: BaryMethod,
    },
    /// Dual value of a set of potentials and its gap to a barycenter.
    DualCheck {
        #[arg(required = true)]
        measures: Vec<PathBuf>,
        /// Potential file, one per measure, in order.
        #[arg(long = "potential", short = 'f', required = true)]
        potentials: Vec<PathBuf>,
        /// Primal barycenter to certify; solved for when absent.
        #[arg(long)]
        barycenter: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaryMethod::Multimarginal)]
        method: BaryMethod,
    },
    /// Samples of the geodesic between two Dirac measures, as CSV.
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = CurveKind::Hellinger)]
        kind: CurveKind,
        /// Sample s = k/steps for k = 0..=steps.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Explicit curve parameters; overrides --steps.
        #[arg(long, value_delimiter = ',')]
        s: Option<Vec<f64>>,
        /// Also check the constant-speed property over the samples.
        #[arg(long)]
        verify: bool,
    },
    /// Pairwise transport costs between two supports, as CSV.
    CostMatrix { a: PathBuf, b: PathBuf },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaryMethod {
    Multimarginal,
    FixedPoint,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Hellinger,
    Transport,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<HkError> for Failure {
    fn from(e: HkError) -> Self {
        let code = match &e {
            HkError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            HkError::TupleBudgetExceeded { .. } => EXIT_BUDGET,
            _ => EXIT_INPUT,
        };
        let mut message = e.to_string();
        if code == EXIT_BUDGET {
            message.push_str("; rerun with --method fixed-point or raise --tuple-budget");
        }
        Failure { code, message }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("HK_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::input(format!("HK_THREADS must be a positive integer, got \"{v}\""))
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::input(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    init_threads()?;
    let cfg = config::RunConfig::from_flags(&cli.flags)?;
    let weights = cli.flags.weights.as_deref();
    match cli.command {
        Command::Dist { a, b } => commands::dist(&cfg, &a, &b),
        Command::Plan { a, b } => commands::plan(&cfg, &a, &b),
        Command::Bary { measures, method } => commands::bary(&cfg, &measures, weights, method),
        Command::DualCheck { measures, potentials, barycenter, method } => {
            commands::dual_check(&cfg, &measures, &potentials, weights, barycenter.as_deref(), method)
        }
        Command::Geodesic { a, b, kind, steps, s, verify } => {
            commands::geodesic(&cfg, &a, &b, kind, steps, s.as_deref(), verify)
        }
        Command::CostMatrix { a, b } => commands::cost_matrix(&cfg, &a, &b),
    }
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own code 2 means non-convergence here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("hk: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
