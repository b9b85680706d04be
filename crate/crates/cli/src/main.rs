//! `hmmr`: realization analysis, reduction and tensor certification for HMMs
//! with deterministic observations.
//!
//! Exit codes: 0 success, 1 file or parse error, 2 invalid input or flags,
//! 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmmr_core::{Error, ReductionKind, Tolerances};

#[derive(Debug, Parser)]
#[command(name = "hmmr", version, about = "Realization reduction for HMMs with deterministic observations")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Rank threshold multiplier in max(dims)*eps*sigma_max*factor.
    #[arg(long, global = true, default_value_t = 1e3)]
    tol_rank: f64,
    /// Tolerance for algebraic residuals.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_res: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl GlobalOpts {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            res: self.tol_res,
            rank_factor: self.tol_rank,
            ..Tolerances::default()
        }
    }

    pub fn json(&self) -> bool {
        self.format == Format::Json
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Reachable,
    Null,
    Effective,
}

impl From<Mode> for ReductionKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Reachable => ReductionKind::Reachable,
            Mode::Null => ReductionKind::Null,
            Mode::Effective => ReductionKind::Effective,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dimensions of the reachable, null and effective spaces.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the bases T_R, T_N and T as JSON.
        #[arg(long)]
        bases: Option<PathBuf>,
    },
    /// Reduce a model and write the reduced quasi-realization.
    Reduce {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Compare the original and reduced tensors at this depth.
        #[arg(long)]
        check_depth: Option<usize>,
    },
    /// Build the depth-n tensor and check its factorization.
    Tensor {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        factors_out: Option<PathBuf>,
        /// A model (typically reduced) whose tensor must agree.
        #[arg(long)]
        check_against: Option<PathBuf>,
        /// Write the dense tensor.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank of the truncated generalized Hankel matrix.
    Hankel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// Sample a path and compare window frequencies with the exact tensor.
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        emit_empirical: Option<PathBuf>,
    },
    /// Generate a built-in example model.
    Example {
        #[command(subcommand)]
        which: ExampleCommand,
    },
    /// Analyze, reduce, certify tensors and check the Hankel rank in one run.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        depth: usize,
        /// Hankel truncation depth; defaults to the number of states.
        #[arg(long)]
        hankel_depth: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum ExampleCommand {
    /// The binary-output chain on m + 1 states with a four-dimensional
    /// reachable space.
    FoxRubin {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Audit the published closed-form reduced system.
        #[arg(long)]
        paper_check: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse(_) => 1,
        Error::Dimension(_)
        | Error::SymbolOutOfRange { .. }
        | Error::InvalidModel(_)
        | Error::InvalidParams(_)
        | Error::NotProper(_)
        | Error::PathTooShort { .. } => 2,
        Error::EigenvalueNotSimple { .. }
        | Error::AssumptionViolated { .. }
        | Error::ReductionInconsistent { .. }
        | Error::ClosureDiverged(_)
        | Error::SizeExceeded { .. } => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("HMMR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParams(format!("HMMR_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let g = &cli.global;
    if !(g.tol_res > 0.0 && g.tol_rank > 0.0) {
        return Err(Error::InvalidParams("tolerances must be positive".into()));
    }
    match cli.command {
        Command::Analyze { input, bases } => commands::analyze(g, &input, bases.as_deref()),
        Command::Reduce {
            mode,
            input,
            out,
            check_depth,
        } => commands::reduce(g, mode.into(), &input, &out, check_depth),
        Command::Tensor {
            input,
            depth,
            factors_out,
            check_against,
            out,
        } => commands::tensor(g, &input, depth, factors_out.as_deref(), check_against.as_deref(), out.as_deref()),
        Command::Hankel { input, depth } => commands::hankel(g, &input, depth),
        Command::Simulate {
            input,
            steps,
            seed,
            depth,
            emit_empirical,
        } => commands::simulate(g, &input, steps, seed, depth, emit_empirical.as_deref()),
        Command::Example {
            which:
                ExampleCommand::FoxRubin {
                    m,
                    lambda,
                    out,
                    paper_check,
                },
        } => commands::fox_rubin(g, m, lambda, out.as_deref(), paper_check),
        Command::Pipeline {
            input,
            depth,
            hankel_depth,
        } => commands::pipeline(g, &input, depth, hankel_depth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
