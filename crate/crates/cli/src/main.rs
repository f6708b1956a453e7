mod commands;
mod error;
mod mdp_file;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "softmdp", version, about = "Solve and cross-check entropy/KL-regularized tabular MDPs")]
struct Cli {
    /// Omit timestamps so identical inputs produce byte-identical output files
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate an MDP file
    Check { path: PathBuf },
    /// Write a seeded random MDP file
    Generate(GenerateArgs),
    /// Solve an MDP file with value iteration or policy iteration
    Solve(SolveArgs),
    /// Run both solver routes and report the gaps between their fixed points
    Compare(CompareArgs),
    /// Solve, then run the optimality certificates
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub states: usize,
    #[arg(long)]
    pub actions: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Reward interval as LO,HI
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    pub reward_range: String,
    /// Also draw a strictly positive random prior policy
    #[arg(long)]
    pub with_prior: bool,
    /// Output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Vi,
    Spi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    Entropy,
    Kl,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalModeArg {
    Iterative,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Kkt,
    Prop1,
    Exhaustive,
    All,
}

/// Solver settings shared by solve, compare and verify.
#[derive(Args, Clone)]
pub struct SolverFlags {
    /// Sup-norm stopping tolerance [default: $SOFTMDP_DEFAULT_TOL or 1e-10]
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = softmdp_core::solvers::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
    /// Use the uniform prior for --reg kl
    #[arg(long)]
    pub uniform_prior: bool,
}

#[derive(Args)]
pub struct SolveArgs {
    pub path: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Vi)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = RegArg::Entropy)]
    pub reg: RegArg,
    /// Temperature [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    /// Policy-evaluation mode for --method spi [default: exact]
    #[arg(long, value_enum)]
    pub eval_mode: Option<EvalModeArg>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Record per-iteration residuals in the report
    #[arg(long)]
    pub trace: bool,
    /// Report file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// MDP file (omit with --random-suite)
    pub path: Option<PathBuf>,
    /// Number of seeded random MDPs
    #[arg(long)]
    pub random_suite: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Inclusive state-count range LO..HI
    #[arg(long, default_value = "2..20")]
    pub states: String,
    /// Inclusive action-count range LO..HI
    #[arg(long, default_value = "2..8")]
    pub actions: String,
    /// Discount range LO..HI
    #[arg(long, default_value = "0.5..0.95")]
    pub gamma_range: String,
    /// Reward interval as LO,HI
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    pub reward_range: String,
    /// Regularizers to compare. Defaults to entropy,kl, dropping kl for a
    /// file without prior_policy unless --uniform-prior is given
    #[arg(long, value_enum, value_delimiter = ',')]
    pub reg: Option<Vec<RegArg>>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1,10")]
    pub eta_list: Vec<f64>,
    #[arg(long, default_value_t = softmdp_core::equivalence::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = EvalModeArg::Exact)]
    pub eval_mode: EvalModeArg,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Worker threads for the sweep (output is identical for any value)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Gap table path (stdout when omitted)
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Report file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    pub path: PathBuf,
    #[arg(long, value_enum, default_value_t = RegArg::Entropy)]
    pub reg: RegArg,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CheckKind::All)]
    pub checks: CheckKind,
    /// Dominated value functions drawn by the prop1 check
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simplex grid resolution for the exhaustive check
    #[arg(long, default_value_t = 11)]
    pub grid: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let deterministic = cli.deterministic;
    let result = match cli.command {
        Command::Check { path } => commands::check(&path),
        Command::Generate(args) => commands::generate(&args),
        Command::Solve(args) => commands::solve(&args, deterministic),
        Command::Compare(args) => commands::compare(&args, deterministic),
        Command::Verify(args) => commands::verify(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report_error(e: &CliError) {
    match e {
        CliError::Validation(violations) => {
            for v in violations {
                println!("{v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}
