//! `ronmf`: generate data, train online or batch factorizations, evaluate them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "ronmf", version, about = "Online NMF with sparse outliers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnlineSolver {
    Opgd,
    Oadmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BatchSolver {
    Bpgd,
    Badmm,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Data matrix (RONMF-MAT, one sample per column).
    #[arg(long)]
    pub data: PathBuf,
    /// Clean data, aligned with `--data`; enables the regret column and PSNR.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON configuration; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write 0 in the wall-clock column so traces are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a low-rank dataset with outliers and observation noise.
    Generate {
        #[arg(long, default_value_t = 400)]
        f: usize,
        #[arg(long, default_value_t = 49)]
        k_true: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0.7)]
        nu: f64,
        #[arg(long, default_value_t = 0.1)]
        nu_tilde: f64,
        /// Skip the standard-normal observation noise.
        #[arg(long)]
        no_noise: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add sparse outliers to a clean matrix.
    Contaminate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        nu_tilde: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream the data through an online solver.
    Train {
        #[arg(long, value_enum)]
        solver: OnlineSolver,
        /// Also write the coefficient matrix, one column per data column.
        #[arg(long)]
        save_coefficients: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Factorize the whole data matrix with a batch solver.
    TrainBatch {
        #[arg(long, value_enum)]
        solver: BatchSolver,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute `W H`, and `V − W H` when the data is given.
    Reconstruct {
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        coefficients: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR of `W H` against the clean data.
    EvalPsnr {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        coefficients: PathBuf,
        /// Append a row to this results CSV.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, default_value = "unnamed")]
        algorithm: String,
        #[arg(long, default_value = "default")]
        setting: String,
        #[arg(long, default_value_t = 0.0)]
        runtime: f64,
    },
    /// Run several solvers on one dataset; one trace per solver plus a summary.
    Compare {
        /// Comma-separated list drawn from opgd, oadmm, bpgd, badmm.
        #[arg(long, value_delimiter = ',', default_value = "opgd,oadmm,bpgd,badmm")]
        solvers: Vec<String>,
        /// Label for the `setting` column of the summary.
        #[arg(long, default_value = "default")]
        setting: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(val) = std::env::var("RONMF_THREADS") {
        let n: usize = val
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("RONMF_THREADS must be a positive integer, got `{val}`"))?;
        if n == 0 {
            anyhow::bail!("RONMF_THREADS must be a positive integer, got `{val}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Generate {
            f,
            k_true,
            n,
            nu,
            nu_tilde,
            no_noise,
            seed,
            out,
        } => commands::generate(
            &ronmf::datagen::SynthSpec {
                f,
                k_true,
                n,
                nu,
                nu_tilde,
                noise: !no_noise,
                seed,
            },
            &out,
        ),
        Command::Contaminate {
            input,
            nu,
            nu_tilde,
            m,
            seed,
            out,
        } => commands::contaminate(&input, nu, nu_tilde, m, seed, &out),
        Command::Train {
            solver,
            save_coefficients,
            run,
        } => commands::train(solver, save_coefficients, &run).map(|_| ()),
        Command::TrainBatch { solver, run } => commands::train_batch(solver, &run).map(|_| ()),
        Command::Reconstruct {
            dictionary,
            coefficients,
            data,
            out,
        } => commands::reconstruct(&dictionary, &coefficients, data.as_deref(), &out),
        Command::EvalPsnr {
            clean,
            dictionary,
            coefficients,
            results,
            algorithm,
            setting,
            runtime,
        } => commands::eval_psnr(&clean, &dictionary, &coefficients, results.as_deref(), &algorithm, &setting, runtime),
        Command::Compare { solvers, setting, run } => commands::compare(&solvers, &setting, &run),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
