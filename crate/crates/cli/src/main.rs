use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resalign_cli::commands::{
    cmd_metrics, cmd_svd_bench, cmd_theory, cmd_train, cmd_ujm, BenchOptions, TheoryOptions, UjmOptions,
};
use resalign_cli::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "resalign", version, about = "Residual Jacobian alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.ckpt, history.csv and config.toml.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Write into this directory instead of <output_dir>/<hash>-<time>.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Residual Alignment and Neural Collapse metrics of a checkpoint.
    Metrics {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to config.toml next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        inputs: Option<usize>,
        #[arg(long)]
        start_depth: Option<usize>,
    },
    /// Solve the Unconstrained Jacobians Model and compare with its optimum.
    Ujm {
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1e-2)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 20000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class label, +1 or -1.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        label: f64,
        /// Comma-separated probe input; seeded Gaussian when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta_x: Option<Vec<f64>>,
        #[arg(long, default_value = "runs")]
        output_dir: PathBuf,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Check the rank-one construction and the trace inequality.
    Theory {
        #[arg(long, default_value_t = 16)]
        blocks: usize,
        #[arg(long, default_value_t = 12)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 5)]
        trace_n: usize,
        #[arg(long, default_value_t = 3)]
        trace_m: usize,
        /// Test hook: perturb the constructed singular values by this
        /// relative amount, which must fail the checks.
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_singular_values: f64,
        #[arg(long, default_value = "runs")]
        output_dir: PathBuf,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Randomized against exact SVD accuracy and timing.
    SvdBench {
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, default_value_t = 5)]
        matrices: usize,
        #[arg(long, default_value_t = 0.9)]
        decay: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        output_dir: PathBuf,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, run_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = cmd_train(&cfg, run_dir.as_deref())?;
            let last = out.history.last().expect("at least one epoch");
            println!(
                "{}: loss {:.6}, train accuracy {:.4}",
                out.run_dir.display(),
                last.loss,
                last.train_accuracy
            );
        }
        Command::Metrics {
            checkpoint,
            config,
            out_dir,
            k,
            inputs,
            start_depth,
        } => {
            let dir = checkpoint.parent().map(PathBuf::from).unwrap_or_default();
            let mut cfg = ExperimentConfig::load(&config.unwrap_or_else(|| dir.join("config.toml")))?;
            if let Some(k) = k {
                cfg.metrics.k = k;
            }
            if let Some(n) = inputs {
                cfg.metrics.inputs = n;
            }
            if start_depth.is_some() {
                cfg.metrics.start_depth = start_depth;
            }
            let out = cmd_metrics(&checkpoint, &cfg, &out_dir.unwrap_or(dir))?;
            for f in &out.files {
                println!("{}", f.display());
            }
        }
        Command::Ujm {
            blocks,
            dim,
            lambda,
            lr,
            iters,
            seed,
            label,
            delta_x,
            output_dir,
            run_dir,
        } => {
            let dim = delta_x.as_ref().map_or(dim, Vec::len);
            let opts = UjmOptions {
                blocks,
                dim,
                lambda,
                lr,
                iters,
                seed,
                label,
                delta_x,
            };
            let out = cmd_ujm(&opts, &output_dir, run_dir.as_deref())?;
            let v = &out.verdict;
            println!(
                "{}: objective {:.12e}, loss gap {:.3e}, rank-1 ratio {:.3e}, alignment {:.6}",
                out.run_dir.display(),
                v.objective,
                v.loss_gap.unwrap_or(f64::NAN),
                v.max_rank1_ratio(),
                v.alignment
            );
        }
        Command::Theory {
            blocks,
            dim,
            seed,
            trials,
            trace_n,
            trace_m,
            perturb_singular_values,
            output_dir,
            run_dir,
        } => {
            let opts = TheoryOptions {
                blocks,
                dim,
                seed,
                trace_n,
                trace_m,
                trials,
                perturb: perturb_singular_values,
            };
            let out = cmd_theory(&opts, &output_dir, run_dir.as_deref())?;
            for c in &out.checks {
                let verdict = if c.passed() { "pass" } else { "FAIL" };
                println!("{verdict} {} = {:e} (deviation {:e})", c.name, c.value, c.deviation());
            }
            println!("{}", out.run_dir.display());
            out.into_result()?;
        }
        Command::SvdBench {
            dim,
            k,
            iterations,
            matrices,
            decay,
            seed,
            output_dir,
            run_dir,
        } => {
            let opts = BenchOptions {
                dim,
                k,
                iterations,
                matrices,
                decay,
                seed,
            };
            let (dir, rows) = cmd_svd_bench(&opts, &output_dir, run_dir.as_deref())?;
            for r in &rows {
                println!(
                    "matrix {}: randomized {:.4}s, exact {:.4}s, max relative error {:.2e}",
                    r.matrix, r.randomized_seconds, r.exact_seconds, r.max_rel_err
                );
            }
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(resalign::Error::SolverDiverged { history, .. }) = &e {
                eprintln!("objective history ({} values): {:?}", history.len(), history);
            }
            ExitCode::from(e.exit_code())
        }
    }
}
