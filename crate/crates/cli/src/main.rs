use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmse::mvn::{DEFAULT_MAX_SAMPLES, DEFAULT_TOL};
use dmse_cli::*;

/// Deep multi-species embedding: joint species distribution models.
#[derive(Parser)]
#[command(name = "dmse", version)]
struct Cli {
    /// Worker threads for gradient and likelihood work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write a checkpoint.
    Train {
        /// Training CSV with `sp:` presence and `env:` feature columns.
        #[arg(long)]
        data: PathBuf,
        /// Flat `key = value` training config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Line-delimited JSON log (default: <out>.log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Held-out CSV scored at each evaluation step.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Keep only the K most frequently present species.
        #[arg(long, value_name = "K")]
        top_species: Option<usize>,
        /// Config override `key=value`; repeatable, wins over --config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Relative tolerance of each likelihood integral.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_SAMPLES)]
        max_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report prefix; writes <out>.txt and <out>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal and joint presence probabilities for new sites.
    Predict {
        #[arg(long)]
        features_csv: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Patterns over 0, 1 and ? in species order, e.g. `1?0`.
        #[arg(long, value_delimiter = ',')]
        joint_patterns: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write embeddings, the correlation matrix and top species pairs.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Rows in the top-pairs table (default: all pairs).
        #[arg(long)]
        top: Option<usize>,
    },
    /// K-fold cross-validation.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Generate a synthetic dataset and its ground truth.
    Synth {
        #[arg(long)]
        spec_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Train {
            data,
            config,
            out,
            seed,
            log,
            validation,
            top_species,
            overrides,
        } => {
            let summary = cmd_train(&TrainArgs {
                data,
                config,
                overrides,
                out: out.clone(),
                log,
                validation,
                top_species,
                seed,
            })?;
            println!(
                "wrote {} ({} parameters, {} steps{}); log {}",
                out.display(),
                summary.params.n_params(),
                summary.steps,
                if summary.stopped_early {
                    ", stopped early"
                } else {
                    ""
                },
                summary.log.display()
            );
        }
        Command::Eval {
            data,
            model,
            tol,
            max_samples,
            seed,
            out,
        } => {
            let report = cmd_eval(&EvalArgs {
                data,
                model,
                tol,
                max_samples,
                seed,
                out,
            })?;
            print!("{}", report.to_text());
        }
        Command::Predict {
            features_csv,
            model,
            out,
            joint_patterns,
            tol,
            seed,
        } => {
            let rows = cmd_predict(&PredictArgs {
                features: features_csv,
                model,
                out: out.clone(),
                joint_patterns,
                tol,
                seed,
            })?;
            println!("wrote {} rows to {}", rows, out.display());
        }
        Command::Export {
            model,
            out_dir,
            top,
        } => {
            cmd_export(&ExportArgs {
                model,
                out_dir: out_dir.clone(),
                top,
            })?;
            println!("wrote {}", out_dir.display());
        }
        Command::Cv {
            data,
            config,
            k,
            seed,
            out_dir,
            overrides,
        } => {
            let outcome = cmd_cv(
                &CvArgs {
                    data,
                    config,
                    overrides,
                    k,
                    seed,
                    out_dir,
                },
                &mut |i, r| match r {
                    Ok(rep) => println!(
                        "fold {i}: joint {:.4} independent {:.4}",
                        rep.joint_loglik, rep.independent_loglik
                    ),
                    Err(e) => eprintln!("fold {i} failed: {e}"),
                },
            )?;
            for (name, mean, std, n) in &outcome.aggregate {
                println!("{name} = {mean} ± {std} ({n} folds)");
            }
        }
        Command::Synth {
            spec_config,
            out,
            seed,
        } => {
            let n = cmd_synth(&SynthArgs {
                spec_config,
                out: out.clone(),
                seed,
            })?;
            println!("wrote {n} observations to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
