//! Command-line entry point for the trajectory-forecasting toolkit.
//!
//! Success output goes to stdout; any failure prints one machine-readable
//! JSON line to stderr and exits nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use farcast::closedform::{check_random_schedules, ScheduleCheckConfig, SCHEDULE_CHECK_TOLERANCE};
use farcast::config::{load_run_config, RunConfig};
use farcast::error::{Error, Result};
use farcast::eval::{flops_farcast, flops_iterative, render_report_csv};
use farcast::pipeline;

#[derive(Parser)]
#[command(
    name = "farcast",
    version,
    about = "Generate optimizer weight trajectories, train linear forecasters, and evaluate them"
)]
struct Cli {
    /// Worker threads for generation/training/evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the run's weight trajectories.
    Generate(RunArgs),
    /// Train every configured forecaster over all trials.
    Train(RunArgs),
    /// Score trained forecasters into report.csv / report.json.
    Evaluate(EvaluateArgs),
    /// Forecast one stored trajectory with one stored model.
    Predict(PredictArgs),
    /// Check the exact closed-form forecaster on random affine schedules.
    VerifyProp1(VerifyArgs),
    /// Print iterative vs. forecast FLOP counts and their ratio.
    Flops(FlopsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run description file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    /// Load the config with flag overrides applied, and resolve where the
    /// run's artifacts live.
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = load_run_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &self.output {
            config.output_dir = Some(out.clone());
        }
        let out = config.output_dir.clone().ok_or_else(|| {
            Error::InvalidConfig(
                "no output directory: pass --output or set output_dir in the config".into(),
            )
        })?;
        Ok((config, out))
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write per-sequence truth/prediction CSVs for the first trial's
    /// test set, under `<output>/predictions/`.
    #[arg(long)]
    export_predictions: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory of a stored model.
    #[arg(long)]
    model: PathBuf,
    /// Directory of a stored trajectory.
    #[arg(long)]
    trajectory: PathBuf,
    /// CSV file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Last observed step index (the model sees n+1 observations).
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Forecast horizon.
    #[arg(long, default_value_t = 180)]
    m: usize,
    /// Number of random schedules to check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Master seed for the schedule draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scales are drawn from U(-max_scale, max_scale).
    #[arg(long, default_value_t = 1.05)]
    max_scale: f64,
}

#[derive(Args)]
struct FlopsArgs {
    /// Forecast horizon (number of future steps).
    #[arg(long)]
    m: u64,
    /// Weight dimension.
    #[arg(long)]
    d: u64,
    /// Count only the final step's cost for the forecaster.
    #[arg(long)]
    last_only: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return fail(&Error::InvalidConfig("--jobs must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            return fail(&Error::InvalidConfig(format!(
                "could not configure {jobs} worker threads: {e}"
            )));
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

/// One machine-readable line on stderr, nonzero exit.
fn fail(error: &Error) -> ExitCode {
    let line = serde_json::json!({ "error": error.to_string() });
    eprintln!("{line}");
    ExitCode::FAILURE
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(args) => {
            let (config, out) = args.resolve()?;
            let summary = pipeline::generate(&config, &out)?;
            println!(
                "wrote {} of {} trajectories ({} rows x dim {}) to {} in {:.2}s",
                summary.written,
                summary.requested,
                summary.rows,
                summary.dim.map_or("?".into(), |d| d.to_string()),
                out.join("trajectories").display(),
                summary.elapsed_seconds
            );
            for failure in &summary.failures {
                println!("  {}: {}", failure.source_id, failure.message);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let (config, out) = args.resolve()?;
            let summary = pipeline::train_all(&config, &out)?;
            println!(
                "trained {} models ({} trials x {} specs) in {:.2}s",
                summary.records.len(),
                config.trials,
                config.models.len(),
                summary.elapsed_seconds
            );
            for record in &summary.records {
                println!(
                    "  trial {} {}: best epoch {}/{} train_loss {:.6e} dev_pred_loss {}",
                    record.trial,
                    record.model,
                    record.best_epoch,
                    record.epochs_run,
                    record.final_train_loss,
                    record
                        .best_dev_pred_loss
                        .map_or("n/a".into(), |v| format!("{v:.6e}"))
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate(args) => {
            let (config, out) = args.run.resolve()?;
            let reports = pipeline::evaluate(&config, &out)?;
            print!("{}", render_report_csv(&reports));
            println!("report written to {}", out.join("report.csv").display());
            if args.export_predictions {
                let written = pipeline::export_trial_predictions(&config, &out, 0)?;
                println!(
                    "exported {written} prediction CSVs to {}",
                    out.join("predictions").display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict(args) => {
            pipeline::export_model_predictions(&args.model, &args.trajectory, &args.output)?;
            println!("wrote {}", args.output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyProp1(args) => {
            let report = check_random_schedules(&ScheduleCheckConfig {
                n: args.n,
                m: args.m,
                trials: args.trials,
                seed: args.seed,
                max_scale: args.max_scale,
                ..ScheduleCheckConfig::default()
            })?;
            let line = serde_json::json!({
                "trials": report.trials,
                "max_error": report.max_error,
                "tolerance": SCHEDULE_CHECK_TOLERANCE,
                "passed": report.passed,
            });
            println!("{line}");
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Flops(args) => {
            let iterative = flops_iterative(args.m, args.d)?;
            let farcast = flops_farcast(args.m, args.d, args.last_only)?;
            let line = serde_json::json!({
                "m": args.m,
                "d": args.d,
                "last_only": args.last_only,
                "flops_iterative": iterative,
                "flops_farcast": farcast,
                "ratio": iterative as f64 / farcast as f64,
            });
            println!("{line}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
