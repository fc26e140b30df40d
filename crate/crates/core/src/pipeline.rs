//! End-to-end orchestration: generate trajectories, train forecasters over
//! independent trials, and evaluate them into reports.
//!
//! Every random decision derives from the run's master seed through tagged
//! streams, so a rerun of any stage over the same configuration reproduces
//! its outputs byte for byte (summaries record wall-clock times and are the
//! one deliberate exception). Stages communicate only through files, so they
//! can be run separately, inspected, or re-driven from external data.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataio::{
    list_trajectory_dirs, load_trajectory, save_trajectory, split_indices, window, windows_from,
    FarcastWindow, SplitAssignment, SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    export_predictions, run_benchmark, write_report_csv, write_report_json, EvalReport,
    TrialEvaluation,
};
use crate::farcaster::{load_model, save_model, train_with_trace, ColumnSelector, TrainConfig};
use crate::seeds::{derive_seed, STREAM_OPTIMIZER, STREAM_PROBLEM, STREAM_SPLIT, STREAM_TRAIN};
use crate::trajgen::{run_optimizer, Problem};

/// Fixed file layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> RunPaths {
        RunPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn run_file(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn trajectories_dir(&self) -> PathBuf {
        self.root.join("trajectories")
    }

    pub fn trajectory_dir(&self, index: usize) -> PathBuf {
        self.trajectories_dir().join(trajectory_id(index))
    }

    pub fn generate_summary_file(&self) -> PathBuf {
        self.root.join("generate_summary.json")
    }

    pub fn trial_dir(&self, trial: usize) -> PathBuf {
        self.root.join("trials").join(format!("trial-{trial}"))
    }

    pub fn split_file(&self, trial: usize) -> PathBuf {
        self.trial_dir(trial).join("split.json")
    }

    pub fn model_dir(&self, trial: usize, model: &str) -> PathBuf {
        self.trial_dir(trial).join("models").join(model)
    }

    pub fn train_summary_file(&self) -> PathBuf {
        self.root.join("train_summary.json")
    }

    pub fn report_csv_file(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_json_file(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Stable directory name / source id of trajectory `index`.
pub fn trajectory_id(index: usize) -> String {
    format!("traj-{index:05}")
}

/// A trajectory whose optimizer run blew up; the run carries on without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateFailure {
    pub index: usize,
    pub source_id: String,
    pub message: String,
}

/// What [`generate`] produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub requested: usize,
    /// Trajectories actually written (requested minus failures).
    pub written: usize,
    /// Rows per trajectory (updates + 1).
    pub rows: usize,
    /// Dimension of the tracked weight vector; absent if nothing was written.
    pub dim: Option<usize>,
    pub record_losses: bool,
    /// Divergent runs, listed per trajectory.
    pub failures: Vec<GenerateFailure>,
    /// Wall-clock time; informational only, not reproducible.
    pub elapsed_seconds: f64,
}

/// One (trial, model) training outcome inside a [`TrainSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub trial: usize,
    pub model: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Combined training loss after the last epoch run.
    pub final_train_loss: f64,
    /// Dev prediction loss at the epoch that was kept, when a dev set exists.
    pub best_dev_pred_loss: Option<f64>,
}

/// What [`train_all`] produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub records: Vec<TrainRecord>,
    /// Wall-clock time; informational only, not reproducible.
    pub elapsed_seconds: f64,
}

enum TrajectoryOutcome {
    Written(usize),
    Diverged(String),
}

/// Generate all trajectories of the run into `<out>/trajectories/` and write
/// `run.json` plus a generation summary.
///
/// A diverging optimizer run does not abort the stage: the failure is
/// recorded in the summary (and no directory is written for that index)
/// while the remaining trajectories proceed. Any other error aborts.
pub fn generate(config: &RunConfig, out: &Path) -> Result<GenerateSummary> {
    config.validate()?;
    let paths = RunPaths::new(out);
    fs::create_dir_all(paths.trajectories_dir())
        .map_err(|e| Error::io(&paths.trajectories_dir(), e))?;
    crate::config::save_run_config(config, &paths.run_file())?;

    let started = Instant::now();
    let outcomes: Vec<TrajectoryOutcome> = (0..config.num_trajectories)
        .into_par_iter()
        .map(|index| -> Result<TrajectoryOutcome> {
            let problem_seed = derive_seed(config.master_seed, &[STREAM_PROBLEM, index as u64]);
            let optimizer_seed =
                derive_seed(config.master_seed, &[STREAM_OPTIMIZER, index as u64]);
            let problem = Problem::sample(config.problem, problem_seed);
            let optimizer = config.optimizer.to_config(optimizer_seed);
            let mut traj = match run_optimizer(&problem, &optimizer, config.record_losses) {
                Ok(t) => t,
                Err(Error::Divergence { step, message }) => {
                    return Ok(TrajectoryOutcome::Diverged(format!(
                        "diverged at step {step}: {message}"
                    )))
                }
                Err(other) => return Err(other),
            };
            traj.meta.source_id = trajectory_id(index);
            traj.meta.problem_kind = Some(config.problem);
            traj.meta.problem_seed = Some(problem_seed);
            traj.meta.optimizer = Some(optimizer);
            save_trajectory(&traj, &paths.trajectory_dir(index))?;
            Ok(TrajectoryOutcome::Written(traj.dim()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dim = None;
    let mut failures = Vec::new();
    for (index, outcome) in outcomes.iter().enumerate() {
        match outcome {
            TrajectoryOutcome::Written(d) => dim = dim.or(Some(*d)),
            TrajectoryOutcome::Diverged(message) => failures.push(GenerateFailure {
                index,
                source_id: trajectory_id(index),
                message: message.clone(),
            }),
        }
    }
    let summary = GenerateSummary {
        requested: config.num_trajectories,
        written: config.num_trajectories - failures.len(),
        rows: config.optimizer.num_steps + 1,
        dim,
        record_losses: config.record_losses,
        failures,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(paths.generate_summary_file(), text + "\n")
        .map_err(|e| Error::io(&paths.generate_summary_file(), e))?;
    Ok(summary)
}

/// Load the run's trajectories in index order, checking the count.
fn load_all_trajectories(
    config: &RunConfig,
    paths: &RunPaths,
) -> Result<Vec<crate::trajgen::Trajectory>> {
    let dir = paths.trajectories_dir();
    let found = list_trajectory_dirs(&dir)?;
    if found.len() != config.num_trajectories {
        return Err(Error::InvalidConfig(format!(
            "found {} trajectories under {}, run expects {}",
            found.len(),
            dir.display(),
            config.num_trajectories
        )));
    }
    found
        .par_iter()
        .map(|d| load_trajectory(d))
        .collect::<Result<Vec<_>>>()
}

/// The selector a model uses in a given trial: random selections are
/// re-drawn per trial from the derived seed, every other rule is static.
fn trial_selector(base: &ColumnSelector, task_seed: u64) -> ColumnSelector {
    match *base {
        ColumnSelector::RandomK { k, .. } => ColumnSelector::RandomK { k, seed: task_seed },
        other => other,
    }
}

fn split_for_trial(config: &RunConfig, trial: usize) -> Result<SplitAssignment> {
    split_indices(
        config.num_trajectories,
        &SplitSpec {
            train: config.split.train,
            dev: config.split.dev,
            test: config.split.test,
            seed: derive_seed(config.master_seed, &[STREAM_SPLIT, trial as u64]),
        },
    )
}

fn gather<'w>(windows: &'w [FarcastWindow], indices: &[usize]) -> Vec<FarcastWindow> {
    indices.iter().map(|&i| windows[i].clone()).collect()
}

/// Train every configured model in every trial; writes per-trial split
/// files, model directories, and a training summary.
pub fn train_all(config: &RunConfig, out: &Path) -> Result<TrainSummary> {
    config.validate()?;
    let paths = RunPaths::new(out);
    let trajectories = load_all_trajectories(config, &paths)?;
    let windows = windows_from(&trajectories, config.n_in, config.m_out)?;
    drop(trajectories);

    let started = Instant::now();
    let mut splits = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let assignment = split_for_trial(config, trial)?;
        let dir = paths.trial_dir(trial);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let text = serde_json::to_string_pretty(&assignment).expect("split serializes");
        fs::write(paths.split_file(trial), text + "\n")
            .map_err(|e| Error::io(&paths.split_file(trial), e))?;
        splits.push(assignment);
    }

    let tasks: Vec<(usize, usize)> = (0..config.trials)
        .flat_map(|t| (0..config.models.len()).map(move |m| (t, m)))
        .collect();
    let mut records = tasks
        .par_iter()
        .map(|&(trial, model_idx)| -> Result<TrainRecord> {
            let spec = &config.models[model_idx];
            let assignment = &splits[trial];
            let train_windows = gather(&windows, &assignment.train);
            let dev_windows = gather(&windows, &assignment.dev);
            let task_seed = derive_seed(
                config.master_seed,
                &[STREAM_TRAIN, trial as u64, model_idx as u64],
            );
            let selector = trial_selector(&spec.selector, task_seed);
            let train_config = TrainConfig {
                seed: task_seed,
                ..spec.train.clone()
            };
            let outcome = train_with_trace(&train_windows, &dev_windows, selector, &train_config)?;
            save_model(&outcome.model, &paths.model_dir(trial, &spec.name))?;
            let last = outcome.curve.last().expect("curve is never empty");
            Ok(TrainRecord {
                trial,
                model: spec.name.clone(),
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.epochs_run,
                final_train_loss: last.train_loss,
                best_dev_pred_loss: outcome.curve[outcome.best_epoch].dev_pred_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| (a.trial, &a.model).cmp(&(b.trial, &b.model)));

    let summary = TrainSummary {
        records,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(paths.train_summary_file(), text + "\n")
        .map_err(|e| Error::io(&paths.train_summary_file(), e))?;
    Ok(summary)
}

fn load_split(paths: &RunPaths, trial: usize) -> Result<SplitAssignment> {
    let path = paths.split_file(trial);
    if !path.is_file() {
        return Err(Error::MissingPath { path });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedDescriptor {
        path,
        message: e.to_string(),
    })
}

/// Score every trained model on its trial's test windows and write the
/// report pair (`report.csv`, `report.json`). Returns the reports.
pub fn evaluate(config: &RunConfig, out: &Path) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let paths = RunPaths::new(out);
    let trajectories = load_all_trajectories(config, &paths)?;
    let windows = windows_from(&trajectories, config.n_in, config.m_out)?;
    drop(trajectories);

    let mut trials = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let assignment = load_split(&paths, trial)?;
        let mut models = Vec::with_capacity(config.models.len());
        for spec in &config.models {
            let model = load_model(&paths.model_dir(trial, &spec.name))?;
            models.push((spec.name.clone(), model));
        }
        trials.push(TrialEvaluation {
            models,
            test_windows: gather(&windows, &assignment.test),
        });
    }
    let reports = run_benchmark(&trials, &config.checkpoints)?;
    write_report_csv(&reports, &paths.report_csv_file())?;
    write_report_json(&reports, &paths.report_json_file())?;
    Ok(reports)
}

/// Run generate, train, and evaluate back to back.
pub fn run_all(config: &RunConfig, out: &Path) -> Result<Vec<EvalReport>> {
    generate(config, out)?;
    train_all(config, out)?;
    evaluate(config, out)
}

/// Export truth/prediction CSVs for every model over one trial's test
/// sequences, under `<out>/predictions/<model>/<source>.csv`. Returns the
/// number of files written.
pub fn export_trial_predictions(config: &RunConfig, out: &Path, trial: usize) -> Result<usize> {
    config.validate()?;
    if trial >= config.trials {
        return Err(Error::IndexOutOfRange(format!(
            "trial {trial} out of range, run has {}",
            config.trials
        )));
    }
    let paths = RunPaths::new(out);
    let trajectories = load_all_trajectories(config, &paths)?;
    let windows = windows_from(&trajectories, config.n_in, config.m_out)?;
    drop(trajectories);
    let assignment = load_split(&paths, trial)?;
    let mut written = 0;
    for spec in &config.models {
        let model = load_model(&paths.model_dir(trial, &spec.name))?;
        let dir = paths.root.join("predictions").join(&spec.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for &idx in &assignment.test {
            let w = &windows[idx];
            export_predictions(w, &model, &dir.join(format!("{}.csv", w.source_id)))?;
            written += 1;
        }
    }
    Ok(written)
}

/// Forecast a stored trajectory with a stored model and write the
/// truth/prediction CSV to `out_csv`.
pub fn export_model_predictions(
    model_dir: &Path,
    trajectory_dir: &Path,
    out_csv: &Path,
) -> Result<()> {
    let model = load_model(model_dir)?;
    let trajectory = load_trajectory(trajectory_dir)?;
    let w = window(&trajectory, model.n_in, model.m_out)?;
    export_predictions(&w, &model, out_csv)
}
