//! Checkpoint evaluation, report writers, and arithmetic-cost accounting.
//!
//! Forecasters are scored by the mean squared error of their prediction at a
//! fixed trajectory step ("checkpoint"), scaled by `1e4` for readability,
//! averaged over test windows within a trial and then aggregated as
//! mean/sample-std across independent trials. Reports are written as a CSV
//! with pinned columns plus a JSON mirror, both byte-deterministic for
//! identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataio::FarcastWindow;
use crate::error::{Error, Result};
use crate::farcaster::FarcastModel;

/// Scale applied to every reported MSE value.
pub const MSE_SCALE: f64 = 1e4;

/// Squared prediction error at an absolute trajectory step, averaged over
/// channels and scaled by [`MSE_SCALE`].
///
/// `predictions` and `targets` are both `dim x m_out` blocks whose column
/// `j` corresponds to trajectory step `n_in + j`; `step` addresses a column
/// through that correspondence.
pub fn mse_at_checkpoint(
    predictions: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    n_in: usize,
    step: usize,
) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predictions are {:?}, targets are {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let (dim, m_out) = (targets.nrows(), targets.ncols());
    if dim == 0 || m_out == 0 {
        return Err(Error::EmptyInput("empty prediction block".into()));
    }
    if step < n_in || step >= n_in + m_out {
        return Err(Error::IndexOutOfRange(format!(
            "checkpoint step {step} outside predicted range {}..{}",
            n_in,
            n_in + m_out
        )));
    }
    let col = step - n_in;
    let mse = predictions
        .column(col)
        .iter()
        .zip(targets.column(col).iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / dim as f64;
    Ok(mse * MSE_SCALE)
}

/// One independent trial: a set of trained models (name, model) and the test
/// windows they are scored on.
#[derive(Debug, Clone)]
pub struct TrialEvaluation {
    pub models: Vec<(String, FarcastModel)>,
    pub test_windows: Vec<FarcastWindow>,
}

/// Aggregated score of one model at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub checkpoint: usize,
    pub mse_x1e4_mean: f64,
    /// Sample standard deviation over trials (ddof = 1); absent for a single
    /// trial, where it is undefined.
    pub mse_x1e4_std: Option<f64>,
    pub trials: usize,
}

/// All checkpoint scores for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub stats: Vec<CheckpointStat>,
}

fn mean_and_sample_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}

/// Score every model at every checkpoint.
///
/// Within a trial the score is the mean over its test windows; across trials
/// the per-trial scores are reduced to mean and sample standard deviation.
/// Model predictions use the weight channels of each window directly — a
/// model trained with a loss channel shares its coefficients across rows, so
/// weight-channel predictions need no loss input.
pub fn run_benchmark(
    trials: &[TrialEvaluation],
    checkpoints: &[usize],
) -> Result<Vec<EvalReport>> {
    if trials.is_empty() {
        return Err(Error::EmptyInput("no trials to evaluate".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("no checkpoints requested".into()));
    }
    let names: Vec<String> = trials[0].models.iter().map(|(n, _)| n.clone()).collect();
    for (t, trial) in trials.iter().enumerate() {
        let got: Vec<&String> = trial.models.iter().map(|(n, _)| n).collect();
        if got.len() != names.len() || got.iter().zip(&names).any(|(a, b)| *a != b) {
            return Err(Error::InvalidConfig(format!(
                "trial {t} has models {got:?}, expected {names:?}"
            )));
        }
        if trial.test_windows.is_empty() {
            return Err(Error::EmptyInput(format!("trial {t} has no test windows")));
        }
    }

    let mut reports = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let mut stats = Vec::with_capacity(checkpoints.len());
        for &step in checkpoints {
            let mut per_trial = Vec::with_capacity(trials.len());
            for trial in trials {
                let model = &trial.models[idx].1;
                let mut acc = 0.0;
                for w in &trial.test_windows {
                    let y_hat = model.predict(w.inputs.view())?;
                    acc += mse_at_checkpoint(y_hat.view(), w.targets.view(), model.n_in, step)?;
                }
                per_trial.push(acc / trial.test_windows.len() as f64);
            }
            let (mean, std) = mean_and_sample_std(&per_trial);
            stats.push(CheckpointStat {
                checkpoint: step,
                mse_x1e4_mean: mean,
                mse_x1e4_std: std,
                trials: per_trial.len(),
            });
        }
        reports.push(EvalReport {
            model: name.clone(),
            stats,
        });
    }
    Ok(reports)
}

/// Render reports as CSV with the pinned header
/// `model,checkpoint,mse_x1e4_mean,mse_x1e4_std,trials`.
pub fn render_report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,checkpoint,mse_x1e4_mean,mse_x1e4_std,trials\n");
    for report in reports {
        for stat in &report.stats {
            let std = stat.mse_x1e4_std.map_or(String::new(), |s| s.to_string());
            writeln!(
                out,
                "{},{},{},{},{}",
                report.model, stat.checkpoint, stat.mse_x1e4_mean, std, stat.trials
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

/// Write the CSV report to `path`.
pub fn write_report_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    fs::write(path, render_report_csv(reports)).map_err(|e| Error::io(path, e))
}

/// Write the JSON mirror of the report to `path`.
pub fn write_report_json(reports: &[EvalReport], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(reports).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Read back a JSON report written by [`write_report_json`].
pub fn read_report_json(path: &Path) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedDescriptor {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn checked_flops(factors: &[u128], what: &str) -> Result<u128> {
    let mut acc: u128 = 1;
    for &f in factors {
        acc = acc
            .checked_mul(f)
            .ok_or_else(|| Error::Overflow(format!("{what} flop count exceeds u128")))?;
    }
    Ok(acc)
}

fn check_flops_args(m: u64, d: u64) -> Result<()> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidConfig(format!(
            "flop counts need m >= 1 and d >= 1, got m={m} d={d}"
        )));
    }
    Ok(())
}

/// Cost of producing `m` future steps of a `d`-dimensional weight vector by
/// running the optimizer: `2*m*d^2 + 2*d*m` (each step spends `2*d^2` on the
/// gradient's matrix-vector product and `2*d` on the update).
pub fn flops_iterative(m: u64, d: u64) -> Result<u128> {
    check_flops_args(m, d)?;
    // 2md^2 + 2dm factored as 2*m*d*(d+1); checked at every multiply.
    checked_flops(&[2, m as u128, d as u128, d as u128 + 1], "iterative")
}

/// Cost of producing the same steps with a trained last-step forecaster:
/// `4*d*m` for the full horizon, or `4*d` when only the final step is
/// materialized (`last_only`).
pub fn flops_farcast(m: u64, d: u64, last_only: bool) -> Result<u128> {
    check_flops_args(m, d)?;
    if last_only {
        checked_flops(&[4, d as u128], "farcast")
    } else {
        checked_flops(&[4, d as u128, m as u128], "farcast")
    }
}

/// Ratio `flops_iterative / flops_farcast` over the full horizon, which
/// reduces exactly to `(d + 1) / 2` independent of `m`.
pub fn flops_savings_ratio(m: u64, d: u64) -> Result<f64> {
    let iter = flops_iterative(m, d)?;
    let farcast = flops_farcast(m, d, false)?;
    Ok(iter as f64 / farcast as f64)
}

/// Write a window's truth and a model's forecast as CSV rows
/// `step,coordinate_index,truth,prediction`, one row per (step, coordinate),
/// with an empty prediction for observed steps.
pub fn render_predictions_csv(window: &FarcastWindow, model: &FarcastModel) -> Result<String> {
    let y_hat = model.predict(window.inputs.view())?;
    if window.targets.nrows() != window.inputs.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "window '{}' has {} input channels but {} target channels",
            window.source_id,
            window.inputs.nrows(),
            window.targets.nrows()
        )));
    }
    let dim = window.dim();
    let n_in = window.n_in();
    let mut out = String::from("step,coordinate_index,truth,prediction\n");
    for step in 0..n_in + window.m_out() {
        for coord in 0..dim {
            if step < n_in {
                let truth = window.inputs[[coord, step]];
                writeln!(out, "{step},{coord},{truth},")
                    .expect("writing to a String cannot fail");
            } else {
                let truth = window.targets[[coord, step - n_in]];
                let pred = y_hat[[coord, step - n_in]];
                writeln!(out, "{step},{coord},{truth},{pred}")
                    .expect("writing to a String cannot fail");
            }
        }
    }
    Ok(out)
}

/// Write [`render_predictions_csv`] output to `path`.
pub fn export_predictions(
    window: &FarcastWindow,
    model: &FarcastModel,
    path: &Path,
) -> Result<()> {
    let text = render_predictions_csv(window, model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farcaster::{ColumnSelector, InitKind};
    use ndarray::{array, Array2};
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn persistence_model(n_in: usize, m_out: usize) -> FarcastModel {
        FarcastModel::new(ColumnSelector::Last, n_in, m_out, InitKind::Persistence).unwrap()
    }

    fn window_from(
        inputs: Array2<f64>,
        targets: Array2<f64>,
        source_id: &str,
    ) -> FarcastWindow {
        FarcastWindow {
            inputs,
            targets,
            input_losses: None,
            target_losses: None,
            source_id: source_id.to_string(),
        }
    }

    #[test]
    fn mse_hand_values() {
        // One channel, error 0.1 at the checkpoint: 0.01 * 1e4 = 100.
        let pred = array![[2.1, 5.0]];
        let truth = array![[2.0, 5.0]];
        let v = mse_at_checkpoint(pred.view(), truth.view(), 3, 3).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        // Two channels, errors 0.1 and 0.3: mean(0.01, 0.09) * 1e4 = 500.
        let pred = array![[2.1], [7.3]];
        let truth = array![[2.0], [7.0]];
        let v = mse_at_checkpoint(pred.view(), truth.view(), 21, 21).unwrap();
        assert!((v - 500.0).abs() < 1e-9);
        // Two channels, errors 0.01 and 0.03: ((1e-4 + 9e-4)/2) * 1e4 = 5.
        let pred = array![[2.01], [7.03]];
        let truth = array![[2.0], [7.0]];
        let v = mse_at_checkpoint(pred.view(), truth.view(), 21, 21).unwrap();
        assert!((v - 5.0).abs() < 1e-9);
        // A perfect prediction scores exactly zero.
        let v = mse_at_checkpoint(truth.view(), truth.view(), 21, 21).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn mse_is_permutation_invariant_over_channels_and_local_to_its_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred = Array2::from_shape_fn((5, 7), |_| rng.random::<f64>());
        let truth = Array2::from_shape_fn((5, 7), |_| rng.random::<f64>());
        let base = mse_at_checkpoint(pred.view(), truth.view(), 10, 12).unwrap();

        // Reverse the channel order of both blocks: same score, bitwise.
        let perm: Vec<usize> = (0..5).rev().collect();
        let pred_p = pred.select(ndarray::Axis(0), &perm);
        let truth_p = truth.select(ndarray::Axis(0), &perm);
        let permuted = mse_at_checkpoint(pred_p.view(), truth_p.view(), 10, 12).unwrap();
        // Summation order flips with the permutation, so compare to within
        // a few ulps rather than bitwise.
        assert!((base - permuted).abs() <= 1e-12 * base.abs());

        // Corrupting a different column leaves this checkpoint untouched.
        let mut pred_other = pred.clone();
        pred_other[[2, 4]] += 100.0;
        let unaffected =
            mse_at_checkpoint(pred_other.view(), truth.view(), 10, 12).unwrap();
        assert_eq!(base.to_bits(), unaffected.to_bits());
    }

    #[test]
    fn mse_rejects_out_of_range_steps_and_bad_shapes() {
        let pred = array![[1.0, 2.0]];
        let truth = array![[1.0, 2.0]];
        assert!(mse_at_checkpoint(pred.view(), truth.view(), 5, 4).is_err());
        assert!(mse_at_checkpoint(pred.view(), truth.view(), 5, 7).is_err());
        assert!(mse_at_checkpoint(pred.view(), truth.view(), 5, 5).is_ok());
        assert!(mse_at_checkpoint(pred.view(), truth.view(), 5, 6).is_ok());
        let wide = array![[1.0, 2.0, 3.0]];
        assert!(mse_at_checkpoint(pred.view(), wide.view(), 5, 5).is_err());
    }

    #[test]
    fn benchmark_scores_persistence_by_hand() {
        // Persistence predicts the last observed value (2.0) for every
        // horizon step. Targets are chosen so the per-trial scores at the
        // two checkpoints are exact round numbers.
        let model = persistence_model(2, 2);
        let trial_a = TrialEvaluation {
            models: vec![("last".to_string(), model.clone())],
            test_windows: vec![window_from(
                array![[0.0, 2.0]],
                array![[3.0, 4.0]],
                "a",
            )],
        };
        let trial_b = TrialEvaluation {
            models: vec![("last".to_string(), model)],
            test_windows: vec![window_from(
                array![[0.0, 2.0]],
                array![[5.0, 6.0]],
                "b",
            )],
        };
        let reports = run_benchmark(&[trial_a, trial_b], &[2, 3]).unwrap();
        assert_eq!(reports.len(), 1);
        let stats = &reports[0].stats;
        // Step 2: errors 1 and 3 across the trials -> 1e4 and 9e4.
        assert!((stats[0].mse_x1e4_mean - 5.0e4).abs() < 1e-6);
        // Sample std of {1e4, 9e4} with ddof 1.
        let expected = ((1.0e4 - 5.0e4f64).powi(2) * 2.0).sqrt();
        assert!((stats[0].mse_x1e4_std.unwrap() - expected).abs() < 1e-6);
        // Step 3: errors 2 and 4 -> 4e4 and 16e4.
        assert!((stats[1].mse_x1e4_mean - 10.0e4).abs() < 1e-6);
        assert_eq!(stats[0].trials, 2);
    }

    #[test]
    fn benchmark_reports_no_std_for_a_single_trial() {
        let model = persistence_model(2, 1);
        let trial = TrialEvaluation {
            models: vec![("last".to_string(), model)],
            test_windows: vec![window_from(array![[0.0, 2.0]], array![[2.0]], "w")],
        };
        let reports = run_benchmark(&[trial], &[2]).unwrap();
        assert_eq!(reports[0].stats[0].mse_x1e4_mean, 0.0);
        assert_eq!(reports[0].stats[0].mse_x1e4_std, None);
        assert_eq!(reports[0].stats[0].trials, 1);
    }

    #[test]
    fn benchmark_rejects_mismatched_trials() {
        let model = persistence_model(2, 1);
        let good = TrialEvaluation {
            models: vec![("last".to_string(), model.clone())],
            test_windows: vec![window_from(array![[0.0, 2.0]], array![[2.0]], "w")],
        };
        let renamed = TrialEvaluation {
            models: vec![("other".to_string(), model.clone())],
            test_windows: good.test_windows.clone(),
        };
        assert!(run_benchmark(&[good.clone(), renamed], &[2]).is_err());
        let empty = TrialEvaluation {
            models: vec![("last".to_string(), model)],
            test_windows: vec![],
        };
        assert!(run_benchmark(&[good.clone(), empty], &[2]).is_err());
        assert!(run_benchmark(&[good], &[]).is_err());
    }

    #[test]
    fn csv_report_is_pinned_and_exact() {
        let reports = vec![EvalReport {
            model: "dense".to_string(),
            stats: vec![
                CheckpointStat {
                    checkpoint: 40,
                    mse_x1e4_mean: 0.5,
                    mse_x1e4_std: Some(0.25),
                    trials: 5,
                },
                CheckpointStat {
                    checkpoint: 80,
                    mse_x1e4_mean: 2.0,
                    mse_x1e4_std: None,
                    trials: 1,
                },
            ],
        }];
        let csv = render_report_csv(&reports);
        assert_eq!(
            csv,
            "model,checkpoint,mse_x1e4_mean,mse_x1e4_std,trials\n\
             dense,40,0.5,0.25,5\n\
             dense,80,2,,1\n"
        );
    }

    #[test]
    fn json_report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let reports = vec![EvalReport {
            model: "rand4".to_string(),
            stats: vec![CheckpointStat {
                checkpoint: 160,
                mse_x1e4_mean: 44.9,
                mse_x1e4_std: Some(5.0),
                trials: 5,
            }],
        }];
        write_report_json(&reports, &path).unwrap();
        let back = read_report_json(&path).unwrap();
        assert_eq!(back, reports);
    }

    #[test]
    fn report_writers_are_byte_deterministic() {
        let reports = vec![EvalReport {
            model: "first-last".to_string(),
            stats: vec![CheckpointStat {
                checkpoint: 200,
                mse_x1e4_mean: 81.123456789,
                mse_x1e4_std: Some(9.6e-3),
                trials: 5,
            }],
        }];
        let dir = tempfile::tempdir().unwrap();
        for name in ["report.csv", "again.csv"] {
            write_report_csv(&reports, &dir.path().join(name)).unwrap();
        }
        for name in ["report.json", "again.json"] {
            write_report_json(&reports, &dir.path().join(name)).unwrap();
        }
        assert_eq!(
            std::fs::read(dir.path().join("report.csv")).unwrap(),
            std::fs::read(dir.path().join("again.csv")).unwrap()
        );
        assert_eq!(
            std::fs::read(dir.path().join("report.json")).unwrap(),
            std::fs::read(dir.path().join("again.json")).unwrap()
        );
    }

    #[test]
    fn flops_small_hand_cases() {
        // m=10, d=100: 2*10*100^2 + 2*100*10 = 202,000.
        assert_eq!(flops_iterative(10, 100).unwrap(), 202_000);
        // m=1, d=1: 2 + 2 = 4.
        assert_eq!(flops_iterative(1, 1).unwrap(), 4);
        assert_eq!(flops_farcast(10, 100, false).unwrap(), 4_000);
        assert_eq!(flops_farcast(10, 100, true).unwrap(), 400);
        // m=180, d=3: (2*180*9 + 2*3*180) / (4*3*180) = 2 exactly.
        assert!((flops_savings_ratio(180, 3).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flops_match_a_bigint_oracle_at_deployment_scale() {
        let m: u64 = 30;
        let d: u64 = 66_960_393;
        let big_m = BigUint::from(m);
        let big_d = BigUint::from(d);
        let oracle_iter = BigUint::from(2u32) * &big_m * &big_d * &big_d
            + BigUint::from(2u32) * &big_d * &big_m;
        let oracle_far = BigUint::from(4u32) * &big_d * &big_m;
        assert_eq!(BigUint::from(flops_iterative(m, d).unwrap()), oracle_iter);
        assert_eq!(
            BigUint::from(flops_farcast(m, d, false).unwrap()),
            oracle_far
        );
        assert_eq!(
            BigUint::from(flops_farcast(m, d, true).unwrap()),
            BigUint::from(4u32) * &big_d
        );
        let ratio = flops_savings_ratio(m, d).unwrap();
        assert!((ratio - (d as f64 + 1.0) / 2.0).abs() < 1.0);
    }

    #[test]
    fn flops_ratio_identity_holds_exactly_for_random_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.random_range(1..=10_000u64);
            let d = rng.random_range(1..=1_000_000_000u64);
            let iter = flops_iterative(m, d).unwrap();
            let farcast = flops_farcast(m, d, false).unwrap();
            // 2 * iterative == farcast * (d + 1), exactly, in integers.
            assert_eq!(2u128 * iter, farcast * (d as u128 + 1));
        }
    }

    #[test]
    fn flops_reject_zero_sizes_and_overflow() {
        assert!(flops_iterative(0, 5).is_err());
        assert!(flops_farcast(5, 0, false).is_err());
        assert!(flops_farcast(0, 5, true).is_err());
        // Sizes near u64::MAX multiply past u128 range.
        assert!(matches!(
            flops_iterative(u64::MAX, u64::MAX),
            Err(Error::Overflow(_))
        ));
        assert!(matches!(
            flops_farcast(u64::MAX, u64::MAX, false),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn predictions_csv_is_exact_for_a_tiny_window() {
        let model = persistence_model(2, 2);
        let window = window_from(array![[1.0, 2.0]], array![[3.0, 4.0]], "w");
        let csv = render_predictions_csv(&window, &model).unwrap();
        assert_eq!(
            csv,
            "step,coordinate_index,truth,prediction\n\
             0,0,1,\n\
             1,0,2,\n\
             2,0,3,2\n\
             3,0,4,2\n"
        );
    }

    #[test]
    fn predictions_export_counts_rows_and_reruns_identically() {
        let n_in = 21;
        let m_out = 180;
        let dim = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let inputs = Array2::from_shape_fn((dim, n_in), |_| rng.random::<f64>());
        let targets = Array2::from_shape_fn((dim, m_out), |_| rng.random::<f64>());
        let window = window_from(inputs, targets, "full");
        let model = persistence_model(n_in, m_out);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        export_predictions(&window, &model, &a).unwrap();
        export_predictions(&window, &model, &b).unwrap();
        let bytes_a = std::fs::read(&a).unwrap();
        let bytes_b = std::fs::read(&b).unwrap();
        assert_eq!(bytes_a, bytes_b, "re-export must be byte-identical");
        let text = String::from_utf8(bytes_a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + (n_in + m_out) * dim);
        let with_pred = lines[1..]
            .iter()
            .filter(|l| !l.ends_with(','))
            .count();
        assert_eq!(with_pred, m_out * dim);
    }
}
