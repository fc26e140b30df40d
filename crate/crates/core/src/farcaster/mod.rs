//! One-layer linear forecasters over weight trajectories.
//!
//! A model picks a subset of the observed columns (the "selected" steps),
//! multiplies them by a shared coefficient matrix, and adds an intercept:
//! `Y_hat = X_sel . A + 1 b^T`. Every channel (weight coordinate) shares the
//! same `A` and `b`, so the parameter count is independent of the trajectory
//! dimension, and all future steps are produced in a single shot rather than
//! by iterated rollout.
//!
//! Training minimizes the entrywise l1 prediction loss plus a "gradient
//! budget" penalty that discourages consecutive predicted steps from moving
//! farther (in l1) than the first observed update did.

mod train;

pub use train::{train, train_with_trace, EpochRecord, TrainConfig, TrainOutcome};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{read_f64le, write_f64le, FarcastWindow};
use crate::error::{Error, Result};

/// Schema version of the on-disk model descriptor.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Model descriptor and parameter file names inside a model directory.
pub const MODEL_FILE: &str = "model.json";
const PARAMS_FILE: &str = "params.f64le";

/// Which observed steps feed the linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSelector {
    /// Every observed step.
    All,
    /// Only the most recent observed step.
    Last,
    /// `k` distinct random steps, drawn once when the model is built and
    /// frozen thereafter.
    RandomK { k: usize, seed: u64 },
    /// The first and the most recent observed steps.
    FirstLast,
}

impl ColumnSelector {
    /// Resolve to concrete ascending column indices for a window of `n_in`
    /// observed steps.
    pub fn resolve(&self, n_in: usize) -> Result<Vec<usize>> {
        if n_in == 0 {
            return Err(Error::InvalidConfig("selector needs n_in >= 1".into()));
        }
        match *self {
            ColumnSelector::All => Ok((0..n_in).collect()),
            ColumnSelector::Last => Ok(vec![n_in - 1]),
            ColumnSelector::FirstLast => {
                if n_in < 2 {
                    return Err(Error::InvalidConfig(
                        "first+last selection needs n_in >= 2".into(),
                    ));
                }
                Ok(vec![0, n_in - 1])
            }
            ColumnSelector::RandomK { k, seed } => {
                if k == 0 {
                    return Err(Error::InvalidConfig("random selection needs k >= 1".into()));
                }
                if k > n_in {
                    return Err(Error::InvalidConfig(format!(
                        "cannot select {k} distinct columns out of {n_in}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = rand::seq::index::sample(&mut rng, n_in, k).into_vec();
                picked.sort_unstable();
                Ok(picked)
            }
        }
    }

    /// Short human-readable label, used as the default model name.
    pub fn label(&self) -> String {
        match *self {
            ColumnSelector::All => "dense".into(),
            ColumnSelector::Last => "last".into(),
            ColumnSelector::RandomK { k, .. } => format!("rand{k}"),
            ColumnSelector::FirstLast => "first-last".into(),
        }
    }
}

/// How the coefficients are initialized before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Copy the most recent selected step to every output: the row of the
    /// last selected column is all ones, everything else zero.
    #[default]
    Persistence,
    /// All coefficients and intercepts zero.
    Zero,
}

/// Gather the given ascending, distinct columns of `x`.
pub fn select_columns(x: ArrayView2<f64>, columns: &[usize]) -> Result<Array2<f64>> {
    if columns.is_empty() {
        return Err(Error::InvalidConfig("no columns selected".into()));
    }
    for pair in columns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidConfig(format!(
                "selected columns must be strictly ascending, got {columns:?}"
            )));
        }
    }
    if let Some(&worst) = columns.last() {
        if worst >= x.ncols() {
            return Err(Error::IndexOutOfRange(format!(
                "selected column {worst} out of {} available",
                x.ncols()
            )));
        }
    }
    let mut out = Array2::zeros((x.nrows(), columns.len()));
    for (slot, &c) in columns.iter().enumerate() {
        out.column_mut(slot).assign(&x.column(c));
    }
    Ok(out)
}

/// A trained (or freshly initialized) forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct FarcastModel {
    /// The selection rule this model was built with.
    pub selector: ColumnSelector,
    /// Resolved ascending column indices; frozen at construction.
    pub columns: Vec<usize>,
    /// Shared coefficients, `k_sel x m_out`.
    pub coeffs: Array2<f64>,
    /// Per-output-step intercept, length `m_out`.
    pub intercept: Array1<f64>,
    /// Observed steps per window.
    pub n_in: usize,
    /// Predicted steps per window.
    pub m_out: usize,
    /// How the parameters were initialized.
    pub init: InitKind,
    /// Penalty weight the model was trained with.
    pub train_beta: f64,
    /// Whether training stacked a normalized loss channel onto each window.
    pub augmented: bool,
}

impl FarcastModel {
    /// Fresh model with the given selection rule and initialization.
    pub fn new(
        selector: ColumnSelector,
        n_in: usize,
        m_out: usize,
        init: InitKind,
    ) -> Result<FarcastModel> {
        if m_out == 0 {
            return Err(Error::InvalidConfig("m_out must be >= 1".into()));
        }
        let columns = selector.resolve(n_in)?;
        let k = columns.len();
        let mut coeffs = Array2::zeros((k, m_out));
        if init == InitKind::Persistence {
            // The last selected column is the most recent observation; copy
            // it to every output step.
            coeffs.row_mut(k - 1).fill(1.0);
        }
        Ok(FarcastModel {
            selector,
            columns,
            coeffs,
            intercept: Array1::zeros(m_out),
            n_in,
            m_out,
            init,
            train_beta: 0.0,
            augmented: false,
        })
    }

    /// Number of selected columns (rows of `coeffs`).
    pub fn k_sel(&self) -> usize {
        self.columns.len()
    }

    /// Trainable parameter count: `k_sel * m_out + m_out`.
    pub fn param_count(&self) -> usize {
        self.k_sel() * self.m_out + self.m_out
    }

    /// Apply the linear map to already-selected inputs (`rows x k_sel`).
    pub fn forward_selected(&self, x_sel: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x_sel.ncols() != self.k_sel() {
            return Err(Error::ShapeMismatch(format!(
                "selected input has {} columns, model expects {}",
                x_sel.ncols(),
                self.k_sel()
            )));
        }
        let mut y = x_sel.dot(&self.coeffs);
        for mut row in y.rows_mut() {
            row += &self.intercept;
        }
        Ok(y)
    }

    /// Predict the full horizon from an observed block (`rows x n_in`).
    ///
    /// Rows are independent channels; callers may pass any number of them,
    /// including blocks with an extra loss channel, and each row is mapped
    /// by the same shared coefficients.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_in {
            return Err(Error::ShapeMismatch(format!(
                "input has {} observed steps, model expects {}",
                x.ncols(),
                self.n_in
            )));
        }
        let x_sel = select_columns(x, &self.columns)?;
        self.forward_selected(x_sel.view())
    }
}

fn l1_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_window_batch(model: &FarcastModel, windows: &[FarcastWindow]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows given".into()));
    }
    for w in windows {
        if w.n_in() != model.n_in || w.m_out() != model.m_out {
            return Err(Error::ShapeMismatch(format!(
                "window '{}' is {}x{}, model expects {}x{}",
                w.source_id,
                w.n_in(),
                w.m_out(),
                model.n_in,
                model.m_out
            )));
        }
    }
    Ok(())
}

/// Mean over windows of the entrywise l1 prediction error
/// `sum_{channels, steps} |Y_hat - Y|`.
pub fn pred_loss(model: &FarcastModel, windows: &[FarcastWindow]) -> Result<f64> {
    check_window_batch(model, windows)?;
    let mut total = 0.0;
    for w in windows {
        let y_hat = model.predict(w.inputs.view())?;
        total += y_hat
            .iter()
            .zip(w.targets.iter())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>();
    }
    Ok(total / windows.len() as f64)
}

/// Budget penalty for one window: consecutive predicted steps may move at
/// most as far (entrywise l1 across channels) as the first observed update
/// `||w1 - w0||_1`; any excess is charged linearly.
///
/// Horizons shorter than two predicted steps have no consecutive pairs and
/// cost nothing.
pub fn grad_penalty(
    w0: ArrayView1<f64>,
    w1: ArrayView1<f64>,
    y_hat: ArrayView2<f64>,
) -> Result<f64> {
    if w0.len() != w1.len() || w0.len() != y_hat.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "grad_penalty: w0 len {}, w1 len {}, y_hat rows {}",
            w0.len(),
            w1.len(),
            y_hat.nrows()
        )));
    }
    let budget: f64 = w0
        .iter()
        .zip(w1.iter())
        .map(|(a, b)| (b - a).abs())
        .sum();
    let m = y_hat.ncols();
    let mut penalty = 0.0;
    for j in 0..m.saturating_sub(1) {
        let increment: f64 = y_hat
            .column(j)
            .iter()
            .zip(y_hat.column(j + 1).iter())
            .map(|(a, b)| (b - a).abs())
            .sum();
        penalty += (increment - budget).max(0.0);
    }
    Ok(penalty)
}

/// One window prepared for batched loss/gradient evaluation: inputs already
/// column-selected (and possibly loss-augmented), penalty ingredients
/// extracted. The penalty only ever sees the first `weight_rows` channels,
/// so an appended loss channel influences the fit but not the budget.
#[derive(Debug, Clone)]
pub(crate) struct GradSample {
    /// Selected inputs, `rows x k_sel`.
    pub x_sel: Array2<f64>,
    /// Targets, `rows x m_out`.
    pub y: Array2<f64>,
    /// First two observed steps (weight channels only); `None` disables the
    /// penalty for this window (single observed step).
    pub budget_pair: Option<(Array1<f64>, Array1<f64>)>,
    /// Last observed step (weight channels only), for the boundary pair.
    pub last_obs: Array1<f64>,
    /// Number of leading rows that are weight channels.
    pub weight_rows: usize,
}

impl GradSample {
    /// Prepare a plain (non-augmented) window.
    pub(crate) fn from_window(w: &FarcastWindow, columns: &[usize]) -> Result<GradSample> {
        let x_sel = select_columns(w.inputs.view(), columns)?;
        let budget_pair = (w.n_in() >= 2)
            .then(|| (w.inputs.column(0).to_owned(), w.inputs.column(1).to_owned()));
        Ok(GradSample {
            x_sel,
            y: w.targets.clone(),
            budget_pair,
            last_obs: w.inputs.column(w.n_in() - 1).to_owned(),
            weight_rows: w.dim(),
        })
    }

    fn budget(&self) -> f64 {
        match &self.budget_pair {
            Some((w0, w1)) => w0
                .iter()
                .zip(w1.iter())
                .map(|(a, b)| (b - a).abs())
                .sum(),
            None => f64::INFINITY, // no observed update: nothing is charged
        }
    }
}

/// Mean combined loss over prepared samples, optionally with subgradients
/// w.r.t. `(coeffs, intercept)`. This is the single evaluation engine behind
/// [`combined_loss`], [`loss_gradients`], and training.
pub(crate) fn batch_loss_and_grads(
    coeffs: &Array2<f64>,
    intercept: &Array1<f64>,
    samples: &[GradSample],
    beta: f64,
    include_boundary_pair: bool,
    want_grads: bool,
) -> Result<(f64, Option<(Array2<f64>, Array1<f64>)>)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no windows given".into()));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "beta must be non-negative and finite, got {beta}"
        )));
    }
    let mut total = 0.0;
    let mut grads = want_grads.then(|| {
        (
            Array2::zeros(coeffs.raw_dim()),
            Array1::zeros(intercept.len()),
        )
    });
    for s in samples {
        let mut y_hat = s.x_sel.dot(coeffs);
        for mut row in y_hat.rows_mut() {
            row += intercept;
        }
        // Prediction term and its upstream sign matrix.
        let mut pred = 0.0;
        let mut upstream = want_grads.then(|| Array2::zeros(y_hat.raw_dim()));
        for ((r, c), p) in y_hat.indexed_iter() {
            let resid = p - s.y[[r, c]];
            pred += resid.abs();
            if let Some(u) = upstream.as_mut() {
                u[[r, c]] = l1_sign(resid);
            }
        }
        // Budget penalty over consecutive predicted pairs (weight rows only),
        // optionally including the (last observed, first predicted) pair.
        let budget = s.budget();
        let mut penalty = 0.0;
        if budget.is_finite() {
            let m = y_hat.ncols();
            if include_boundary_pair && m >= 1 {
                let increment: f64 = (0..s.weight_rows)
                    .map(|r| (y_hat[[r, 0]] - s.last_obs[r]).abs())
                    .sum();
                if increment > budget {
                    penalty += increment - budget;
                    if let Some(u) = upstream.as_mut() {
                        for r in 0..s.weight_rows {
                            u[[r, 0]] += beta * l1_sign(y_hat[[r, 0]] - s.last_obs[r]);
                        }
                    }
                }
            }
            for j in 0..m.saturating_sub(1) {
                let increment: f64 = (0..s.weight_rows)
                    .map(|r| (y_hat[[r, j + 1]] - y_hat[[r, j]]).abs())
                    .sum();
                if increment > budget {
                    penalty += increment - budget;
                    if let Some(u) = upstream.as_mut() {
                        for r in 0..s.weight_rows {
                            let sg = l1_sign(y_hat[[r, j + 1]] - y_hat[[r, j]]);
                            u[[r, j + 1]] += beta * sg;
                            u[[r, j]] -= beta * sg;
                        }
                    }
                }
            }
        }
        total += pred + beta * penalty;
        if let (Some((dc, di)), Some(u)) = (grads.as_mut(), upstream.as_ref()) {
            *dc += &s.x_sel.t().dot(u);
            for (slot, col) in u.columns().into_iter().enumerate() {
                di[slot] += col.sum();
            }
        }
    }
    let scale = 1.0 / samples.len() as f64;
    total *= scale;
    if let Some((dc, di)) = grads.as_mut() {
        *dc *= scale;
        *di *= scale;
    }
    Ok((total, grads))
}

/// Prediction loss plus `beta` times the mean budget penalty.
///
/// The budget of each window is taken from its first two observed steps;
/// windows with a single observed step contribute no penalty. The pair
/// joining the last observed step to the first predicted step is not
/// charged here (training exposes an opt-in for it).
pub fn combined_loss(model: &FarcastModel, windows: &[FarcastWindow], beta: f64) -> Result<f64> {
    check_window_batch(model, windows)?;
    let samples = windows
        .iter()
        .map(|w| GradSample::from_window(w, &model.columns))
        .collect::<Result<Vec<_>>>()?;
    let (loss, _) = batch_loss_and_grads(
        &model.coeffs,
        &model.intercept,
        &samples,
        beta,
        false,
        false,
    )?;
    Ok(loss)
}

/// Subgradient of [`combined_loss`] with respect to `(coeffs, intercept)`.
///
/// At kinks of the l1 terms (zero residual, increment exactly on budget)
/// the zero element of the subdifferential is chosen.
pub fn loss_gradients(
    model: &FarcastModel,
    windows: &[FarcastWindow],
    beta: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_window_batch(model, windows)?;
    let samples = windows
        .iter()
        .map(|w| GradSample::from_window(w, &model.columns))
        .collect::<Result<Vec<_>>>()?;
    let (_, grads) = batch_loss_and_grads(
        &model.coeffs,
        &model.intercept,
        &samples,
        beta,
        false,
        true,
    )?;
    Ok(grads.expect("gradients requested"))
}

/// Stack a normalized loss channel under the weight channels: the output is
/// `(d+1) x n`, the last row being `losses / losses[0]` (divisor 1 when the
/// first loss is exactly zero).
pub fn augment_with_loss(x: ArrayView2<f64>, losses: &[f64]) -> Result<Array2<f64>> {
    if losses.len() != x.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "augment_with_loss: {} losses for {} observed steps",
            losses.len(),
            x.ncols()
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric(
            "augment_with_loss: non-finite loss value".into(),
        ));
    }
    let divisor = if losses[0] == 0.0 { 1.0 } else { losses[0] };
    let d = x.nrows();
    let mut out = Array2::zeros((d + 1, x.ncols()));
    out.slice_mut(ndarray::s![..d, ..]).assign(&x);
    for (j, &l) in losses.iter().enumerate() {
        out[[d, j]] = l / divisor;
    }
    Ok(out)
}

/// Predict the horizon of a stored trajectory from its leading observed
/// block. The trajectory must be long enough for the model's window.
pub fn predict_trajectory(
    model: &FarcastModel,
    traj: &crate::trajgen::Trajectory,
) -> Result<Array2<f64>> {
    let w = crate::dataio::window(traj, model.n_in, model.m_out)?;
    model.predict(w.inputs.view())
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDescriptor {
    schema_version: u32,
    selector: ColumnSelector,
    columns: Vec<usize>,
    n_in: usize,
    m_out: usize,
    init: InitKind,
    train_beta: f64,
    augmented: bool,
}

/// Persist a model into `dir`: `model.json` descriptor plus `params.f64le`
/// (coefficients row-major, then the intercept).
pub fn save_model(model: &FarcastModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let descriptor = ModelDescriptor {
        schema_version: MODEL_SCHEMA_VERSION,
        selector: model.selector,
        columns: model.columns.clone(),
        n_in: model.n_in,
        m_out: model.m_out,
        init: model.init,
        train_beta: model.train_beta,
        augmented: model.augmented,
    };
    let path = dir.join(MODEL_FILE);
    let text = serde_json::to_string_pretty(&descriptor).expect("descriptor serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    write_f64le(
        &dir.join(PARAMS_FILE),
        model.coeffs.iter().chain(model.intercept.iter()),
    )
}

/// Load a model previously written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<FarcastModel> {
    let path = dir.join(MODEL_FILE);
    if !path.is_file() {
        return Err(Error::MissingPath { path });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let descriptor: ModelDescriptor =
        serde_json::from_str(&text).map_err(|e| Error::MalformedDescriptor {
            path: path.clone(),
            message: e.to_string(),
        })?;
    if descriptor.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema {
            path,
            found: descriptor.schema_version,
            supported: MODEL_SCHEMA_VERSION,
        });
    }
    let k = descriptor.columns.len();
    if k == 0 || descriptor.m_out == 0 {
        return Err(Error::MalformedDescriptor {
            path,
            message: "descriptor declares an empty model".into(),
        });
    }
    for pair in descriptor.columns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::MalformedDescriptor {
                path,
                message: format!("columns not strictly ascending: {:?}", descriptor.columns),
            });
        }
    }
    if descriptor.columns.last().copied().unwrap_or(0) >= descriptor.n_in {
        return Err(Error::MalformedDescriptor {
            path,
            message: format!(
                "column {} out of range for n_in {}",
                descriptor.columns.last().unwrap(),
                descriptor.n_in
            ),
        });
    }
    let m = descriptor.m_out;
    let flat = read_f64le(&dir.join(PARAMS_FILE), k * m + m)?;
    if let Some(bad) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite parameter at flat index {bad} in {}",
            dir.join(PARAMS_FILE).display()
        )));
    }
    let coeffs = Array2::from_shape_vec((k, m), flat[..k * m].to_vec())
        .expect("length checked by read_f64le");
    let intercept = Array1::from_vec(flat[k * m..].to_vec());
    Ok(FarcastModel {
        selector: descriptor.selector,
        columns: descriptor.columns,
        coeffs,
        intercept,
        n_in: descriptor.n_in,
        m_out: descriptor.m_out,
        init: descriptor.init,
        train_beta: descriptor.train_beta,
        augmented: descriptor.augmented,
    })
}
