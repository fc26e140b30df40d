//! A fixed 1 -> 10 -> 1 ReLU network whose training trace is the second
//! synthetic suite.
//!
//! Parameters are packed into a flat 31-vector in the order
//! `[w1 (10), b1 (10), w2 (10), b2 (1)]` so that optimizer states, trajectory
//! rows, and forecaster channels all share one layout.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Hidden width of the network.
pub const HIDDEN: usize = 10;
/// Total number of packed parameters: w1, b1, w2 each HIDDEN long, plus b2.
pub const MLP_PARAM_COUNT: usize = 3 * HIDDEN + 1;

const W1: usize = 0;
const B1: usize = HIDDEN;
const W2: usize = 2 * HIDDEN;
const B2: usize = 3 * HIDDEN;

fn check_params(params: ArrayView1<f64>) -> Result<()> {
    if params.len() != MLP_PARAM_COUNT {
        return Err(Error::ShapeMismatch(format!(
            "mlp parameters must have length {MLP_PARAM_COUNT}, got {}",
            params.len()
        )));
    }
    Ok(())
}

fn check_features(features: ArrayView2<f64>) -> Result<()> {
    if features.ncols() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "mlp features must have exactly 1 column, got {}",
            features.ncols()
        )));
    }
    Ok(())
}

/// Forward pass over a column of scalar features. Returns one prediction per
/// row. ReLU is used at the hidden layer; the output is affine.
pub fn mlp_forward(params: ArrayView1<f64>, features: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_params(params)?;
    check_features(features)?;
    let mut out = Array1::zeros(features.nrows());
    for (i, row) in features.rows().into_iter().enumerate() {
        let x = row[0];
        let mut acc = params[B2];
        for j in 0..HIDDEN {
            let z = params[W1 + j] * x + params[B1 + j];
            if z > 0.0 {
                acc += params[W2 + j] * z;
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Mean-squared-error objective `(1/n) * ||g(D) - e||^2` over the given rows.
pub fn mlp_loss(
    params: ArrayView1<f64>,
    features: ArrayView2<f64>,
    response: ArrayView1<f64>,
) -> Result<f64> {
    if features.nrows() != response.len() {
        return Err(Error::ShapeMismatch(format!(
            "mlp_loss: {} feature rows vs {} responses",
            features.nrows(),
            response.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::EmptyInput("mlp_loss: no samples".into()));
    }
    let preds = mlp_forward(params, features)?;
    let n = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(response.iter())
        .map(|(p, e)| (p - e) * (p - e))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mlp_loss`] with respect to the packed parameter vector.
///
/// The ReLU subgradient at exactly zero is taken as zero, matching the
/// forward pass's strict `z > 0` gate.
pub fn mlp_gradient(
    params: ArrayView1<f64>,
    features: ArrayView2<f64>,
    response: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_params(params)?;
    check_features(features)?;
    if features.nrows() != response.len() {
        return Err(Error::ShapeMismatch(format!(
            "mlp_gradient: {} feature rows vs {} responses",
            features.nrows(),
            response.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::EmptyInput("mlp_gradient: no samples".into()));
    }
    let n = features.nrows() as f64;
    let mut grad = Array1::zeros(MLP_PARAM_COUNT);
    for (i, row) in features.rows().into_iter().enumerate() {
        let x = row[0];
        let mut pred = params[B2];
        let mut hidden = [0.0f64; HIDDEN];
        for j in 0..HIDDEN {
            let z = params[W1 + j] * x + params[B1 + j];
            if z > 0.0 {
                hidden[j] = z;
                pred += params[W2 + j] * z;
            }
        }
        // d(mse)/d(pred_i) = 2 (pred_i - e_i) / n.
        let g_pred = 2.0 * (pred - response[i]) / n;
        grad[B2] += g_pred;
        for j in 0..HIDDEN {
            if hidden[j] > 0.0 {
                grad[W2 + j] += g_pred * hidden[j];
                let g_z = g_pred * params[W2 + j];
                grad[B1 + j] += g_z;
                grad[W1 + j] += g_z * x;
            }
        }
    }
    Ok(grad)
}
