//! Synthetic regression problems and their spectral/gradient primitives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Number of samples in both synthetic suites.
pub const NUM_SAMPLES: usize = 100;
/// Feature dimension of the least-squares suite.
pub const SYN1_DIM: usize = 3;
/// Feature dimension of the scalar-feature suite.
pub const SYN2_DIM: usize = 1;

/// A sampled regression instance: features, responses, and the generating
/// weight vector when one exists.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    /// Feature matrix, one row per sample.
    pub features: Array2<f64>,
    /// Response vector, one entry per sample.
    pub response: Array1<f64>,
    /// Generating weights: `response = features . optimum`.
    pub optimum: Array1<f64>,
}

fn sample_gaussian_problem(seed: u64, dim: usize) -> RegressionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Draw the generating weights first, then the feature rows in row-major
    // order, so that the stream layout is pinned for reproducibility.
    let optimum = Array1::from_iter((0..dim).map(|_| StandardNormal.sample(&mut rng)));
    let features = Array2::from_shape_fn((NUM_SAMPLES, dim), |_| StandardNormal.sample(&mut rng));
    let response = features.dot(&optimum);
    RegressionProblem {
        features,
        response,
        optimum,
    }
}

/// Sample a least-squares instance: 100 x 3 i.i.d. standard-normal features,
/// standard-normal generating weights, exact responses.
pub fn sample_syn1_problem(seed: u64) -> RegressionProblem {
    sample_gaussian_problem(seed, SYN1_DIM)
}

/// Sample a scalar-feature instance (100 x 1) with the same scheme; used as
/// the data source for the small-MLP suite.
pub fn sample_syn2_problem(seed: u64) -> RegressionProblem {
    sample_gaussian_problem(seed, SYN2_DIM)
}

/// Gradient of `0.5 * ||D w - e||^2` restricted to the given rows:
/// `D_B^T (D_B w - e_B)`. With all rows this is the full-objective gradient.
pub fn least_squares_gradient(
    features: ArrayView2<f64>,
    response: ArrayView1<f64>,
    weights: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if features.nrows() != response.len() {
        return Err(Error::ShapeMismatch(format!(
            "least_squares_gradient: {} feature rows vs {} responses",
            features.nrows(),
            response.len()
        )));
    }
    if features.ncols() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "least_squares_gradient: {} feature columns vs {} weights",
            features.ncols(),
            weights.len()
        )));
    }
    let residual = features.dot(&weights) - response;
    Ok(features.t().dot(&residual))
}

/// Unnormalized least-squares objective `0.5 * ||D w - e||^2`.
pub fn least_squares_loss(
    features: ArrayView2<f64>,
    response: ArrayView1<f64>,
    weights: ArrayView1<f64>,
) -> f64 {
    let residual = features.dot(&weights) - response;
    0.5 * residual.iter().map(|r| r * r).sum::<f64>()
}

/// Largest eigenvalue of `D^T D`, computed by power iteration on the Gram
/// matrix with a relative tolerance of 1e-10 on the Rayleigh quotient.
///
/// Errors if the spectrum is degenerate at zero (all-zero features) or the
/// iteration fails to settle within the cap.
pub fn hessian_max_eigenvalue(features: ArrayView2<f64>) -> Result<f64> {
    const REL_TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 100_000;

    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(Error::EmptyInput(
            "hessian_max_eigenvalue: empty feature matrix".into(),
        ));
    }
    let gram = features.t().dot(&features);
    let k = gram.nrows();
    let frobenius: f64 = gram.iter().map(|g| g * g).sum::<f64>().sqrt();
    if frobenius == 0.0 {
        return Err(Error::Numeric(
            "hessian_max_eigenvalue: zero Gram matrix has no dominant eigenvalue".into(),
        ));
    }

    // Deterministic start vector with a mild per-coordinate tilt so it is
    // never orthogonal to the dominant eigenspace of these Gram matrices.
    let mut v = Array1::from_iter((0..k).map(|i| 1.0 + 1e-3 * (i + 1) as f64));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);

    let mut lambda = 0.0f64;
    for _ in 0..MAX_ITERS {
        let w = gram.dot(&v);
        let next_lambda = v.dot(&w);
        let w_norm = w.dot(&w).sqrt();
        if w_norm == 0.0 {
            // The iterate landed exactly in the null space; the Gram matrix
            // is nonzero, so restart would loop — treat as degenerate.
            return Err(Error::Numeric(
                "hessian_max_eigenvalue: power iterate vanished".into(),
            ));
        }
        v = w / w_norm;
        let settled = (next_lambda - lambda).abs() <= REL_TOL * next_lambda.abs().max(f64::MIN_POSITIVE);
        lambda = next_lambda;
        if settled {
            return Ok(lambda);
        }
    }
    Err(Error::Numeric(format!(
        "hessian_max_eigenvalue: no convergence within {MAX_ITERS} iterations (degenerate spectrum?)"
    )))
}
