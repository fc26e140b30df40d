//! Generation of optimizer weight trajectories on synthetic problems.
//!
//! A trajectory is the full sequence of parameter vectors visited by an
//! optimizer, including the random initialization: `num_steps` updates
//! produce `num_steps + 1` rows. Everything downstream (windowing, model
//! fitting, evaluation) consumes these rows as multichannel series.

pub mod mlp;
pub mod problem;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AdamParams, AdamState};

use self::mlp::{mlp_gradient, mlp_loss, MLP_PARAM_COUNT};
use self::problem::{
    least_squares_gradient, least_squares_loss, sample_syn1_problem, sample_syn2_problem,
    RegressionProblem,
};

/// Which synthetic suite a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// 3-dimensional least squares; the optimizer walks weight space directly.
    LeastSquares,
    /// Scalar-feature regression fitted by a small ReLU network; the
    /// optimizer walks the packed 31-parameter space.
    MlpRegression,
}

/// The update rule to trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Sgd,
    Adam,
    AdamW,
}

/// How the step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LearningRate {
    /// A constant step size.
    Fixed { value: f64 },
    /// `scale / lambda_max(D^T D)`; only meaningful for the quadratic suite.
    HessianReciprocal { scale: f64 },
}

/// Full description of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: LearningRate,
    /// Rows per minibatch; absent means the full dataset every step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Number of update steps; the trajectory has `num_steps + 1` rows.
    pub num_steps: usize,
    /// Moment/decay constants for the adaptive rules.
    #[serde(default)]
    pub adam: AdamParams,
    /// Seeds the weight initialization and the minibatch order.
    pub seed: u64,
}

impl OptimizerConfig {
    /// Check the documented domains and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        match self.learning_rate {
            LearningRate::Fixed { value } => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "learning rate must be positive and finite, got {value}"
                    )));
                }
            }
            LearningRate::HessianReciprocal { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "learning-rate scale must be positive and finite, got {scale}"
                    )));
                }
            }
        }
        if let Some(b) = self.batch_size {
            if b == 0 {
                return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
            }
            if self.kind == OptimizerKind::Gd {
                return Err(Error::InvalidConfig(
                    "gd is full-batch by definition; remove batch_size".into(),
                ));
            }
        }
        self.adam.validate()
    }
}

/// A problem instance paired with the objective the optimizer minimizes.
#[derive(Debug, Clone)]
pub enum Problem {
    /// Quadratic objective `0.5 * ||D w - e||^2` (sum over rows, no mean).
    /// Minibatch gradients restrict the sum to the batch rows, unscaled.
    LeastSquares(RegressionProblem),
    /// MLP regression with mean-squared error `(1/n) ||g(D) - e||^2`;
    /// minibatch gradients average over the batch rows.
    MlpRegression(RegressionProblem),
}

impl Problem {
    /// Sample an instance of the given suite.
    pub fn sample(kind: ProblemKind, seed: u64) -> Problem {
        match kind {
            ProblemKind::LeastSquares => Problem::LeastSquares(sample_syn1_problem(seed)),
            ProblemKind::MlpRegression => Problem::MlpRegression(sample_syn2_problem(seed)),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::LeastSquares(_) => ProblemKind::LeastSquares,
            Problem::MlpRegression(_) => ProblemKind::MlpRegression,
        }
    }

    /// Dimension of the space the optimizer walks.
    pub fn dim(&self) -> usize {
        match self {
            Problem::LeastSquares(p) => p.features.ncols(),
            Problem::MlpRegression(_) => MLP_PARAM_COUNT,
        }
    }

    /// Number of data rows available for minibatching.
    pub fn num_samples(&self) -> usize {
        match self {
            Problem::LeastSquares(p) | Problem::MlpRegression(p) => p.features.nrows(),
        }
    }

    /// Objective value over the full dataset.
    pub fn full_loss(&self, weights: ArrayView1<f64>) -> Result<f64> {
        match self {
            Problem::LeastSquares(p) => Ok(least_squares_loss(
                p.features.view(),
                p.response.view(),
                weights,
            )),
            Problem::MlpRegression(p) => mlp_loss(weights, p.features.view(), p.response.view()),
        }
    }

    /// Gradient over the given rows (all rows when `rows` is `None`).
    pub fn gradient(&self, weights: ArrayView1<f64>, rows: Option<&[usize]>) -> Result<Array1<f64>> {
        match self {
            Problem::LeastSquares(p) => match rows {
                None => least_squares_gradient(p.features.view(), p.response.view(), weights),
                Some(idx) => {
                    let f = p.features.select(Axis(0), idx);
                    let e = p.response.select(Axis(0), idx);
                    least_squares_gradient(f.view(), e.view(), weights)
                }
            },
            Problem::MlpRegression(p) => match rows {
                None => mlp_gradient(weights, p.features.view(), p.response.view()),
                Some(idx) => {
                    let f = p.features.select(Axis(0), idx);
                    let e = p.response.select(Axis(0), idx);
                    mlp_gradient(weights, f.view(), e.view())
                }
            },
        }
    }

    fn resolve_learning_rate(&self, lr: LearningRate) -> Result<f64> {
        match lr {
            LearningRate::Fixed { value } => Ok(value),
            LearningRate::HessianReciprocal { scale } => match self {
                Problem::LeastSquares(p) => {
                    Ok(scale / problem::hessian_max_eigenvalue(p.features.view())?)
                }
                Problem::MlpRegression(_) => Err(Error::InvalidConfig(
                    "hessian-reciprocal learning rate requires the quadratic objective".into(),
                )),
            },
        }
    }
}

/// Descriptive metadata persisted alongside a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// Stable identifier used for exports and reports.
    #[serde(default)]
    pub source_id: String,
    /// Which suite generated the instance, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_kind: Option<ProblemKind>,
    /// Seed that sampled the problem instance, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_seed: Option<u64>,
    /// The optimizer run that produced the rows, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
}

/// A recorded optimizer run: one weight vector per step, optionally a loss
/// per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `steps x dim`; row 0 is the initialization.
    pub weights: Array2<f64>,
    /// Full-dataset objective at each row, when recorded.
    pub losses: Option<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Dimension of the tracked weight vector.
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Number of recorded steps (updates + 1).
    pub fn steps(&self) -> usize {
        self.weights.nrows()
    }
}

/// Hands out minibatch row indices: each pass over the data is a fresh
/// shuffled partition, consumed one batch per optimizer step; a short final
/// batch is kept, never dropped.
pub(crate) struct BatchCycle {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl BatchCycle {
    pub(crate) fn new(num_samples: usize, batch: usize) -> Self {
        BatchCycle {
            order: (0..num_samples).collect(),
            // Start exhausted so the first call shuffles.
            pos: num_samples,
            batch,
        }
    }

    pub(crate) fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let start = self.pos;
        self.pos = end;
        &self.order[start..end]
    }
}

/// Run the configured optimizer from a random standard-normal init drawn
/// from `cfg.seed`, recording every visited weight vector.
pub fn run_optimizer(
    problem: &Problem,
    cfg: &OptimizerConfig,
    record_losses: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Array1::from_iter((0..problem.dim()).map(|_| StandardNormal.sample(&mut rng)));
    run_from_init(problem, cfg, init, rng, record_losses)
}

/// Run the configured optimizer from a caller-supplied initialization.
/// The seed still drives the minibatch order.
pub fn run_optimizer_from(
    problem: &Problem,
    cfg: &OptimizerConfig,
    init: Array1<f64>,
    record_losses: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    if init.len() != problem.dim() {
        return Err(Error::ShapeMismatch(format!(
            "init has {} entries but the problem dimension is {}",
            init.len(),
            problem.dim()
        )));
    }
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_from_init(problem, cfg, init, rng, record_losses)
}

fn run_from_init(
    problem: &Problem,
    cfg: &OptimizerConfig,
    init: Array1<f64>,
    mut rng: ChaCha8Rng,
    record_losses: bool,
) -> Result<Trajectory> {
    let dim = problem.dim();
    let steps = cfg.num_steps + 1;
    let lr = problem.resolve_learning_rate(cfg.learning_rate)?;

    let mut weights = Array2::zeros((steps, dim));
    weights.row_mut(0).assign(&init);
    let mut losses = if record_losses {
        Some(Vec::with_capacity(steps))
    } else {
        None
    };

    let mut cycle = cfg.batch_size.map(|b| BatchCycle::new(problem.num_samples(), b));
    let mut adam = match cfg.kind {
        OptimizerKind::Adam => Some(AdamState::new(dim, cfg.adam, false)),
        OptimizerKind::AdamW => Some(AdamState::new(dim, cfg.adam, true)),
        OptimizerKind::Gd | OptimizerKind::Sgd => None,
    };

    let mut current = init;
    for step in 0..=cfg.num_steps {
        if let Some(ls) = losses.as_mut() {
            let value = problem.full_loss(current.view())?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    message: format!("objective became {value}"),
                });
            }
            ls.push(value);
        }
        if step == cfg.num_steps {
            break;
        }
        let rows = cycle.as_mut().map(|c| c.next_batch(&mut rng).to_vec());
        let gradient = problem.gradient(current.view(), rows.as_deref())?;
        match adam.as_mut() {
            Some(state) => {
                state.step(
                    current.as_slice_mut().expect("contiguous weights"),
                    gradient.as_slice().expect("contiguous gradient"),
                    lr,
                )?;
            }
            None => {
                current.zip_mut_with(&gradient, |w, g| *w -= lr * g);
            }
        }
        if current.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                message: "weights became non-finite".into(),
            });
        }
        weights.row_mut(step + 1).assign(&current);
    }

    Ok(Trajectory {
        weights,
        losses,
        meta: TrajectoryMeta::default(),
    })
}
