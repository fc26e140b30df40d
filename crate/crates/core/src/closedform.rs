//! Exact forecasters for scalar-affine update rules.
//!
//! When every coordinate of an optimizer evolves as
//! `w[i+1] = scale[i] * w[i] + shift[i]` with step-dependent but
//! coordinate-independent factors, the whole future is an affine function of
//! the last observed step alone. [`construct`] materializes that function in
//! forecaster form — a coefficient matrix supported on a single row plus an
//! intercept — and [`verify`] measures how far it is from a simulated
//! rollout. GD on a quadratic objective is the canonical instance (in the
//! Hessian eigenbasis each mode is scalar-affine), and [`check_random_schedules`]
//! drives randomized end-to-end checks of the construction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::seeds::{derive_seed, STREAM_SCHEDULE};

/// Absolute error below which a constructed forecaster is accepted as exact.
pub const SCHEDULE_CHECK_TOLERANCE: f64 = 1e-10;

/// Per-transition factors of a scalar-affine update rule:
/// `w[i+1] = scale[i] * w[i] + shift[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineUpdateSchedule {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineUpdateSchedule {
    /// Number of transitions the schedule describes.
    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.len() != self.shift.len() {
            return Err(Error::ShapeMismatch(format!(
                "schedule has {} scales but {} shifts",
                self.scale.len(),
                self.shift.len()
            )));
        }
        if self
            .scale
            .iter()
            .chain(self.shift.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("schedule contains non-finite factors".into()));
        }
        Ok(())
    }

    /// Draw a schedule with `scale ~ U(-max_scale, max_scale)` and
    /// `shift ~ U(-max_shift, max_shift)`.
    pub fn random(len: usize, seed: u64, max_scale: f64, max_shift: f64) -> Result<Self> {
        if !(max_scale > 0.0) || !(max_shift >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "schedule bounds must be positive, got max_scale={max_scale} max_shift={max_shift}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale_dist = Uniform::new_inclusive(-max_scale, max_scale)
            .map_err(|e| Error::InvalidConfig(format!("bad scale range: {e}")))?;
        // A zero-width shift range is valid and yields constant zero shifts.
        let shift_dist = Uniform::new_inclusive(-max_shift, max_shift)
            .map_err(|e| Error::InvalidConfig(format!("bad shift range: {e}")))?;
        Ok(AffineUpdateSchedule {
            scale: (0..len).map(|_| scale_dist.sample(&mut rng)).collect(),
            shift: (0..len).map(|_| shift_dist.sample(&mut rng)).collect(),
        })
    }

    /// Roll the rule forward from `w0` for `num_steps` transitions; returns
    /// a `(num_steps + 1) x dim` trajectory whose row 0 is `w0`.
    ///
    /// Every coordinate follows the same schedule — that is precisely the
    /// regime in which the closed form below is exact.
    pub fn simulate(&self, w0: ArrayView1<f64>, num_steps: usize) -> Result<Array2<f64>> {
        self.validate()?;
        if num_steps > self.len() {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} transitions, cannot simulate {num_steps} steps",
                self.len()
            )));
        }
        let dim = w0.len();
        let mut out = Array2::zeros((num_steps + 1, dim));
        out.row_mut(0).assign(&w0);
        let mut current = w0.to_owned();
        for i in 0..num_steps {
            current.mapv_inplace(|w| self.scale[i] * w + self.shift[i]);
            out.row_mut(i + 1).assign(&current);
        }
        Ok(out)
    }
}

/// Build the exact forecaster for observations `w[0..=n]` predicting
/// `w[n+1..=n+m]` under the given schedule.
///
/// Returns `(coeffs, intercept)` where `coeffs` is `(n+1) x m` and supported
/// entirely on row `n` (the last observed step): the entry for horizon `j`
/// is the running product `scale[n] * ... * scale[n+j]`, and the intercept
/// obeys `b[0] = shift[n]`, `b[j] = scale[n+j] * b[j-1] + shift[n+j]`.
pub fn construct(
    schedule: &AffineUpdateSchedule,
    n: usize,
    m: usize,
) -> Result<(Array2<f64>, Array1<f64>)> {
    schedule.validate()?;
    if m == 0 {
        return Err(Error::InvalidConfig("construct needs m >= 1".into()));
    }
    if schedule.len() < n + m {
        return Err(Error::InvalidConfig(format!(
            "schedule has {} transitions but n={n}, m={m} needs {}",
            schedule.len(),
            n + m
        )));
    }
    let mut coeffs = Array2::zeros((n + 1, m));
    let mut intercept = Array1::zeros(m);
    let mut product = 1.0;
    for j in 0..m {
        product *= schedule.scale[n + j];
        coeffs[[n, j]] = product;
        intercept[j] = if j == 0 {
            schedule.shift[n]
        } else {
            schedule.scale[n + j] * intercept[j - 1] + schedule.shift[n + j]
        };
    }
    Ok((coeffs, intercept))
}

/// Largest absolute entrywise error of `x . coeffs + intercept` against `y`.
///
/// `x` is `dim x (n+1)` (observed steps in columns), `y` is `dim x m`.
pub fn verify(
    coeffs: ArrayView2<f64>,
    intercept: ArrayView1<f64>,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> f64 {
    assert_eq!(x.ncols(), coeffs.nrows(), "observed steps vs coeff rows");
    assert_eq!(y.ncols(), coeffs.ncols(), "horizon vs coeff columns");
    assert_eq!(x.nrows(), y.nrows(), "channel counts");
    assert_eq!(intercept.len(), coeffs.ncols(), "intercept length");
    let mut y_hat = x.dot(&coeffs);
    for mut row in y_hat.rows_mut() {
        row += &intercept;
    }
    y_hat.iter().zip(y.iter()).fold(0.0, |acc, (p, t)| {
        let e = (p - t).abs();
        // inf - inf produces NaN; an overflowed rollout is a failed check,
        // never a silent pass.
        if e.is_nan() {
            f64::INFINITY
        } else {
            acc.max(e)
        }
    })
}

/// Options for [`check_random_schedules`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleCheckConfig {
    /// Last observed step index; the model sees `n + 1` observations.
    pub n: usize,
    /// Forecast horizon.
    pub m: usize,
    /// Number of independent random schedules to test.
    pub trials: usize,
    /// Master seed; each trial derives its own stream.
    pub seed: u64,
    /// Scales are drawn from `U(-max_scale, max_scale)`.
    pub max_scale: f64,
    /// Shifts are drawn from `U(-max_shift, max_shift)`.
    pub max_shift: f64,
    /// Number of channels simulated per trial.
    pub dim: usize,
}

impl Default for ScheduleCheckConfig {
    fn default() -> Self {
        ScheduleCheckConfig {
            n: 20,
            m: 180,
            trials: 100,
            seed: 0,
            max_scale: 1.05,
            max_shift: 0.5,
            dim: 3,
        }
    }
}

/// Result of a randomized construction check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleCheckReport {
    /// Worst absolute prediction error over all trials and entries.
    pub max_error: f64,
    pub trials: usize,
    /// True when `max_error < SCHEDULE_CHECK_TOLERANCE`.
    pub passed: bool,
}

/// Simulate `trials` random scalar-affine rules, build the closed-form
/// forecaster for each, and report the worst prediction error.
pub fn check_random_schedules(cfg: &ScheduleCheckConfig) -> Result<ScheduleCheckReport> {
    if cfg.trials == 0 || cfg.m == 0 || cfg.dim == 0 {
        return Err(Error::InvalidConfig(
            "check needs trials >= 1, m >= 1, dim >= 1".into(),
        ));
    }
    let mut max_error = 0.0f64;
    for trial in 0..cfg.trials {
        let trial_seed = derive_seed(cfg.seed, &[STREAM_SCHEDULE, trial as u64]);
        let schedule = AffineUpdateSchedule::random(
            cfg.n + cfg.m,
            trial_seed,
            cfg.max_scale,
            cfg.max_shift,
        )?;
        // The init comes from a separate derived stream to keep it
        // independent of the schedule draw.
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed.wrapping_add(1));
        let w0 = Array1::from_shape_fn(cfg.dim, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let rollout = schedule.simulate(w0.view(), cfg.n + cfg.m)?;
        let x = rollout.slice(ndarray::s![..=cfg.n, ..]).t().to_owned();
        let y = rollout.slice(ndarray::s![cfg.n + 1.., ..]).t().to_owned();
        let (coeffs, intercept) = construct(&schedule, cfg.n, cfg.m)?;
        let err = verify(coeffs.view(), intercept.view(), x.view(), y.view());
        max_error = max_error.max(err);
    }
    Ok(ScheduleCheckReport {
        max_error,
        trials: cfg.trials,
        passed: max_error < SCHEDULE_CHECK_TOLERANCE,
    })
}
