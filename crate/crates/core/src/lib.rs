//! Long-horizon forecasting of optimizer weight trajectories.
//!
//! The crate covers the full loop:
//!
//! 1. [`trajgen`] traces GD/SGD/Adam/AdamW on two built-in synthetic
//!    regression suites, producing weight trajectories.
//! 2. [`dataio`] persists trajectories in a simple raw-float format, imports
//!    externally produced ones, slices them into forecasting windows, and
//!    splits them into train/dev/test sets.
//! 3. [`farcaster`] fits one-layer linear forecasters that map a handful of
//!    observed steps directly to all remaining steps in a single shot.
//! 4. [`closedform`] builds the exact forecaster for scalar-affine update
//!    rules and checks it against simulated rollouts.
//! 5. [`eval`] scores predictions at checkpoints, aggregates over trials,
//!    counts floating-point work, and writes reports.
//! 6. [`pipeline`] wires the stages together behind a [`config::RunConfig`];
//!    the `farcast` binary exposes them as subcommands.
//!
//! Everything is deterministic given the seeds in the configuration: reruns
//! produce byte-identical trajectories, models, and reports.

pub mod closedform;
pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod farcaster;
pub mod optim;
pub mod pipeline;
pub mod seeds;
pub mod trajgen;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
