//! Trajectory persistence, external import, windowing, and dataset splits.
//!
//! On disk a trajectory is a directory holding:
//!
//! - `manifest.json` — shape, schema version, and provenance metadata;
//! - `weights.f64le` — raw little-endian `f64`s, row-major, one step after
//!   another (step-major, coordinate-minor);
//! - `losses.f64le` — optional, one `f64` per step.
//!
//! The format is deliberately trivial so that external tooling can dump
//! checkpoints into it without linking this crate: write the two payload
//! files, describe them in a manifest, and [`import_external`] picks them up.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajgen::{Trajectory, TrajectoryMeta};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// File names inside a trajectory directory.
pub const MANIFEST_FILE: &str = "manifest.json";
const WEIGHTS_FILE: &str = "weights.f64le";
const LOSSES_FILE: &str = "losses.f64le";

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryManifest {
    schema_version: u32,
    dim: usize,
    steps: usize,
    has_losses: bool,
    #[serde(default)]
    meta: TrajectoryMeta,
}

/// Write a flat `f64` slice as raw little-endian bytes.
pub(crate) fn write_f64le<'a>(
    path: &Path,
    values: impl IntoIterator<Item = &'a f64>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for v in values {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read exactly `expected_len` little-endian `f64`s; any other byte count is
/// an error naming both the expected and the actual size.
pub(crate) fn read_f64le(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let actual_bytes = file
        .metadata()
        .map_err(|e| Error::io(path, e))?
        .len();
    let expected_bytes = 8 * expected_len as u64;
    if actual_bytes != expected_bytes {
        return Err(Error::PayloadSizeMismatch {
            path: path.to_path_buf(),
            expected_bytes,
            actual_bytes,
        });
    }
    let mut bytes = Vec::with_capacity(expected_bytes as usize);
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != expected_bytes {
        return Err(Error::PayloadSizeMismatch {
            path: path.to_path_buf(),
            expected_bytes,
            actual_bytes: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Persist a trajectory into `dir` (created if needed).
pub fn save_trajectory(traj: &Trajectory, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = TrajectoryManifest {
        schema_version: SCHEMA_VERSION,
        dim: traj.dim(),
        steps: traj.steps(),
        has_losses: traj.losses.is_some(),
        meta: traj.meta.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    write_f64le(&dir.join(WEIGHTS_FILE), traj.weights.iter())?;
    if let Some(losses) = &traj.losses {
        write_f64le(&dir.join(LOSSES_FILE), losses.iter())?;
    }
    Ok(())
}

/// Load a trajectory previously written by [`save_trajectory`] (or produced
/// externally in the same layout).
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingPath {
            path: manifest_path,
        });
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: TrajectoryManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedDescriptor {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema {
            path: manifest_path,
            found: manifest.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    if manifest.dim == 0 || manifest.steps == 0 {
        return Err(Error::MalformedDescriptor {
            path: manifest_path,
            message: format!(
                "dim and steps must be positive, got dim={} steps={}",
                manifest.dim, manifest.steps
            ),
        });
    }
    let weights_path = dir.join(WEIGHTS_FILE);
    let flat = read_f64le(&weights_path, manifest.dim * manifest.steps)?;
    if let Some(bad) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite weight at flat index {bad} in {}",
            weights_path.display()
        )));
    }
    let weights = Array2::from_shape_vec((manifest.steps, manifest.dim), flat)
        .expect("shape checked against payload length");
    let losses = if manifest.has_losses {
        Some(read_f64le(&dir.join(LOSSES_FILE), manifest.steps)?)
    } else {
        None
    };
    Ok(Trajectory {
        weights,
        losses,
        meta: manifest.meta,
    })
}

/// Import a trajectory produced by external tooling, given the path to its
/// manifest file.
pub fn import_external(manifest_path: &Path) -> Result<Trajectory> {
    if !manifest_path.is_file() {
        return Err(Error::MissingPath {
            path: manifest_path.to_path_buf(),
        });
    }
    let dir = manifest_path.parent().ok_or_else(|| Error::MissingPath {
        path: manifest_path.to_path_buf(),
    })?;
    load_trajectory(dir)
}

/// One forecasting instance cut from a trajectory: `n_in` observed steps and
/// the `m_out` steps to predict, both transposed to channels-by-steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FarcastWindow {
    /// Observed block, `dim x n_in`; column `j` is step `j`.
    pub inputs: Array2<f64>,
    /// Target block, `dim x m_out`; column `j` is step `n_in + j`.
    pub targets: Array2<f64>,
    /// Objective values for the observed steps, when recorded.
    pub input_losses: Option<Vec<f64>>,
    /// Objective values for the target steps, when recorded.
    pub target_losses: Option<Vec<f64>>,
    /// Identifier of the source trajectory.
    pub source_id: String,
}

impl FarcastWindow {
    pub fn dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn m_out(&self) -> usize {
        self.targets.ncols()
    }
}

/// Slice the leading window out of a trajectory: steps `0..n_in` become the
/// inputs, steps `n_in..n_in + m_out` the targets.
pub fn window(traj: &Trajectory, n_in: usize, m_out: usize) -> Result<FarcastWindow> {
    if n_in == 0 || m_out == 0 {
        return Err(Error::InvalidConfig(format!(
            "window needs n_in >= 1 and m_out >= 1, got n_in={n_in} m_out={m_out}"
        )));
    }
    let steps = traj.steps();
    if n_in + m_out > steps {
        return Err(Error::IndexOutOfRange(format!(
            "window n_in={n_in} + m_out={m_out} exceeds trajectory length {steps}"
        )));
    }
    let inputs = traj.weights.slice(ndarray::s![0..n_in, ..]).t().to_owned();
    let targets = traj
        .weights
        .slice(ndarray::s![n_in..n_in + m_out, ..])
        .t()
        .to_owned();
    let (input_losses, target_losses) = match &traj.losses {
        Some(l) => (
            Some(l[0..n_in].to_vec()),
            Some(l[n_in..n_in + m_out].to_vec()),
        ),
        None => (None, None),
    };
    Ok(FarcastWindow {
        inputs,
        targets,
        input_losses,
        target_losses,
        source_id: traj.meta.source_id.clone(),
    })
}

/// Cut the same window out of every trajectory.
pub fn windows_from(trajs: &[Trajectory], n_in: usize, m_out: usize) -> Result<Vec<FarcastWindow>> {
    trajs.iter().map(|t| window(t, n_in, m_out)).collect()
}

/// Sizes and seed for a train/dev/test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

/// Disjoint index sets produced by [`split_indices`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition `0..count` into train/dev/test by a seeded shuffle. The three
/// sizes must sum exactly to `count`.
pub fn split_indices(count: usize, spec: &SplitSpec) -> Result<SplitAssignment> {
    let total = spec.train + spec.dev + spec.test;
    if total != count {
        return Err(Error::InvalidConfig(format!(
            "split sizes {}+{}+{} = {total} do not match {count} trajectories",
            spec.train, spec.dev, spec.test
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let dev_start = spec.train;
    let test_start = spec.train + spec.dev;
    Ok(SplitAssignment {
        train: order[..dev_start].to_vec(),
        dev: order[dev_start..test_start].to_vec(),
        test: order[test_start..].to_vec(),
    })
}

/// List trajectory subdirectories of `dir` in lexicographic order.
pub fn list_trajectory_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath {
            path: dir.to_path_buf(),
        });
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
