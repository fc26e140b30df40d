//! Exercises the C ABI end to end from Rust: handle lifecycles, buffer
//! copies, error codes, and message reporting.

use std::ffi::{CStr, CString};
use std::os::raw::c_int;
use std::ptr;

use ndarray::Array2;

use farcast::farcaster::{ColumnSelector, FarcastModel, InitKind};
use farcast::trajgen::{Trajectory, TrajectoryMeta};
use farcast_ffi::*;

fn c_path(path: &std::path::Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(fc_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

fn demo_trajectory() -> Trajectory {
    Trajectory {
        weights: Array2::from_shape_fn((12, 3), |(i, j)| i as f64 + 0.125 * j as f64),
        losses: Some((0..12).map(|i| 144.0 - i as f64).collect()),
        meta: TrajectoryMeta {
            source_id: "demo".into(),
            ..TrajectoryMeta::default()
        },
    }
}

#[test]
fn version_and_initial_error_message() {
    let version = unsafe { CStr::from_ptr(fc_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
    assert_eq!(last_error(), "");
}

#[test]
fn trajectory_round_trip_through_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let stored = dir.path().join("traj");
    farcast::dataio::save_trajectory(&demo_trajectory(), &stored).unwrap();

    let mut handle: *mut FcTrajectory = ptr::null_mut();
    let code = unsafe { fc_trajectory_load(c_path(&stored).as_ptr(), &mut handle) };
    assert_eq!(code, FC_OK, "{}", last_error());
    assert!(!handle.is_null());

    let (mut steps, mut dim) = (0usize, 0usize);
    unsafe {
        assert_eq!(fc_trajectory_steps(handle, &mut steps), FC_OK);
        assert_eq!(fc_trajectory_dim(handle, &mut dim), FC_OK);
    }
    assert_eq!((steps, dim), (12, 3));

    let mut buffer = vec![0.0f64; steps * dim];
    let code =
        unsafe { fc_trajectory_copy_weights(handle, buffer.as_mut_ptr(), buffer.len()) };
    assert_eq!(code, FC_OK);
    let expected = demo_trajectory();
    assert_eq!(
        buffer,
        expected.weights.iter().copied().collect::<Vec<f64>>()
    );

    // A wrong buffer size is rejected before any write.
    let code = unsafe { fc_trajectory_copy_weights(handle, buffer.as_mut_ptr(), 5) };
    assert_eq!(code, FC_ERR_INVALID);
    assert!(last_error().contains("buffer"));

    // Save through the boundary and reload with the native API.
    let resaved = dir.path().join("resaved");
    let code = unsafe { fc_trajectory_save(handle, c_path(&resaved).as_ptr()) };
    assert_eq!(code, FC_OK, "{}", last_error());
    let back = farcast::dataio::load_trajectory(&resaved).unwrap();
    assert_eq!(back.weights, expected.weights);
    assert_eq!(back.losses, expected.losses);

    unsafe { fc_trajectory_free(handle) };
}

#[test]
fn import_reads_an_external_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let stored = dir.path().join("external");
    farcast::dataio::save_trajectory(&demo_trajectory(), &stored).unwrap();

    let manifest = stored.join("manifest.json");
    let mut handle: *mut FcTrajectory = ptr::null_mut();
    let code = unsafe { fc_trajectory_import(c_path(&manifest).as_ptr(), &mut handle) };
    assert_eq!(code, FC_OK, "{}", last_error());
    let mut steps = 0usize;
    unsafe {
        assert_eq!(fc_trajectory_steps(handle, &mut steps), FC_OK);
        fc_trajectory_free(handle);
    }
    assert_eq!(steps, 12);
}

#[test]
fn model_round_trip_and_prediction_match_the_native_path() {
    let dir = tempfile::tempdir().unwrap();
    let stored = dir.path().join("model");
    let mut model = FarcastModel::new(ColumnSelector::FirstLast, 4, 6, InitKind::Persistence)
        .unwrap();
    model.coeffs[[0, 2]] = -0.75;
    model.intercept[5] = 0.5;
    farcast::farcaster::save_model(&model, &stored).unwrap();

    let mut handle: *mut FcModel = ptr::null_mut();
    let code = unsafe { fc_model_load(c_path(&stored).as_ptr(), &mut handle) };
    assert_eq!(code, FC_OK, "{}", last_error());

    let (mut n_in, mut m_out) = (0usize, 0usize);
    unsafe {
        assert_eq!(fc_model_n_in(handle, &mut n_in), FC_OK);
        assert_eq!(fc_model_m_out(handle, &mut m_out), FC_OK);
    }
    assert_eq!((n_in, m_out), (4, 6));

    let dim = 3usize;
    let inputs = Array2::from_shape_fn((dim, n_in), |(i, j)| (i * n_in + j) as f64 * 0.1 - 0.4);
    let flat: Vec<f64> = inputs.iter().copied().collect();
    let mut out = vec![0.0f64; dim * m_out];
    let code = unsafe {
        fc_model_predict(
            handle,
            flat.as_ptr(),
            dim,
            n_in,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(code, FC_OK, "{}", last_error());
    let native = model.predict(inputs.view()).unwrap();
    assert_eq!(out, native.iter().copied().collect::<Vec<f64>>());

    // Shape violations are reported, not written.
    let code = unsafe {
        fc_model_predict(handle, flat.as_ptr(), dim, n_in, out.as_mut_ptr(), 1)
    };
    assert_eq!(code, FC_ERR_INVALID);
    let code = unsafe {
        // Wrong number of observed steps for this model.
        fc_model_predict(handle, flat.as_ptr(), 4, 3, out.as_mut_ptr(), 4 * m_out)
    };
    assert_eq!(code, FC_ERR_INVALID);

    // Save through the boundary, reload natively, compare.
    let resaved = dir.path().join("resaved-model");
    let code = unsafe { fc_model_save(handle, c_path(&resaved).as_ptr()) };
    assert_eq!(code, FC_OK, "{}", last_error());
    let back = farcast::farcaster::load_model(&resaved).unwrap();
    assert_eq!(back, model);

    unsafe { fc_model_free(handle) };
}

#[test]
fn null_and_missing_path_errors_are_typed() {
    let mut handle: *mut FcTrajectory = ptr::null_mut();
    let code = unsafe { fc_trajectory_load(ptr::null(), &mut handle) };
    assert_eq!(code, FC_ERR_NULL_ARGUMENT);
    assert!(last_error().contains("null"));

    let dir = tempfile::tempdir().unwrap();
    let absent = c_path(&dir.path().join("nope"));
    let code = unsafe { fc_trajectory_load(absent.as_ptr(), &mut handle) };
    assert_eq!(code, FC_ERR_IO);
    assert!(!last_error().is_empty());
    assert!(handle.is_null(), "no handle on failure");

    let mut model: *mut FcModel = ptr::null_mut();
    let code = unsafe { fc_model_load(absent.as_ptr(), &mut model) };
    assert_eq!(code, FC_ERR_IO);

    // A malformed descriptor maps to the format code.
    let broken = dir.path().join("broken");
    std::fs::create_dir_all(&broken).unwrap();
    std::fs::write(broken.join("model.json"), "{").unwrap();
    let code = unsafe { fc_model_load(c_path(&broken).as_ptr(), &mut model) };
    assert_eq!(code, FC_ERR_FORMAT);

    // Frees tolerate null.
    unsafe {
        fc_trajectory_free(ptr::null_mut());
        fc_model_free(ptr::null_mut());
    }
}

#[test]
fn flops_across_the_boundary_with_overflow_reporting() {
    let mut out = 0u64;
    unsafe {
        assert_eq!(fc_flops_iterative(10, 100, &mut out), FC_OK);
        assert_eq!(out, 202_000);
        assert_eq!(fc_flops_farcast(10, 100, false, &mut out), FC_OK);
        assert_eq!(out, 4_000);
        assert_eq!(fc_flops_farcast(10, 100, true, &mut out), FC_OK);
        assert_eq!(out, 400);
        // 2md(d+1) with m = d = 2^32 exceeds 64 bits but not 128.
        let big = 1u64 << 32;
        assert_eq!(fc_flops_iterative(big, big, &mut out), FC_ERR_OVERFLOW);
        // Zero sizes are invalid.
        assert_eq!(fc_flops_iterative(0, 1, &mut out), FC_ERR_INVALID);
    }
}

#[test]
fn closed_form_check_passes_and_detects_blowups() {
    let mut max_error = f64::NAN;
    let code = unsafe { fc_verify_prop1(20, 60, 10, 0, 1.05, &mut max_error) };
    assert_eq!(code, FC_OK, "{}", last_error());
    assert!(max_error < 1e-10, "max error {max_error}");

    // Gigantic scales overflow the rollout; the check must fail loudly.
    let code = unsafe { fc_verify_prop1(20, 180, 3, 0, 1e8, &mut max_error) };
    assert_eq!(code, FC_ERR_TOLERANCE);
    assert!(max_error.is_infinite());
    assert!(!last_error().is_empty());
}

#[test]
fn error_codes_are_distinct_and_negative() {
    let codes = [
        FC_ERR_NULL_ARGUMENT,
        FC_ERR_UTF8,
        FC_ERR_IO,
        FC_ERR_FORMAT,
        FC_ERR_INVALID,
        FC_ERR_NUMERIC,
        FC_ERR_OVERFLOW,
        FC_ERR_TOLERANCE,
        FC_ERR_PANIC,
    ];
    for (i, a) in codes.iter().enumerate() {
        assert!(*a < 0);
        for b in &codes[i + 1..] {
            assert_ne!(a, b);
        }
    }
    assert_eq!(FC_OK, 0 as c_int);
}
