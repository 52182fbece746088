use std::ffi::{CStr, CString};
use std::ptr;

use slp_core::channel::sample_rayleigh;
use slp_core::constellation::Constellation;
use slp_core::neural::{save_checkpoint, Checkpoint, Network, NetworkSpec};
use slp_core::solver::{solve_maxmin, SolveConfig};
use slp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(slp_last_error()) }.to_string_lossy().into_owned()
}

fn interleave(values: &[slp_core::Complex64]) -> Vec<f64> {
    values.iter().flat_map(|v| [v.re, v.im]).collect()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_and_reduced_count() {
    let v = unsafe { CStr::from_ptr(slp_version()) };
    assert_eq!(v.to_str().unwrap(), slp_core::VERSION);
    let mut n = 0usize;
    assert_eq!(unsafe { slp_reduced_count(4, 3, &mut n) }, SlpStatus::Ok);
    assert_eq!(n, 16);
    assert_eq!(unsafe { slp_reduced_count(3, 3, &mut n) }, SlpStatus::InvalidConstellation);
    assert!(last_error().contains("power of two"), "{}", last_error());
}

#[test]
fn dataset_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(slp_dataset_generate(3, 4, 10, 42, &mut d), SlpStatus::Ok);
        let (mut k, mut n, mut c) = (0u32, 0u32, 0u64);
        assert_eq!(slp_dataset_info(d, &mut k, &mut n, &mut c), SlpStatus::Ok);
        assert_eq!((k, n, c), (3, 4, 10));

        let reference = sample_rayleigh(3, 4, 10, 42).unwrap();
        let mut h = vec![0.0; 24];
        assert_eq!(slp_dataset_channel(d, 7, h.as_mut_ptr(), 12), SlpStatus::Ok);
        assert_eq!(h, interleave(&reference.channels()[7].row_major()));
        assert_eq!(slp_dataset_channel(d, 10, h.as_mut_ptr(), 12), SlpStatus::InvalidArgument);
        assert_eq!(slp_dataset_channel(d, 0, h.as_mut_ptr(), 11), SlpStatus::DimensionMismatch);

        let file = cpath(&dir.path().join("d.slpd"));
        assert_eq!(slp_dataset_save(d, file.as_ptr()), SlpStatus::Ok);
        let mut e = ptr::null_mut();
        assert_eq!(slp_dataset_load(file.as_ptr(), &mut e), SlpStatus::Ok);
        let mut g = vec![0.0; 24];
        assert_eq!(slp_dataset_channel(e, 7, g.as_mut_ptr(), 12), SlpStatus::Ok);
        assert_eq!(g, h);
        slp_dataset_free(d);
        slp_dataset_free(e);
        slp_dataset_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut d = ptr::null_mut();
    let missing = cpath(&dir.path().join("none.slpd"));
    assert_eq!(unsafe { slp_dataset_load(missing.as_ptr(), &mut d) }, SlpStatus::Io);
    let junk = dir.path().join("junk.slpd");
    std::fs::write(&junk, b"NOPE0000").unwrap();
    let junk = cpath(&junk);
    assert_eq!(unsafe { slp_dataset_load(junk.as_ptr(), &mut d) }, SlpStatus::Format);
    assert!(last_error().contains("offset 0"), "{}", last_error());
    assert!(d.is_null());
    assert_eq!(unsafe { slp_dataset_load(ptr::null(), &mut d) }, SlpStatus::NullPointer);
    assert_eq!(unsafe { slp_dataset_generate(0, 4, 10, 1, &mut d) }, SlpStatus::InvalidArgument);
}

#[test]
fn solve_matches_library_and_qos() {
    let q = Constellation::qpsk();
    let ds = sample_rayleigh(2, 3, 3, 5).unwrap();
    for h in ds.channels() {
        let hv = interleave(&h.row_major());
        let mut x = vec![0.0; 2 * 3 * 4];
        let mut t = 0.0;
        let st = unsafe { slp_solve(hv.as_ptr(), 2, 3, 4, 1.0, x.as_mut_ptr(), 12, &mut t) };
        assert_eq!(st, SlpStatus::Ok);
        let r = solve_maxmin(h, &q, &SolveConfig::default()).unwrap();
        assert_eq!(t, r.t);
        assert_eq!(x, interleave(&r.x.column_major()));

        let mut m = 0.0;
        assert_eq!(unsafe { slp_qos(hv.as_ptr(), 2, 3, 4, x.as_ptr(), 4, &mut m) }, SlpStatus::Ok);
        assert!((m - t).abs() <= 1e-12 * t.abs().max(1.0));

        let st = unsafe { slp_solve(hv.as_ptr(), 2, 3, 4, 1.0, x.as_mut_ptr(), 11, ptr::null_mut()) };
        assert_eq!(st, SlpStatus::DimensionMismatch);
        let st = unsafe { slp_solve(hv.as_ptr(), 2, 3, 4, -1.0, x.as_mut_ptr(), 12, ptr::null_mut()) };
        assert_eq!(st, SlpStatus::InvalidArgument);
    }
    let st = unsafe { slp_solve(ptr::null(), 2, 3, 4, 1.0, ptr::null_mut(), 0, ptr::null_mut()) };
    assert_eq!(st, SlpStatus::NullPointer);
    assert_eq!(last_error(), "h is null");
}

#[test]
fn detect_sectors() {
    let mut s = 99u32;
    for (re, im, expect) in [(1.0, 0.1, 0), (0.1, 1.0, 1), (-1.0, -0.1, 2), (0.1, -1.0, 3)] {
        assert_eq!(unsafe { slp_detect(4, re, im, &mut s) }, SlpStatus::Ok);
        assert_eq!(s, expect);
    }
    assert_eq!(unsafe { slp_detect(4, f64::NAN, 0.0, &mut s) }, SlpStatus::NonFinite);
    assert_eq!(unsafe { slp_detect(4, 1.0, 0.0, ptr::null_mut()) }, SlpStatus::NullPointer);
    // A successful call clears the message.
    assert_eq!(unsafe { slp_detect(4, 1.0, 0.0, &mut s) }, SlpStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn network_inference_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::narrowed(2, 3, 4, 1.0, 64);
    let net = Network::random(spec.clone(), 7).unwrap();
    let file = dir.path().join("n.slpw");
    save_checkpoint(
        &Checkpoint {
            spec,
            params: net.params.clone(),
            training: None,
        },
        &file,
    )
    .unwrap();
    let file = cpath(&file);

    let mut n = ptr::null_mut();
    unsafe {
        assert_eq!(slp_network_load(file.as_ptr(), &mut n), SlpStatus::Ok);
        let (mut k, mut a, mut m) = (0, 0, 0);
        assert_eq!(slp_network_info(n, &mut k, &mut a, &mut m), SlpStatus::Ok);
        assert_eq!((k, a, m), (2, 3, 4));
        let ds = sample_rayleigh(2, 3, 1, 3).unwrap();
        let h = &ds.channels()[0];
        let hv = interleave(&h.row_major());
        let mut x = vec![0.0; 24];
        assert_eq!(slp_network_infer(n, hv.as_ptr(), 2, 3, x.as_mut_ptr(), 12), SlpStatus::Ok);
        assert_eq!(x, interleave(&net.infer(h).unwrap().column_major()));
        assert_eq!(slp_network_infer(n, hv.as_ptr(), 3, 2, x.as_mut_ptr(), 12), SlpStatus::DimensionMismatch);
        slp_network_free(n);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/slp.h")).unwrap();
    for name in [
        "typedef struct SlpDataset SlpDataset",
        "typedef struct SlpNetwork SlpNetwork",
        "SLP_STATUS_OK = 0",
        "SLP_STATUS_PANIC = 9",
        "slp_last_error(void)",
        "slp_dataset_generate(",
        "slp_solve(",
        "slp_qos(",
        "slp_detect(",
        "slp_network_infer(",
        "slp_network_free(",
    ] {
        assert!(header.contains(name), "missing `{name}`");
    }
}
