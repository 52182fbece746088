//! C ABI over `slp_core`.
//!
//! Every fallible function returns an [`SlpStatus`]; on failure the message
//! is kept per thread and read with [`slp_last_error`]. Datasets and
//! networks are opaque handles released with their `_free` function.
//!
//! Complex arrays are interleaved `(re, im)` doubles, the layout of C99
//! `double _Complex`. Channels are `K × N_t` row-major; precoding matrices
//! are `N_t × N_par` column-major.
//!
//! # Safety
//!
//! Every pointer argument is either null, which is reported as
//! `SLP_STATUS_NULL_POINTER` where the argument is required, or valid for
//! the documented number of elements. Strings are NUL-terminated. Handles
//! come from this library and are freed at most once.

// The contract above covers every exported function.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use slp_core::channel::{load_dataset, sample_rayleigh, save_dataset, Dataset};
use slp_core::constellation::Constellation;
use slp_core::matrix::{ChannelMatrix, PrecodingMatrix};
use slp_core::neural::{load_checkpoint, Network};
use slp_core::solver::{evaluate_objective, solve_maxmin, SolveConfig};
use slp_core::{Complex64, SlpError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlpStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    InvalidConstellation = 3,
    RankDeficient = 4,
    Format = 5,
    NonFinite = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// A channel corpus.
pub struct SlpDataset {
    inner: Dataset,
}

/// A network ready for inference.
pub struct SlpNetwork {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SlpStatus, String);

impl From<SlpError> for Failure {
    fn from(e: SlpError) -> Self {
        let status = match &e {
            SlpError::InvalidConstellation(_) => SlpStatus::InvalidConstellation,
            SlpError::DimensionMismatch(_) => SlpStatus::DimensionMismatch,
            SlpError::InvalidArgument(_) => SlpStatus::InvalidArgument,
            SlpError::RankDeficient { .. } => SlpStatus::RankDeficient,
            SlpError::Format { .. } => SlpStatus::Format,
            SlpError::NonFinite { .. } => SlpStatus::NonFinite,
            SlpError::Io(_) => SlpStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: SlpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, recording its error and turning panics into [`SlpStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SlpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SlpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SlpStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(SlpStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(SlpStatus::NullPointer, format!("{name} is null")))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(SlpStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SlpStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn complex_slice(p: *const f64, len: usize, name: &str) -> Result<Vec<Complex64>, Failure> {
    if p.is_null() {
        return Err(fail(SlpStatus::NullPointer, format!("{name} is null")));
    }
    let raw = std::slice::from_raw_parts(p, 2 * len);
    Ok(raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

unsafe fn write_complex(p: *mut f64, capacity: usize, values: &[Complex64], name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(fail(SlpStatus::NullPointer, format!("{name} is null")));
    }
    if capacity < values.len() {
        return Err(fail(
            SlpStatus::DimensionMismatch,
            format!("{name} holds {capacity} entries, {} needed", values.len()),
        ));
    }
    let out = std::slice::from_raw_parts_mut(p, 2 * values.len());
    for (o, v) in out.chunks_exact_mut(2).zip(values) {
        o[0] = v.re;
        o[1] = v.im;
    }
    Ok(())
}

unsafe fn channel(h: *const f64, users: u32, antennas: u32) -> Result<ChannelMatrix, Failure> {
    let (k, n) = (users as usize, antennas as usize);
    if k == 0 || n == 0 {
        return Err(fail(SlpStatus::InvalidArgument, "K and N_t must be at least 1"));
    }
    Ok(ChannelMatrix::from_row_major(k, n, &complex_slice(h, k * n, "h")?)?)
}

fn psk(order: u32) -> Result<Constellation, Failure> {
    Ok(Constellation::new(order as usize, 0.0)?)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn slp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of reduced precoders `M^(K-1)` for `order`-PSK and `users` users.
#[no_mangle]
pub unsafe extern "C" fn slp_reduced_count(order: u32, users: u32, out: *mut usize) -> SlpStatus {
    guard(|| {
        *out_ref(out, "out")? = psk(order)?.reduced_count(users as usize)?;
        Ok(())
    })
}

/// `count` Rayleigh channels with `CN(0, 1)` entries.
#[no_mangle]
pub unsafe extern "C" fn slp_dataset_generate(
    users: u32,
    antennas: u32,
    count: u64,
    seed: u64,
    out: *mut *mut SlpDataset,
) -> SlpStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let inner = sample_rayleigh(users as usize, antennas as usize, count as usize, seed)?;
        *slot = Box::into_raw(Box::new(SlpDataset { inner }));
        Ok(())
    })
}

/// Reads an SLPD file.
#[no_mangle]
pub unsafe extern "C" fn slp_dataset_load(file: *const c_char, out: *mut *mut SlpDataset) -> SlpStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let inner = load_dataset(path(file)?)?;
        *slot = Box::into_raw(Box::new(SlpDataset { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn slp_dataset_save(dataset: *const SlpDataset, file: *const c_char) -> SlpStatus {
    guard(|| {
        let d = reference(dataset, "dataset")?;
        save_dataset(&d.inner, path(file)?)?;
        Ok(())
    })
}

/// Dimensions and size of a dataset; any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn slp_dataset_info(
    dataset: *const SlpDataset,
    users: *mut u32,
    antennas: *mut u32,
    count: *mut u64,
) -> SlpStatus {
    guard(|| {
        let d = &reference(dataset, "dataset")?.inner;
        if let Some(u) = users.as_mut() {
            *u = d.users() as u32;
        }
        if let Some(a) = antennas.as_mut() {
            *a = d.antennas() as u32;
        }
        if let Some(c) = count.as_mut() {
            *c = d.len() as u64;
        }
        Ok(())
    })
}

/// Copies channel `index` into `h_out`, which holds `capacity` complex
/// entries (at least `K·N_t`).
#[no_mangle]
pub unsafe extern "C" fn slp_dataset_channel(
    dataset: *const SlpDataset,
    index: u64,
    h_out: *mut f64,
    capacity: usize,
) -> SlpStatus {
    guard(|| {
        let d = &reference(dataset, "dataset")?.inner;
        let h = d
            .get(index as usize)
            .ok_or_else(|| fail(SlpStatus::InvalidArgument, format!("index {index} out of range")))?;
        write_complex(h_out, capacity, &h.row_major(), "h_out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn slp_dataset_free(dataset: *mut SlpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Max-min precoder for one channel. `x_out` holds `capacity` complex
/// entries (at least `N_t·M^(K-1)`); `t_out` receives the worst-case margin
/// and may be null.
#[no_mangle]
pub unsafe extern "C" fn slp_solve(
    h: *const f64,
    users: u32,
    antennas: u32,
    order: u32,
    power_budget: f64,
    x_out: *mut f64,
    capacity: usize,
    t_out: *mut f64,
) -> SlpStatus {
    guard(|| {
        let h = channel(h, users, antennas)?;
        let cfg = SolveConfig {
            power_budget,
            ..SolveConfig::default()
        };
        let r = solve_maxmin(&h, &psk(order)?, &cfg)?;
        write_complex(x_out, capacity, &r.x.column_major(), "x_out")?;
        if let Some(t) = t_out.as_mut() {
            *t = r.t;
        }
        Ok(())
    })
}

/// Worst-case margin of a reduced precoding matrix with `columns` columns.
#[no_mangle]
pub unsafe extern "C" fn slp_qos(
    h: *const f64,
    users: u32,
    antennas: u32,
    order: u32,
    x: *const f64,
    columns: usize,
    min_out: *mut f64,
) -> SlpStatus {
    guard(|| {
        let slot = out_ref(min_out, "min_out")?;
        let h = channel(h, users, antennas)?;
        let n = antennas as usize;
        let x = PrecodingMatrix::from_column_major(n, columns, &complex_slice(x, n * columns, "x")?)?;
        *slot = evaluate_objective(&h, &x, &psk(order)?)?;
        Ok(())
    })
}

/// Hard-decision PSK detection of one received sample.
#[no_mangle]
pub unsafe extern "C" fn slp_detect(order: u32, re: f64, im: f64, symbol_out: *mut u32) -> SlpStatus {
    guard(|| {
        let slot = out_ref(symbol_out, "symbol_out")?;
        if !re.is_finite() || !im.is_finite() {
            return Err(fail(SlpStatus::NonFinite, "received sample is not finite"));
        }
        *slot = psk(order)?.detect(Complex64::new(re, im)) as u32;
        Ok(())
    })
}

/// Loads an SLPW checkpoint for inference.
#[no_mangle]
pub unsafe extern "C" fn slp_network_load(file: *const c_char, out: *mut *mut SlpNetwork) -> SlpStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let ckpt = load_checkpoint(path(file)?)?;
        let inner = Network::new(ckpt.spec, ckpt.params)?;
        *slot = Box::into_raw(Box::new(SlpNetwork { inner }));
        Ok(())
    })
}

/// `K`, `N_t` and PSK order a network was built for; any output may be null.
#[no_mangle]
pub unsafe extern "C" fn slp_network_info(
    network: *const SlpNetwork,
    users: *mut u32,
    antennas: *mut u32,
    order: *mut u32,
) -> SlpStatus {
    guard(|| {
        let s = &reference(network, "network")?.inner.spec;
        for (p, v) in [(users, s.users), (antennas, s.antennas), (order, s.order)] {
            if let Some(p) = p.as_mut() {
                *p = v as u32;
            }
        }
        Ok(())
    })
}

/// Power-scaled reduced precoding matrix predicted for one channel.
#[no_mangle]
pub unsafe extern "C" fn slp_network_infer(
    network: *const SlpNetwork,
    h: *const f64,
    users: u32,
    antennas: u32,
    x_out: *mut f64,
    capacity: usize,
) -> SlpStatus {
    guard(|| {
        let net = &reference(network, "network")?.inner;
        let x = net.infer(&channel(h, users, antennas)?)?;
        write_complex(x_out, capacity, &x.column_major(), "x_out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn slp_network_free(network: *mut SlpNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}
