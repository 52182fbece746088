//! Symbol-level precoding (SLP) for the multi-user MISO downlink with M-PSK
//! signalling.
//!
//! The crate provides:
//!
//! * [`constellation`]: PSK geometry, the constructive-interference QoS margin,
//!   hard-decision detection and the rotation-symmetry reduction of the
//!   precoding matrix to `M^(K-1)` columns.
//! * [`channel`]: seeded Rayleigh/Rician channel corpora, AWGN and the `SLPD`
//!   dataset file format.
//! * [`solver`]: an exact max-min fairness solver for the precoding problem
//!   and an independent bisection oracle.
//! * [`blp`]: a zero-forcing block-level baseline.
//! * [`neural`]: a from-scratch trainable precoding network with hand-written
//!   backpropagation, the unsupervised margin loss and Adam.
//! * [`evaluator`]: Monte Carlo SER sweeps and timing benchmarks.
//! * [`cli`]: the `slp` command line driver.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod blp;
pub mod channel;
pub mod cli;
pub mod constellation;
pub mod error;
pub mod evaluator;
pub mod matrix;
pub mod neural;
pub mod solver;

pub use error::{Result, SlpError};

pub use num_complex::Complex64;

/// Version string embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
