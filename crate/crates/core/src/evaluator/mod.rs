//! Monte Carlo SER estimation and timing for any precoder backend.
//!
//! A backend maps a channel to the reduced precoding matrix; transmission
//! uses its rotation expansion, so every one of the `M^K` symbol vectors can
//! be sent while backends design only `M^(K-1)` columns.

mod report;

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blp::zf_precoder;
use crate::channel::rng::{domain, Substream};
use crate::channel::Dataset;
use crate::constellation::{enumerate_reduced_symbol_vectors, expand_precoders, Constellation, SymbolVector};
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};
use crate::neural::Network;
use crate::solver::{solve_maxmin, SolveConfig};

pub use report::{read_ser_csv, write_bench_csv, write_csv, write_ser_csv, write_ser_json, BenchRow, SerRow, SCHEMA_VERSION};

/// Anything that designs the reduced precoding matrix for a channel.
pub trait Backend {
    fn name(&self) -> &str;
    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix>;
}

/// The max-min solver.
pub struct SolverBackend {
    pub config: SolveConfig,
}

impl Backend for SolverBackend {
    fn name(&self) -> &str {
        "solver"
    }

    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix> {
        Ok(solve_maxmin(h, c, &self.config)?.x)
    }
}

/// A trained (or random) network in inference mode.
pub struct NeuralBackend {
    pub name: String,
    pub network: Network,
}

impl Backend for NeuralBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix> {
        if c.order() != self.network.spec.order {
            return Err(SlpError::arg("network was built for a different PSK order"));
        }
        self.network.infer(h)
    }
}

/// Zero-forcing block-level precoding; `x = W s` evaluated on the reduced
/// symbol set.
pub struct BlpBackend {
    pub power_budget: f64,
}

impl Backend for BlpBackend {
    fn name(&self) -> &str {
        "blp"
    }

    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix> {
        zf_precoder(h, self.power_budget)?.reduced_precoders(c)
    }
}

/// Test stub: zero-forces each symbol vector itself, `x_l = Hᴴ(HHᴴ)⁻¹ s_l`
/// scaled to the budget, so every noise-free margin is `α sin(π/M) > 0`.
pub struct AlwaysCorrect {
    pub power_budget: f64,
}

impl Backend for AlwaysCorrect {
    fn name(&self) -> &str {
        "always_correct"
    }

    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix> {
        let hm = h.as_matrix();
        let pinv = hm.adjoint()
            * (hm * hm.adjoint())
                .try_inverse()
                .ok_or(SlpError::RankDeficient {
                    rank: 0,
                    users: h.users(),
                })?;
        let symbols = enumerate_reduced_symbol_vectors(c, h.users())?;
        let mut x = PrecodingMatrix::zeros(h.antennas(), symbols.len());
        for (l, s) in symbols.iter().enumerate() {
            let sv = nalgebra::DVector::from_iterator(h.users(), (0..h.users()).map(|k| c.symbol(s.get(k))));
            let col = &pinv * sv;
            let scale = self.power_budget.sqrt() / col.norm();
            x.set_column(l, &col.iter().map(|v| v * scale).collect::<Vec<_>>());
        }
        Ok(x)
    }
}

/// Test stub that transmits nothing, so detection sees pure noise.
pub struct Silent;

impl Backend for Silent {
    fn name(&self) -> &str {
        "silent"
    }

    fn precode(&self, h: &ChannelMatrix, c: &Constellation) -> Result<PrecodingMatrix> {
        Ok(PrecodingMatrix::zeros(h.antennas(), c.reduced_count(h.users())?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerPoint {
    pub snr_db: f64,
    /// Symbol vectors sent.
    pub trials: u64,
    /// Wrongly detected user-symbols.
    pub errors: u64,
    /// `errors / (trials · K)`.
    pub ser: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Transmit SNR `10 log10(P / σ²)`; `inf` disables noise.
    pub snr_db: Vec<f64>,
    pub symbols_per_channel: usize,
    pub power_budget: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerSweep {
    pub points: Vec<SerPoint>,
    /// Channels on which the backend failed; they contribute no trials.
    pub skipped: usize,
}

/// SER versus SNR.
///
/// Channel `i` uses its own symbol and noise substreams, shared across SNR
/// points (common random numbers), so points differ only through `σ` and
/// results do not depend on evaluation order.
pub fn ser_sweep(backend: &dyn Backend, channels: &Dataset, c: &Constellation, cfg: &SweepConfig) -> Result<SerSweep> {
    if cfg.symbols_per_channel == 0 {
        return Err(SlpError::arg("symbols_per_channel must be at least 1"));
    }
    if !(cfg.power_budget > 0.0) || !cfg.power_budget.is_finite() {
        return Err(SlpError::arg("power budget must be positive"));
    }
    if cfg.snr_db.iter().any(|s| s.is_nan()) {
        return Err(SlpError::arg("SNR must not be NaN"));
    }
    let users = channels.users();
    let full = c.full_count(users)?;
    // 1/σ per point; received samples are scaled by it, which leaves
    // detection unchanged.
    let inv_sigma: Vec<f64> = cfg
        .snr_db
        .iter()
        .map(|s| (10f64.powf(s / 10.0) / cfg.power_budget).sqrt())
        .collect();
    let mut errors = vec![0u64; cfg.snr_db.len()];
    let mut trials = 0u64;
    let mut skipped = 0;

    for (i, h) in channels.channels().iter().enumerate() {
        let x = match backend.precode(h, c).and_then(|r| expand_precoders(&r, c, users)) {
            Ok(x) => x,
            Err(e) if matches!(e, SlpError::Io(_)) => return Err(e),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let clean = h.as_matrix() * x.as_matrix();
        let mut sym_rng = Substream::new(cfg.seed, domain::SYMBOLS, i as u64);
        let mut noise_rng = Substream::new(cfg.seed, domain::NOISE, i as u64);
        for _ in 0..cfg.symbols_per_channel {
            let u = sym_rng.below(full as u64) as usize;
            let sent = SymbolVector::from_index(u, users, c);
            let noise: Vec<Complex64> = (0..users).map(|_| noise_rng.complex_normal(1.0)).collect();
            for (p, &s) in inv_sigma.iter().enumerate() {
                for k in 0..users {
                    let y = if s.is_infinite() {
                        clean[(k, u)]
                    } else {
                        clean[(k, u)] * s + noise[k]
                    };
                    if c.detect(y) != sent.get(k) {
                        errors[p] += 1;
                    }
                }
            }
        }
        trials += cfg.symbols_per_channel as u64;
    }

    let points = cfg
        .snr_db
        .iter()
        .zip(errors)
        .map(|(&snr_db, e)| SerPoint {
            snr_db,
            trials,
            errors: e,
            ser: if trials == 0 { f64::NAN } else { e as f64 / (trials * users as u64) as f64 },
        })
        .collect();
    Ok(SerSweep { points, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub backend: String,
    pub users: usize,
    pub antennas: usize,
    pub mean_ms: f64,
    pub samples: usize,
}

/// Warm-up solves excluded from timing.
pub const WARMUP: usize = 3;

/// Mean wall-clock time of one reduced-matrix design, over `repetitions`
/// channels taken cyclically after [`WARMUP`] untimed ones. Runs on the
/// calling thread only.
pub fn timing_bench(backend: &dyn Backend, channels: &Dataset, c: &Constellation, repetitions: usize) -> Result<TimingRecord> {
    if repetitions < 10 {
        return Err(SlpError::arg("timing needs at least 10 repetitions"));
    }
    if channels.is_empty() {
        return Err(SlpError::arg("timing needs at least one channel"));
    }
    let hs = channels.channels();
    for i in 0..WARMUP {
        std::hint::black_box(backend.precode(&hs[i % hs.len()], c)?);
    }
    let mut total = 0.0;
    for i in 0..repetitions {
        let h = &hs[(WARMUP + i) % hs.len()];
        let start = Instant::now();
        std::hint::black_box(backend.precode(h, c)?);
        total += start.elapsed().as_secs_f64();
    }
    Ok(TimingRecord {
        backend: backend.name().to_string(),
        users: channels.users(),
        antennas: channels.antennas(),
        mean_ms: 1e3 * total / repetitions as f64,
        samples: repetitions,
    })
}
