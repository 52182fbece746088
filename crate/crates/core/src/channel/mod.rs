//! Channel corpora: Rayleigh and Rician draws, AWGN, and the `SLPD` file
//! format.

mod format;
pub mod rng;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SlpError};
use crate::matrix::ChannelMatrix;

pub use format::{
    load_dataset, load_precoders, read_dataset, save_dataset, save_precoders, write_dataset,
    FORMAT_VERSION, MAGIC,
};
use rng::{domain, Substream};

/// Common per-user noise variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(SlpError::arg(format!("noise variance must be positive, got {variance}")));
        }
        Ok(Self { variance })
    }

    /// `σ² = P / 10^(snr_db / 10)`.
    pub fn from_snr_db(power: f64, snr_db: f64) -> Result<Self> {
        Self::new(power / 10f64.powf(snr_db / 10.0))
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// A seeded collection of channel realizations sharing `(K, N_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    users: usize,
    antennas: usize,
    seed: u64,
    channels: Vec<ChannelMatrix>,
}

impl Dataset {
    pub fn new(users: usize, antennas: usize, seed: u64, channels: Vec<ChannelMatrix>) -> Result<Self> {
        if users == 0 || antennas == 0 {
            return Err(SlpError::arg("K and N_t must be at least 1"));
        }
        if let Some(h) = channels.iter().find(|h| h.users() != users || h.antennas() != antennas) {
            return Err(SlpError::dims(format!(
                "dataset is {users}x{antennas} but contains a {}x{} channel",
                h.users(),
                h.antennas()
            )));
        }
        Ok(Self {
            users,
            antennas,
            seed,
            channels,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[ChannelMatrix] {
        &self.channels
    }

    pub fn get(&self, i: usize) -> Option<&ChannelMatrix> {
        self.channels.get(i)
    }

    /// Keeps the first `n` channels.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            channels: self.channels.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    /// Splits off the channels from index `at` onwards.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.len());
        let head = Self {
            channels: self.channels[..at].to_vec(),
            ..self.clone()
        };
        let tail = Self {
            channels: self.channels[at..].to_vec(),
            ..self.clone()
        };
        (head, tail)
    }
}

fn check_dims(users: usize, antennas: usize, count: usize) -> Result<()> {
    if users == 0 || antennas == 0 {
        return Err(SlpError::arg("K and N_t must be at least 1"));
    }
    if count == 0 {
        return Err(SlpError::arg("count must be at least 1"));
    }
    Ok(())
}

/// Channel `i` uses substream `i`, so any subset can be regenerated
/// independently of the rest.
fn draw_channel(users: usize, antennas: usize, seed: u64, index: u64, los: Option<(f64, f64)>) -> ChannelMatrix {
    let mut s = Substream::new(seed, domain::CHANNEL, index);
    let mut m = DMatrix::zeros(users, antennas);
    // Row-major draw order.
    for k in 0..users {
        for n in 0..antennas {
            let g = s.complex_normal(1.0);
            m[(k, n)] = match los {
                None => g,
                Some((a, b)) => Complex64::new(a, 0.0) + g * b,
            };
        }
    }
    ChannelMatrix::new(m).expect("Gaussian draws are finite")
}

/// `count` channels with i.i.d. `CN(0, 1)` entries.
pub fn sample_rayleigh(users: usize, antennas: usize, count: usize, seed: u64) -> Result<Dataset> {
    check_dims(users, antennas, count)?;
    let channels = (0..count as u64)
        .map(|i| draw_channel(users, antennas, seed, i, None))
        .collect();
    Dataset::new(users, antennas, seed, channels)
}

/// Rician channels `sqrt(κ/(κ+1)) + sqrt(1/(κ+1)) CN(0, 1)` with a unit
/// line-of-sight component. `κ = 0` reproduces [`sample_rayleigh`] exactly.
pub fn sample_rician(users: usize, antennas: usize, count: usize, k_factor: f64, seed: u64) -> Result<Dataset> {
    check_dims(users, antennas, count)?;
    if !(k_factor >= 0.0) || !k_factor.is_finite() {
        return Err(SlpError::arg(format!("Rician K-factor must be >= 0, got {k_factor}")));
    }
    if k_factor == 0.0 {
        return sample_rayleigh(users, antennas, count, seed);
    }
    let los = ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt());
    let channels = (0..count as u64)
        .map(|i| draw_channel(users, antennas, seed, i, Some(los)))
        .collect();
    Dataset::new(users, antennas, seed, channels)
}

/// `count` i.i.d. `CN(0, variance)` samples.
pub fn sample_awgn(count: usize, variance: f64, seed: u64) -> Result<Vec<Complex64>> {
    let noise = NoiseModel::new(variance)?;
    let mut s = Substream::new(seed, domain::NOISE, 0);
    Ok((0..count).map(|_| s.complex_normal(noise.variance())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(d: &Dataset) -> Vec<Complex64> {
        d.channels().iter().flat_map(|h| h.row_major()).collect()
    }

    #[test]
    fn rayleigh_statistics() {
        let d = sample_rayleigh(3, 4, 1000, 42).unwrap();
        assert_eq!(d.len(), 1000);
        for k in 0..3 {
            for n in 0..4 {
                let mean: Complex64 =
                    d.channels().iter().map(|h| h.get(k, n)).sum::<Complex64>() / 1000.0;
                assert!(mean.norm() < 0.1, "entry ({k},{n}) mean {mean}");
            }
        }
        let all = entries(&d);
        let var = all.iter().map(|z| z.norm_sqr()).sum::<f64>() / all.len() as f64;
        assert!((0.9..=1.1).contains(&var), "variance {var}");
        // Real and imaginary parts each carry half the power and are uncorrelated.
        let n = all.len() as f64;
        let re_var = all.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let cov = all.iter().map(|z| z.re * z.im).sum::<f64>() / n;
        assert!((re_var - 0.5).abs() < 5.0 * (0.5 / n.sqrt()) * 2f64.sqrt());
        assert!(cov.abs() < 5.0 * 0.5 / n.sqrt());
    }

    #[test]
    fn rayleigh_is_deterministic() {
        let a = sample_rayleigh(3, 4, 50, 42).unwrap();
        let b = sample_rayleigh(3, 4, 50, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_rayleigh(3, 4, 50, 43).unwrap();
        assert_ne!(a, c);
        // Prefix property of per-channel substreams.
        assert_eq!(sample_rayleigh(3, 4, 10, 42).unwrap().channels(), &a.channels()[..10]);
        assert!(sample_rayleigh(3, 4, 0, 42).is_err());
    }

    #[test]
    fn rician_limits() {
        let r = sample_rayleigh(2, 3, 20, 9).unwrap();
        assert_eq!(sample_rician(2, 3, 20, 0.0, 9).unwrap(), r);
        let big = sample_rician(2, 3, 20, 1e6, 9).unwrap();
        for z in entries(&big) {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 0.01);
        }
        assert!(sample_rician(2, 3, 20, -1.0, 9).is_err());
    }

    #[test]
    fn rician_mean() {
        let d = sample_rician(2, 2, 1000, 1.0, 5).unwrap();
        let all = entries(&d);
        let mean = all.iter().sum::<Complex64>() / all.len() as f64;
        assert!((mean.re - 0.5f64.sqrt()).abs() < 0.05, "{mean}");
        assert!(mean.im.abs() < 0.05);
    }

    #[test]
    fn awgn_statistics() {
        let n = sample_awgn(10_000, 1.0, 3).unwrap();
        let var = n.iter().map(|z| z.norm_sqr()).sum::<f64>() / n.len() as f64;
        assert!((0.94..=1.06).contains(&var), "{var}");
        assert_eq!(n, sample_awgn(10_000, 1.0, 3).unwrap());
        assert!(sample_awgn(10, -1.0, 3).is_err());
        assert!(sample_awgn(10, 0.0, 3).is_err());
    }

    #[test]
    fn snr_to_noise() {
        let n = NoiseModel::from_snr_db(1.0, 20.0).unwrap();
        assert!((n.variance() - 0.01).abs() < 1e-15);
    }
}
