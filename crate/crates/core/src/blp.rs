//! Zero-forcing block-level baseline.
//!
//! One fixed beamformer per user, designed from the channel alone and
//! applied linearly as `x = W s`. Interference is nulled rather than
//! exploited.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::constellation::{enumerate_reduced_symbol_vectors, Constellation, SymbolVector};
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

/// Per-user beamformers, `N_t × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrecoder {
    w: DMatrix<Complex64>,
}

impl BlockPrecoder {
    pub fn new(w: DMatrix<Complex64>) -> Self {
        Self { w }
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.w
    }

    pub fn antennas(&self) -> usize {
        self.w.nrows()
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }

    /// Transmit vectors for every reduced symbol vector, so the baseline can
    /// be fed through the same rotation expansion as symbol-level designs.
    /// Exact because `W` is linear in the symbols.
    pub fn reduced_precoders(&self, c: &Constellation) -> Result<PrecodingMatrix> {
        let symbols = enumerate_reduced_symbol_vectors(c, self.users())?;
        let mut x = PrecodingMatrix::zeros(self.antennas(), symbols.len());
        for (l, s) in symbols.iter().enumerate() {
            x.set_column(l, &blp_transmit(self, s, c)?);
        }
        Ok(x)
    }
}

/// `W = Hᴴ(HHᴴ)⁻¹` with unit-norm columns scaled to power `P/K` each.
pub fn zf_precoder(h: &ChannelMatrix, power: f64) -> Result<BlockPrecoder> {
    let (k, n_t) = (h.users(), h.antennas());
    if !(power > 0.0) || !power.is_finite() {
        return Err(SlpError::arg("power budget must be positive"));
    }
    if k > n_t {
        return Err(SlpError::RankDeficient { rank: n_t, users: k });
    }
    let hm = h.as_matrix();
    let sv = hm.singular_values();
    let top = sv.max();
    let cutoff = top * f64::EPSILON * n_t as f64;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    if rank < k {
        return Err(SlpError::RankDeficient { rank, users: k });
    }

    let hh = hm.adjoint();
    let gram = hm * &hh;
    let inv = gram
        .try_inverse()
        .ok_or(SlpError::RankDeficient { rank, users: k })?;
    let mut w = hh * inv;
    let per_user = (power / k as f64).sqrt();
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        col.unscale_mut(n);
        col.scale_mut(per_user);
    }
    Ok(BlockPrecoder { w })
}

/// `x = Σ_k w_k e^{jθ_{s(k)}}`.
pub fn blp_transmit(w: &BlockPrecoder, s: &SymbolVector, c: &Constellation) -> Result<Vec<Complex64>> {
    if s.users() != w.users() {
        return Err(SlpError::dims(format!(
            "symbol vector has {} users, precoder has {}",
            s.users(),
            w.users()
        )));
    }
    let mut x = vec![Complex64::default(); w.antennas()];
    for k in 0..w.users() {
        let sym = c.symbol(s.get(k));
        for (n, xv) in x.iter_mut().enumerate() {
            *xv += w.w[(n, k)] * sym;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_rayleigh;
    use crate::constellation::enumerate_full_symbol_vectors;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_channel() {
        let w = zf_precoder(&ChannelMatrix::identity(2), 1.0).unwrap();
        let expect = DMatrix::identity(2, 2) * c(0.5f64.sqrt(), 0.0);
        assert!((w.as_matrix() - expect).norm() < 1e-15);
    }

    #[test]
    fn more_users_than_antennas() {
        let d = sample_rayleigh(3, 2, 1, 0).unwrap();
        assert!(matches!(
            zf_precoder(&d.channels()[0], 1.0),
            Err(SlpError::RankDeficient { users: 3, .. })
        ));
    }

    #[test]
    fn collinear_rows_are_rank_deficient() {
        let h = ChannelMatrix::from_row_major(2, 3, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(2.0, 0.0), c(0.0, 2.0), c(4.0, 0.0)])
            .unwrap();
        assert!(matches!(
            zf_precoder(&h, 1.0),
            Err(SlpError::RankDeficient { rank: 1, users: 2 })
        ));
    }

    #[test]
    fn transmit_examples() {
        let q = Constellation::qpsk();
        let id = BlockPrecoder::new(DMatrix::identity(2, 2));
        let x = blp_transmit(&id, &SymbolVector::new(vec![0, 1], &q).unwrap(), &q).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15 && (x[1] - c(0.0, 1.0)).norm() < 1e-15);

        let w = BlockPrecoder::new(DMatrix::from_row_slice(2, 2, &[c(1.0, 2.0), c(3.0, 0.0), c(0.0, -1.0), c(0.5, 0.5)]));
        let x = blp_transmit(&w, &SymbolVector::new(vec![0, 0], &q).unwrap(), &q).unwrap();
        assert_eq!(x, vec![c(4.0, 2.0), c(0.5, -0.5)]);

        let z = BlockPrecoder::new(DMatrix::zeros(3, 2));
        let x = blp_transmit(&z, &SymbolVector::new(vec![2, 3], &q).unwrap(), &q).unwrap();
        assert!(x.iter().all(|v| v.norm() == 0.0));

        assert!(blp_transmit(&z, &SymbolVector::new(vec![0], &q).unwrap(), &q).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn zero_interference_and_power(seed in any::<u64>(), k in 1usize..4, extra in 0usize..3, p in 0.1f64..10.0) {
            let q = Constellation::qpsk();
            let h = sample_rayleigh(k, k + extra, 1, seed).unwrap().channels()[0].clone();
            let w = zf_precoder(&h, p).unwrap();
            let hw = h.as_matrix() * w.as_matrix();
            for i in 0..k {
                for j in 0..k {
                    if i == j {
                        prop_assert!(hw[(i, i)].re > 0.0 && hw[(i, i)].im.abs() < 1e-9 * hw[(i, i)].re);
                    } else {
                        prop_assert!(hw[(i, j)].norm() < 1e-9);
                    }
                }
            }
            prop_assert!((w.as_matrix().norm_squared() - p).abs() <= 1e-9 * p);
            // Average power over the full alphabet.
            let all = enumerate_full_symbol_vectors(&q, k).unwrap();
            let avg: f64 = all
                .iter()
                .map(|s| blp_transmit(&w, s, &q).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                / all.len() as f64;
            prop_assert!(avg <= p * (1.0 + 1e-9));
        }
    }
}
