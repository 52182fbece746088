//! PSK geometry: symbol alphabet, sector decision regions, the
//! constructive-interference QoS margin and the rotation symmetry that lets
//! a precoder design cover only `M^(K-1)` symbol vectors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

/// An M-PSK alphabet. Symbol `m` sits at `angle_offset + 2πm/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    order: usize,
    half_angle: f64,
    angle_offset: f64,
}

impl Constellation {
    pub fn new(order: usize, angle_offset: f64) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(SlpError::InvalidConstellation(format!(
                "PSK order must be a power of two >= 2, got {order}"
            )));
        }
        if !angle_offset.is_finite() {
            return Err(SlpError::InvalidConstellation("angle offset must be finite".into()));
        }
        Ok(Self {
            order,
            half_angle: PI / order as f64,
            angle_offset,
        })
    }

    pub fn qpsk() -> Self {
        Self::new(4, 0.0).expect("QPSK is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Half the angular width of a decision sector, `π/M`.
    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn angle_offset(&self) -> f64 {
        self.angle_offset
    }

    pub fn symbol_angle(&self, m: usize) -> f64 {
        self.angle_offset + 2.0 * PI * (m % self.order) as f64 / self.order as f64
    }

    /// Unit-modulus symbol `e^{j angle(m)}`.
    pub fn symbol(&self, m: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.symbol_angle(m))
    }

    /// Hard-decision sector detector.
    ///
    /// Returns the symbol whose angle is closest to `arg(received)`. A sample
    /// exactly on a boundary goes to the smaller index, and `0` maps to
    /// symbol 0.
    pub fn detect(&self, received: Complex64) -> usize {
        if received.re == 0.0 && received.im == 0.0 {
            return 0;
        }
        let m = self.order as f64;
        let step = 2.0 * PI / m;
        let pos = (received.arg() - self.angle_offset) / step;
        let lo = pos.floor();
        let frac = pos - lo;
        let wrap = |v: f64| (v.rem_euclid(m)) as usize % self.order;
        let (a, b) = (wrap(lo), wrap(lo + 1.0));
        if frac < 0.5 {
            a
        } else if frac > 0.5 {
            b
        } else {
            a.min(b)
        }
    }

    /// Number of reduced symbol vectors `M^(K-1)`.
    pub fn reduced_count(&self, users: usize) -> Result<usize> {
        if users == 0 {
            return Err(SlpError::arg("number of users must be at least 1"));
        }
        checked_pow(self.order, users - 1)
    }

    /// Number of full symbol vectors `M^K`.
    pub fn full_count(&self, users: usize) -> Result<usize> {
        if users == 0 {
            return Err(SlpError::arg("number of users must be at least 1"));
        }
        checked_pow(self.order, users)
    }
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or_else(|| SlpError::arg(format!("{base}^{exp} symbol vectors overflow")))
}

/// One symbol index per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolVector(Vec<usize>);

impl SymbolVector {
    pub fn new(indices: Vec<usize>, c: &Constellation) -> Result<Self> {
        if indices.is_empty() {
            return Err(SlpError::arg("symbol vector must have at least one user"));
        }
        if let Some(bad) = indices.iter().find(|&&m| m >= c.order()) {
            return Err(SlpError::arg(format!(
                "symbol index {bad} outside alphabet of size {}",
                c.order()
            )));
        }
        Ok(Self(indices))
    }

    /// Decodes a lexicographic index (first user most significant).
    pub fn from_index(mut index: usize, users: usize, c: &Constellation) -> Self {
        let m = c.order();
        let mut out = vec![0; users];
        for slot in out.iter_mut().rev() {
            *slot = index % m;
            index /= m;
        }
        Self(out)
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, k: usize) -> usize {
        self.0[k]
    }

    /// Lexicographic position among all `M^K` vectors.
    pub fn full_index(&self, c: &Constellation) -> usize {
        self.0.iter().fold(0, |acc, &m| acc * c.order() + m)
    }

    /// Rotates every entry by `-shift` symbol positions.
    pub fn rotated_back(&self, shift: usize, c: &Constellation) -> Self {
        let m = c.order();
        Self(self.0.iter().map(|&s| (s + m - shift % m) % m).collect())
    }
}

/// QoS margins `d_{k,l}`: `K` rows (users) by `L` columns (symbol vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct QosMatrix {
    users: usize,
    columns: usize,
    values: Vec<f64>,
}

impl QosMatrix {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.columns + l]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Signed distance of the noise-free point `row · x` from the nearest
/// boundary of the decision sector centred on `symbol_angle`.
///
/// With `z = (row · x) e^{-j symbol_angle}` this is
/// `(Re z tan φ - |Im z|) cos φ`, evaluated as `Re z sin φ - |Im z| cos φ`
/// so that BPSK (`φ = π/2`) stays finite. Positive iff the point lies
/// strictly inside the sector.
pub fn qos_distance(
    channel_row: &[Complex64],
    precoder: &[Complex64],
    symbol_angle: f64,
    half_angle: f64,
) -> Result<f64> {
    if channel_row.len() != precoder.len() {
        return Err(SlpError::dims(format!(
            "channel row has {} entries, precoder has {}",
            channel_row.len(),
            precoder.len()
        )));
    }
    if !(half_angle > 0.0 && half_angle <= PI / 2.0) {
        return Err(SlpError::arg("half angle must lie in (0, π/2]"));
    }
    let y: Complex64 = channel_row.iter().zip(precoder).map(|(h, x)| h * x).sum();
    Ok(margin(y, symbol_angle, half_angle))
}

#[inline]
pub(crate) fn margin(received: Complex64, symbol_angle: f64, half_angle: f64) -> f64 {
    let z = received * Complex64::from_polar(1.0, -symbol_angle);
    z.re * half_angle.sin() - z.im.abs() * half_angle.cos()
}

/// Margins for every user and every column of `X`, where column `l` carries
/// symbol vector `symbols[l]`.
pub fn qos_matrix(
    h: &ChannelMatrix,
    x: &PrecodingMatrix,
    symbols: &[SymbolVector],
    c: &Constellation,
) -> Result<QosMatrix> {
    if x.columns() != symbols.len() {
        return Err(SlpError::dims(format!(
            "{} precoder columns but {} symbol vectors",
            x.columns(),
            symbols.len()
        )));
    }
    if x.antennas() != h.antennas() {
        return Err(SlpError::dims(format!(
            "precoder has {} antennas, channel has {}",
            x.antennas(),
            h.antennas()
        )));
    }
    if let Some(s) = symbols.iter().find(|s| s.users() != h.users()) {
        return Err(SlpError::dims(format!(
            "symbol vector has {} users, channel has {}",
            s.users(),
            h.users()
        )));
    }
    let received = h.as_matrix() * x.as_matrix();
    let (users, columns) = (h.users(), x.columns());
    let mut values = Vec::with_capacity(users * columns);
    for k in 0..users {
        for (l, s) in symbols.iter().enumerate() {
            values.push(margin(received[(k, l)], c.symbol_angle(s.get(k)), c.half_angle()));
        }
    }
    Ok(QosMatrix {
        users,
        columns,
        values,
    })
}

/// All `M^(K-1)` symbol vectors with the first user pinned to symbol 0, in
/// lexicographic order.
pub fn enumerate_reduced_symbol_vectors(c: &Constellation, users: usize) -> Result<Vec<SymbolVector>> {
    let n = c.reduced_count(users)?;
    Ok((0..n).map(|i| SymbolVector::from_index(i, users, c)).collect())
}

/// All `M^K` symbol vectors in lexicographic order.
pub fn enumerate_full_symbol_vectors(c: &Constellation, users: usize) -> Result<Vec<SymbolVector>> {
    let n = c.full_count(users)?;
    Ok((0..n).map(|i| SymbolVector::from_index(i, users, c)).collect())
}

/// Recovers the precoder for every full symbol vector from the reduced set.
///
/// A full vector whose first entry is symbol `m1` is a rotation by
/// `2π m1 / M` of a reduced vector, so its precoder is that reduced column
/// rotated by the same phase. Columns follow
/// [`enumerate_full_symbol_vectors`] order.
pub fn expand_precoders(
    reduced: &PrecodingMatrix,
    c: &Constellation,
    users: usize,
) -> Result<PrecodingMatrix> {
    let n_par = c.reduced_count(users)?;
    if reduced.columns() != n_par {
        return Err(SlpError::dims(format!(
            "expected {n_par} reduced columns for K = {users}, got {}",
            reduced.columns()
        )));
    }
    let m = c.order();
    let full = n_par * m;
    let mut out = PrecodingMatrix::zeros(reduced.antennas(), full);
    let src = reduced.as_matrix();
    let dst = out.as_matrix_mut();
    for l in 0..full {
        let first = l / n_par;
        // Remaining entries shifted by -first; the first is then 0, so the
        // reduced index is the full index of the shifted vector.
        let base = SymbolVector::from_index(l, users, c).rotated_back(first, c);
        let base_idx = base.full_index(c);
        let rot = Complex64::from_polar(1.0, 2.0 * PI * first as f64 / m as f64);
        for n in 0..reduced.antennas() {
            dst[(n, l)] = src[(n, base_idx)] * rot;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c1(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn make_constellation_examples() {
        let q = Constellation::new(4, 0.0).unwrap();
        assert_eq!(q.half_angle(), PI / 4.0);
        let angles: Vec<f64> = (0..4).map(|m| q.symbol_angle(m)).collect();
        assert_eq!(angles, vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]);
        assert_eq!(Constellation::new(8, 0.0).unwrap().half_angle(), PI / 8.0);
        assert!(matches!(
            Constellation::new(3, 0.0),
            Err(SlpError::InvalidConstellation(_))
        ));
        assert!(Constellation::new(1, 0.0).is_err());
    }

    #[test]
    fn qos_distance_examples() {
        let phi = PI / 4.0;
        let h = [c1(1.0, 0.0)];
        let d = qos_distance(&h, &[c1(1.0, 0.0)], 0.0, phi).unwrap();
        assert_abs_diff_eq!(d, FRAC_1_SQRT_2, epsilon = 1e-12);
        let d = qos_distance(&h, &[Complex64::from_polar(1.0, PI / 4.0)], 0.0, phi).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-15);
        let d = qos_distance(&h, &[c1(0.0, 1.0)], 0.0, phi).unwrap();
        assert_abs_diff_eq!(d, -FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(qos_distance(&h, &[c1(1.0, 0.0), c1(0.0, 0.0)], 0.0, phi).is_err());
    }

    #[test]
    fn bpsk_margin_is_real_part() {
        let b = Constellation::new(2, 0.0).unwrap();
        let d = qos_distance(&[c1(1.0, 0.0)], &[c1(0.3, 5.0)], 0.0, b.half_angle()).unwrap();
        assert_abs_diff_eq!(d, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn qos_matrix_examples() {
        let q = Constellation::qpsk();
        let h = ChannelMatrix::identity(1);
        let x = PrecodingMatrix::from_column_major(1, 1, &[c1(1.0, 0.0)]).unwrap();
        let s = enumerate_reduced_symbol_vectors(&q, 1).unwrap();
        let m = qos_matrix(&h, &x, &s, &q).unwrap();
        assert_abs_diff_eq!(m.get(0, 0), FRAC_1_SQRT_2, epsilon = 1e-12);

        let h = ChannelMatrix::from_row_major(
            2,
            3,
            &[c1(0.3, -1.0), c1(0.1, 0.2), c1(-0.7, 0.4), c1(1.1, 0.0), c1(0.0, -0.5), c1(0.2, 0.9)],
        )
        .unwrap();
        let s = enumerate_reduced_symbol_vectors(&q, 2).unwrap();
        let zero = qos_matrix(&h, &PrecodingMatrix::zeros(3, 4), &s, &q).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        // looped oracle
        let x = PrecodingMatrix::from_column_major(
            3,
            4,
            &(0..12).map(|i| c1((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())).collect::<Vec<_>>(),
        )
        .unwrap();
        let m = qos_matrix(&h, &x, &s, &q).unwrap();
        for k in 0..2 {
            for (l, sv) in s.iter().enumerate() {
                let d = qos_distance(&h.row(k), &x.column(l), q.symbol_angle(sv.get(k)), q.half_angle())
                    .unwrap();
                assert_abs_diff_eq!(m.get(k, l), d, epsilon = 1e-14);
            }
        }
        assert!(qos_matrix(&h, &x, &s[..3], &q).is_err());
    }

    #[test]
    fn reduced_enumeration() {
        let q = Constellation::qpsk();
        let one = enumerate_reduced_symbol_vectors(&q, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].indices(), &[0]);
        let two: Vec<Vec<usize>> = enumerate_reduced_symbol_vectors(&q, 2)
            .unwrap()
            .into_iter()
            .map(|s| s.indices().to_vec())
            .collect();
        assert_eq!(two, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![0, 3]]);
        let three = enumerate_reduced_symbol_vectors(&q, 3).unwrap();
        assert_eq!(three.len(), 16);
        assert!(three.iter().all(|s| s.get(0) == 0));
        assert!(enumerate_reduced_symbol_vectors(&q, 0).is_err());
    }

    #[test]
    fn expand_single_user() {
        let q = Constellation::qpsk();
        let v = c1(0.6, -0.2);
        let x = PrecodingMatrix::from_column_major(1, 1, &[v]).unwrap();
        let full = expand_precoders(&x, &q, 1).unwrap();
        let expect = [v, v * c1(0.0, 1.0), -v, v * c1(0.0, -1.0)];
        for (l, e) in expect.iter().enumerate() {
            assert_abs_diff_eq!(full.column(l)[0].re, e.re, epsilon = 1e-15);
            assert_abs_diff_eq!(full.column(l)[0].im, e.im, epsilon = 1e-15);
        }
        let zero = expand_precoders(&PrecodingMatrix::zeros(3, 16), &q, 3).unwrap();
        assert_eq!(zero.columns(), 64);
        assert_eq!(zero.frobenius_sq(), 0.0);
        assert!(expand_precoders(&PrecodingMatrix::zeros(3, 15), &q, 3).is_err());
    }

    #[test]
    fn detect_examples() {
        let q = Constellation::qpsk();
        assert_eq!(q.detect(c1(1.0, 0.1)), 0);
        assert_eq!(q.detect(c1(-0.1, 1.0)), 1);
        assert_eq!(q.detect(Complex64::from_polar(1.0, PI / 4.0)), 0);
        assert_eq!(q.detect(c1(1.0, -1.0)), 0);
        assert_eq!(q.detect(c1(-1.0, -0.01)), 2);
        assert_eq!(q.detect(c1(0.01, -1.0)), 3);
        assert_eq!(q.detect(c1(0.0, 0.0)), 0);
    }

    fn complex() -> impl Strategy<Value = Complex64> {
        (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| c1(a, b))
    }

    proptest! {
        #[test]
        fn rotation_invariance(h in proptest::collection::vec(complex(), 3),
                               x in proptest::collection::vec(complex(), 3),
                               order_exp in 1u32..4, sym in 0usize..8, m in 0usize..8) {
            let c = Constellation::new(1 << order_exp, 0.3).unwrap();
            let rot = Complex64::from_polar(1.0, 2.0 * PI * m as f64 / c.order() as f64);
            let xr: Vec<Complex64> = x.iter().map(|v| v * rot).collect();
            let theta = c.symbol_angle(sym);
            let a = qos_distance(&h, &x, theta, c.half_angle()).unwrap();
            let b = qos_distance(&h, &xr, theta + 2.0 * PI * m as f64 / c.order() as f64, c.half_angle()).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn positive_margin_detects_correctly(y in complex(), order_exp in 1u32..4, sym in 0usize..8) {
            let c = Constellation::new(1 << order_exp, 0.0).unwrap();
            let sym = sym % c.order();
            let d = margin(y, c.symbol_angle(sym), c.half_angle());
            if d > 1e-12 {
                prop_assert_eq!(c.detect(y), sym);
            }
        }

        #[test]
        fn expansion_repeats_reduced_margins(entries in proptest::collection::vec(complex(), 2 * 2 + 2 * 4)) {
            let q = Constellation::qpsk();
            let h = ChannelMatrix::from_row_major(2, 2, &entries[..4]).unwrap();
            let xr = PrecodingMatrix::from_column_major(2, 4, &entries[4..]).unwrap();
            let red = qos_matrix(&h, &xr, &enumerate_reduced_symbol_vectors(&q, 2).unwrap(), &q).unwrap();
            let xf = expand_precoders(&xr, &q, 2).unwrap();
            prop_assert!((xf.frobenius_sq() - 4.0 * xr.frobenius_sq()).abs() < 1e-9 * (1.0 + xr.frobenius_sq()));
            let full = qos_matrix(&h, &xf, &enumerate_full_symbol_vectors(&q, 2).unwrap(), &q).unwrap();
            for l in 0..16 {
                let (m1, m2) = (l / 4, l % 4);
                let base = (m2 + 4 - m1) % 4;
                for k in 0..2 {
                    prop_assert!((full.get(k, l) - red.get(k, base)).abs() < 1e-12);
                }
            }
        }
    }
}
