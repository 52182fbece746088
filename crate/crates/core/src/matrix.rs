//! Complex matrix newtypes shared by every module.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SlpError};

/// Downlink channel `H` with one row per user.
///
/// Row `k` holds `h_k^H`, so the noise-free sample at user `k` for precoder
/// `x` is the plain product `row_k · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(DMatrix<Complex64>);

impl ChannelMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(SlpError::dims("channel must have at least one user and one antenna"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SlpError::arg("channel entries must be finite"));
        }
        Ok(Self(entries))
    }

    /// Builds `H` from row-major `(re, im)` pairs.
    pub fn from_row_major(users: usize, antennas: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != users * antennas {
            return Err(SlpError::dims(format!(
                "expected {} entries for a {users}x{antennas} channel, got {}",
                users * antennas,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(users, antennas, entries))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn users(&self) -> usize {
        self.0.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, user: usize, antenna: usize) -> Complex64 {
        self.0[(user, antenna)]
    }

    /// Row `k` (that is, `h_k^H`) as an owned vector.
    pub fn row(&self, user: usize) -> Vec<Complex64> {
        self.0.row(user).iter().copied().collect()
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.0.len());
        for k in 0..self.users() {
            out.extend(self.0.row(k).iter().copied());
        }
        out
    }

    /// Euclidean norm of user `k`'s channel vector.
    pub fn row_norm(&self, user: usize) -> f64 {
        self.0.row(user).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self(self.0.map(|z| z * alpha))
    }

    /// Appends one user row.
    pub fn with_extra_user(&self, row: &[Complex64]) -> Result<Self> {
        if row.len() != self.antennas() {
            return Err(SlpError::dims("appended row length differs from antenna count"));
        }
        let k = self.users();
        let mut m = self.0.clone().insert_row(k, Complex64::new(0.0, 0.0));
        for (n, z) in row.iter().enumerate() {
            m[(k, n)] = *z;
        }
        Self::new(m)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// Precoders stacked as columns: `N_t × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix(DMatrix<Complex64>);

impl PrecodingMatrix {
    pub fn new(columns: DMatrix<Complex64>) -> Self {
        Self(columns)
    }

    pub fn zeros(antennas: usize, columns: usize) -> Self {
        Self(DMatrix::zeros(antennas, columns))
    }

    pub fn antennas(&self) -> usize {
        self.0.nrows()
    }

    pub fn columns(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn column(&self, l: usize) -> Vec<Complex64> {
        self.0.column(l).iter().copied().collect()
    }

    pub fn set_column(&mut self, l: usize, values: &[Complex64]) {
        for (n, v) in values.iter().enumerate() {
            self.0[(n, l)] = *v;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// Entries in column-major order (column `l`, antenna `n` at `l * N_t + n`).
    pub fn column_major(&self) -> Vec<Complex64> {
        self.0.as_slice().to_vec()
    }

    pub fn from_column_major(antennas: usize, columns: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != antennas * columns {
            return Err(SlpError::dims("precoder entry count does not match shape"));
        }
        Ok(Self(DMatrix::from_column_slice(antennas, columns, entries)))
    }
}
