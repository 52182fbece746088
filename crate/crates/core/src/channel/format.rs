//! `SLPD` binary corpus format.
//!
//! Little-endian throughout:
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `SLPD`             |
//! | 4      | 4    | format version (u32)     |
//! | 8      | 4    | rows `K` (u32)           |
//! | 12     | 4    | columns `N_t` (u32)      |
//! | 16     | 8    | count (u64)              |
//! | 24     | 8    | seed (u64)               |
//! | 32     | ...  | matrices, row-major, each entry `re: f64, im: f64` |
//!
//! The same layout stores precoding corpora (rows `N_t`, columns `N_par`),
//! which is how solver labels reach supervised training.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::Dataset;
use crate::binio::OffsetReader;
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

pub const MAGIC: [u8; 4] = *b"SLPD";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 32;

struct Header {
    rows: usize,
    cols: usize,
    count: usize,
    seed: u64,
}

fn write_corpus<'a, W: Write>(
    mut w: W,
    rows: usize,
    cols: usize,
    seed: u64,
    count: usize,
    matrices: impl Iterator<Item = &'a DMatrix<Complex64>>,
) -> Result<()> {
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| SlpError::arg(format!("{what} = {v} does not fit in u32")))
    };
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim(rows, "rows")?.to_le_bytes())?;
    w.write_all(&dim(cols, "columns")?.to_le_bytes())?;
    w.write_all(&(count as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for m in matrices {
        for r in 0..rows {
            for c in 0..cols {
                let z = m[(r, c)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header<R: Read>(r: &mut OffsetReader<R>) -> Result<Header> {
    let magic: [u8; 4] = r.exact("magic")?;
    if magic != MAGIC {
        return Err(SlpError::format(0, format!("bad magic {magic:?}, expected \"SLPD\"")));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(SlpError::format(4, format!("unsupported version {version}")));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("columns")? as usize;
    if rows == 0 || cols == 0 {
        return Err(SlpError::format(8, format!("degenerate matrix shape {rows}x{cols}")));
    }
    let count = r.u64("count")?;
    let seed = r.u64("seed")?;
    let count = usize::try_from(count).map_err(|_| SlpError::format(16, "count overflows usize"))?;
    Ok(Header {
        rows,
        cols,
        count,
        seed,
    })
}

fn read_corpus<R: Read>(inner: R) -> Result<(Header, Vec<DMatrix<Complex64>>)> {
    let mut r = OffsetReader::new(inner);
    let h = read_header(&mut r)?;
    debug_assert_eq!(r.offset(), HEADER_LEN);
    // Cap the pre-allocation; a corrupt count must not trigger a huge alloc.
    let mut out = Vec::with_capacity(h.count.min(1 << 16));
    for _ in 0..h.count {
        let mut m = DMatrix::zeros(h.rows, h.cols);
        for row in 0..h.rows {
            for col in 0..h.cols {
                let re = r.f64("matrix entry")?;
                let im = r.f64("matrix entry")?;
                m[(row, col)] = Complex64::new(re, im);
            }
        }
        out.push(m);
    }
    r.expect_eof()?;
    Ok((h, out))
}

pub fn write_dataset<W: Write>(d: &Dataset, w: W) -> Result<()> {
    write_corpus(
        w,
        d.users(),
        d.antennas(),
        d.seed(),
        d.len(),
        d.channels().iter().map(|h| h.as_matrix()),
    )
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let (h, mats) = read_corpus(r)?;
    let mut channels = Vec::with_capacity(mats.len());
    for (i, m) in mats.into_iter().enumerate() {
        let offset = HEADER_LEN + (i * h.rows * h.cols * 16) as u64;
        channels.push(ChannelMatrix::new(m).map_err(|e| SlpError::format(offset, e.to_string()))?);
    }
    Dataset::new(h.rows, h.cols, h.seed, channels)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(d, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Writes precoding matrices that share one shape.
pub fn save_precoders(precoders: &[PrecodingMatrix], seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let first = precoders
        .first()
        .ok_or_else(|| SlpError::arg("no precoders to save"))?;
    let (rows, cols) = (first.antennas(), first.columns());
    if precoders.iter().any(|p| p.antennas() != rows || p.columns() != cols) {
        return Err(SlpError::dims("precoders in one file must share a shape"));
    }
    write_corpus(
        BufWriter::new(File::create(path)?),
        rows,
        cols,
        seed,
        precoders.len(),
        precoders.iter().map(|p| p.as_matrix()),
    )
}

pub fn load_precoders(path: impl AsRef<Path>) -> Result<Vec<PrecodingMatrix>> {
    let (_, mats) = read_corpus(BufReader::new(File::open(path)?))?;
    Ok(mats.into_iter().map(PrecodingMatrix::new).collect())
}
