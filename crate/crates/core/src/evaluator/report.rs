//! CSV and JSON result files.
//!
//! CSV files start with `#` comment lines carrying the schema version, the
//! artifact version and the resolved run configuration, followed by a
//! header row. JSON files hold the same information as one object.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlpError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerRow {
    pub backend: String,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N_t")]
    pub antennas: usize,
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub backend: String,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N_t")]
    pub antennas: usize,
    pub mean_ms: f64,
    pub samples: usize,
    /// Mean time relative to the same backend at the smallest `K`.
    pub ratio_to_smallest_k: f64,
}

fn csv_err(e: csv::Error) -> SlpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SlpError::Io(io),
        other => SlpError::arg(format!("CSV: {other:?}")),
    }
}

/// Comment header (schema, version, `comments` line by line) followed by
/// `rows` with a header row.
pub fn write_csv<W: Write, T: Serialize>(mut w: W, rows: &[T], comments: &[String]) -> Result<()> {
    writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
    writeln!(w, "# version: {}", crate::VERSION)?;
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `backend, K, N_t, snr_db, trials, errors, ser`.
pub fn write_ser_csv<W: Write>(w: W, rows: &[SerRow], comments: &[String]) -> Result<()> {
    write_csv(w, rows, comments)
}

pub fn write_bench_csv<W: Write>(w: W, rows: &[BenchRow], comments: &[String]) -> Result<()> {
    write_csv(w, rows, comments)
}

pub fn read_ser_csv<R: Read>(r: R) -> Result<Vec<SerRow>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

#[derive(Serialize)]
struct SerJson<'a, C: Serialize> {
    schema_version: u32,
    version: &'a str,
    config: &'a C,
    skipped_channels: &'a [(String, usize)],
    results: &'a [SerRow],
}

/// Non-finite SNRs are written as `null`.
pub fn write_ser_json<W: Write, C: Serialize>(
    w: W,
    rows: &[SerRow],
    config: &C,
    skipped: &[(String, usize)],
) -> Result<()> {
    let doc = SerJson {
        schema_version: SCHEMA_VERSION,
        version: crate::VERSION,
        config,
        skipped_channels: skipped,
        results: rows,
    };
    serde_json::to_writer_pretty(w, &doc).map_err(|e| SlpError::arg(format!("JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_skips_comments() {
        let rows = vec![
            SerRow {
                backend: "solver".into(),
                users: 3,
                antennas: 4,
                snr_db: 10.0,
                trials: 100,
                errors: 7,
                ser: 7.0 / 300.0,
            },
            SerRow {
                backend: "blp".into(),
                users: 3,
                antennas: 4,
                snr_db: f64::INFINITY,
                trials: 100,
                errors: 0,
                ser: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_ser_csv(&mut buf, &rows, &["seed = 1\nk = 3".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema_version: 1\n"));
        assert!(text.contains("\nbackend,K,N_t,snr_db,trials,errors,ser\n"));
        assert_eq!(read_ser_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn json_is_versioned() {
        let mut buf = Vec::new();
        write_ser_json(&mut buf, &[], &serde_json::json!({"seed": 1}), &[("nn".into(), 2)]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["config"]["seed"], 1);
        assert_eq!(v["skipped_channels"][0][1], 2);
    }
}
