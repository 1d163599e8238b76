//! Per-pair evaluation rows and their CSV persistence.
//!
//! Schema (one header row, then one line per row):
//! `method,kappa_db,T,seed,pair,inr_rx_db,sinr_rx_db,r_tx,r_rx,r_sum`
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `load_results(emit_results(rows))` reproduces every numeric field
//! bit-exactly.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,kappa_db,T,seed,pair,inr_rx_db,sinr_rx_db,r_tx,r_rx,r_sum";

/// One `(method, pair)` evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub kappa_db: f64,
    /// Probing horizon for probing methods; 0 for the closed-form baselines.
    pub horizon: usize,
    pub seed: u64,
    pub pair: usize,
    pub inr_rx_db: f64,
    pub sinr_rx_db: f64,
    pub r_tx: f64,
    pub r_rx: f64,
    pub r_sum: f64,
}

impl ResultRow {
    fn sort_key(&self) -> (String, u64, usize, u64, usize) {
        (
            self.method.clone(),
            self.kappa_db.to_bits(),
            self.horizon,
            self.seed,
            self.pair,
        )
    }
}

/// Write rows as CSV, sorted by `(method, kappa, seed, pair)` so the output
/// is independent of the production order.
pub fn emit_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.kappa_db,
            r.horizon,
            r.seed,
            r.pair,
            r.inr_rx_db,
            r.sinr_rx_db,
            r.r_tx,
            r.r_rx,
            r.r_sum
        )?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {name} from `{field}`"),
    })
}

/// Read a CSV produced by [`emit_results`].
pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == CSV_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header `{h}`"),
            })
        }
        Some((_, Err(e))) => return Err(e.into()),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 columns, found {}", fields.len()),
            });
        }
        rows.push(ResultRow {
            method: fields[0].trim().to_string(),
            kappa_db: parse_field(fields[1], "kappa_db", lineno)?,
            horizon: parse_field(fields[2], "T", lineno)?,
            seed: parse_field(fields[3], "seed", lineno)?,
            pair: parse_field(fields[4], "pair", lineno)?,
            inr_rx_db: parse_field(fields[5], "inr_rx_db", lineno)?,
            sinr_rx_db: parse_field(fields[6], "sinr_rx_db", lineno)?,
            r_tx: parse_field(fields[7], "r_tx", lineno)?,
            r_rx: parse_field(fields[8], "r_rx", lineno)?,
            r_sum: parse_field(fields[9], "r_sum", lineno)?,
        });
    }
    Ok(rows)
}

/// Empirical CDF of a sample set: sorted `(value, fraction <= value)` step
/// points, no smoothing.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}
