//! Reproducible channel datasets for fixed-dataset regression tests.
//!
//! `gen-dataset` freezes the exact realizations an evaluation would draw
//! (same common-random-numbers streams) into a JSON file that round-trips
//! every complex entry bit-exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::realization_for_pair;
use crate::channel::{ChannelRealization, LinkBudget};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComplexVec {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexVec {
    fn from_vector(v: &Array1<Complex64>) -> Self {
        Self {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }

    fn from_matrix(m: &Array2<Complex64>) -> Self {
        Self {
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        }
    }

    fn to_vector(&self) -> Array1<Complex64> {
        Array1::from_iter(
            self.re
                .iter()
                .zip(&self.im)
                .map(|(&re, &im)| Complex64::new(re, im)),
        )
    }

    fn to_matrix(&self, rows: usize, cols: usize) -> Result<Array2<Complex64>> {
        if self.re.len() != rows * cols || self.im.len() != rows * cols {
            return Err(Error::Config(format!(
                "dataset matrix has {} entries, expected {rows}x{cols}",
                self.re.len()
            )));
        }
        Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
            Complex64::new(self.re[r * cols + c], self.im[r * cols + c])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RealizationRecord {
    pair: usize,
    azimuth_tx_deg: f64,
    azimuth_rx_deg: f64,
    h_tx: ComplexVec,
    h_rx: ComplexVec,
    si: ComplexVec,
    budget: LinkBudget,
}

/// A frozen set of realizations plus the draw parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kappa_db: f64,
    pub eval_seed: u64,
    pub n_tx: usize,
    pub n_rx: usize,
    records: Vec<RealizationRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reconstruct the realizations. Cross-link interference is zero by
    /// construction in generated datasets.
    pub fn realizations(&self) -> Result<Vec<ChannelRealization>> {
        self.records
            .iter()
            .map(|r| {
                Ok(ChannelRealization {
                    h_tx: r.h_tx.to_vector(),
                    h_rx: r.h_rx.to_vector(),
                    si: r.si.to_matrix(self.n_rx, self.n_tx)?,
                    kappa_db: self.kappa_db,
                    budget: r.budget,
                    inr_cross_db: f64::NEG_INFINITY,
                    azimuth_tx_deg: r.azimuth_tx_deg,
                    azimuth_rx_deg: r.azimuth_rx_deg,
                })
            })
            .collect()
    }
}

/// Draw the same realizations an evaluation at this config would see.
pub fn generate_dataset(config: &ExperimentConfig, kappa_db: f64) -> Result<Dataset> {
    config.validate()?;
    let scenario = config.scenario(kappa_db)?;
    let records = (0..config.n_eval_pairs)
        .map(|pair| {
            let ch = realization_for_pair(&scenario, config.eval_seed, pair)?;
            Ok(RealizationRecord {
                pair,
                azimuth_tx_deg: ch.azimuth_tx_deg,
                azimuth_rx_deg: ch.azimuth_rx_deg,
                h_tx: ComplexVec::from_vector(&ch.h_tx),
                h_rx: ComplexVec::from_vector(&ch.h_rx),
                si: ComplexVec::from_matrix(&ch.si),
                budget: ch.budget,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        kappa_db,
        eval_seed: config.eval_seed,
        n_tx: config.n_tx,
        n_rx: config.n_rx,
        records,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let writer = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(writer, dataset)
        .map_err(|e| Error::Config(format!("write dataset {}: {e}", path.display())))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    serde_json::from_reader(reader)
        .map_err(|e| Error::Config(format!("parse dataset {}: {e}", path.display())))
}
