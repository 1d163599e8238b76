//! Exact link metrics (SNR, INR, SINR, spectral efficiency) and the
//! dB-domain Gaussian measurement model.
//!
//! Rates are always computed noiselessly from the true channels; noise only
//! enters the measurements handed to a probing policy.

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::math::{self, cdot, matvec, norm_sq, to_db};

/// A transmit/receive analog beam pair satisfying the per-array power
/// constraints `||f||^2 = n_tx`, `||w||^2 = n_rx`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPair {
    pub f: Array1<Complex64>,
    pub w: Array1<Complex64>,
}

impl BeamPair {
    /// Validates the power constraints to 1e-6 relative.
    pub fn new(f: Array1<Complex64>, w: Array1<Complex64>) -> Result<Self> {
        for (name, v) in [("f", &f), ("w", &w)] {
            let n = v.len() as f64;
            let p = norm_sq(v);
            if !(p.is_finite() && (p - n).abs() <= 1e-6 * n) {
                return Err(Error::DegenerateBeam(format!(
                    "||{name}||^2 = {p}, expected {n} (1e-6 relative)"
                )));
            }
        }
        Ok(Self { f, w })
    }
}

/// One slot's (possibly noise-corrupted) dB-domain measurement triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub snr_tx_db: f64,
    pub snr_rx_db: f64,
    pub inr_rx_db: f64,
    pub noisy: bool,
    /// 1-based probing slot index.
    pub slot_index: usize,
}

impl MeasurementVector {
    pub fn is_finite(&self) -> bool {
        self.snr_tx_db.is_finite() && self.snr_rx_db.is_finite() && self.inr_rx_db.is_finite()
    }
}

/// Zero-mean Gaussian noise of variance `sigma2`, applied in the dB domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be finite and nonnegative, got {sigma2}"
            )));
        }
        Ok(Self { sigma2 })
    }

    pub fn noiseless() -> Self {
        Self { sigma2: 0.0 }
    }
}

fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Downlink SNR `gain_tx |h_tx^* f|^2` (linear).
pub fn snr_tx(ch: &ChannelRealization, f: &Array1<Complex64>) -> Result<f64> {
    check_dim("snr_tx beam", ch.n_tx(), f.len())?;
    Ok(ch.budget.gain_tx * cdot(&ch.h_tx, f).norm_sqr())
}

/// Uplink SNR `gain_rx |w^* h_rx|^2` (linear).
pub fn snr_rx(ch: &ChannelRealization, w: &Array1<Complex64>) -> Result<f64> {
    check_dim("snr_rx beam", ch.n_rx(), w.len())?;
    Ok(ch.budget.gain_rx * cdot(&w, &ch.h_rx).norm_sqr())
}

/// Self-interference INR `gain_si |w^* H f|^2` (linear).
pub fn inr_rx(ch: &ChannelRealization, f: &Array1<Complex64>, w: &Array1<Complex64>) -> Result<f64> {
    check_dim("inr_rx transmit beam", ch.n_tx(), f.len())?;
    check_dim("inr_rx receive beam", ch.n_rx(), w.len())?;
    Ok(ch.budget.gain_si * cdot(w, &matvec(&ch.si, f)).norm_sqr())
}

/// `snr / (1 + inr)`: the scalar SINR combinator shared by both links.
pub fn sinr(snr_linear: f64, inr_linear: f64) -> f64 {
    snr_linear / (1.0 + inr_linear)
}

/// Downlink SINR; the cross-link interference term is carried by the
/// realization (zero under the default assumption).
pub fn sinr_tx(ch: &ChannelRealization, f: &Array1<Complex64>) -> Result<f64> {
    Ok(sinr(snr_tx(ch, f)?, ch.inr_cross_linear()))
}

/// Uplink SINR including self-interference.
pub fn sinr_rx(
    ch: &ChannelRealization,
    f: &Array1<Complex64>,
    w: &Array1<Complex64>,
) -> Result<f64> {
    Ok(sinr(snr_rx(ch, w)?, inr_rx(ch, f, w)?))
}

/// Achievable downlink/uplink/sum spectral efficiencies in bps/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r_tx: f64,
    pub r_rx: f64,
    pub r_sum: f64,
}

/// `log2(1 + SINR)` per link; the sum rate is exactly `r_tx + r_rx`.
pub fn rates(
    ch: &ChannelRealization,
    f: &Array1<Complex64>,
    w: &Array1<Complex64>,
) -> Result<Rates> {
    let r_tx = (1.0 + sinr_tx(ch, f)?).log2();
    let r_rx = (1.0 + sinr_rx(ch, f, w)?).log2();
    Ok(Rates {
        r_tx,
        r_rx,
        r_sum: r_tx + r_rx,
    })
}

/// Measure the three link metrics with the given probing pair: convert each
/// to dB (with the -200 dB floor) and add independent `N(0, sigma2)` noise in
/// the dB domain.
pub fn measure<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    pair: &BeamPair,
    noise: &NoiseModel,
    rng: &mut R,
    slot_index: usize,
) -> Result<MeasurementVector> {
    let clean = [
        to_db(snr_tx(ch, &pair.f)?),
        to_db(snr_rx(ch, &pair.w)?),
        to_db(inr_rx(ch, &pair.f, &pair.w)?),
    ];
    let sigma = noise.sigma2.sqrt();
    let mut noisy = clean;
    for v in noisy.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
    Ok(MeasurementVector {
        snr_tx_db: noisy[0],
        snr_rx_db: noisy[1],
        inr_rx_db: noisy[2],
        noisy: noise.sigma2 > 0.0,
        slot_index,
    })
}

/// Full-duplex sum capacity: the rates achieved by ideal per-link beams in
/// the absence of self-interference. On normalized realizations this is
/// `2 log2(1 + 10^(snr_max_db / 10))`.
pub fn max_sum_rate(ch: &ChannelRealization) -> f64 {
    let peak = math::from_db(ch.budget.snr_max_db);
    (1.0 + sinr(peak, ch.inr_cross_linear())).log2() + (1.0 + peak).log2()
}
