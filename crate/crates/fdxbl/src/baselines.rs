//! Reference beam designs: MRT+MRC, the full-duplex capacity bound, and a
//! non-active random-probing control.

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::learner::ProbeTrace;
use crate::math::{from_db, norm_sq, sinr_from_db_parts};
use crate::metrics::{self, BeamPair, NoiseModel};

/// Maximum ratio transmission/combining: beams matched to the user channels,
/// maximizing each link's SNR while ignoring self-interference.
pub fn mrt_mrc(ch: &ChannelRealization) -> Result<BeamPair> {
    let f = matched_beam(&ch.h_tx)?;
    let w = matched_beam(&ch.h_rx)?;
    BeamPair::new(f, w)
}

fn matched_beam(h: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    let p = norm_sq(h);
    if p == 0.0 || !p.is_finite() {
        return Err(Error::DegenerateChannel(
            "cannot match a beam to a zero channel".into(),
        ));
    }
    let scale = (h.len() as f64 / p).sqrt();
    Ok(h.mapv(|z| z * scale))
}

/// Sum spectral efficiency of MRT+MRC with the self-interference term
/// removed: the upper bound every beam pair sits under. On normalized
/// realizations this equals `2 log2(1 + 10^(snr_max_db/10))`.
pub fn fd_capacity(ch: &ChannelRealization) -> Result<f64> {
    let pair = mrt_mrc(ch)?;
    let snr_tx = metrics::snr_tx(ch, &pair.f)?;
    let snr_rx = metrics::snr_rx(ch, &pair.w)?;
    let r_tx = (1.0 + metrics::sinr(snr_tx, ch.inr_cross_linear())).log2();
    let r_rx = (1.0 + metrics::sinr(snr_rx, 0.0)).log2();
    Ok(r_tx + r_rx)
}

/// Non-active control: probe with `horizon` random feasible beam pairs, then
/// serve with the probed pair whose *noisy measurements* score best under
/// the proxy `log2(1 + snr_tx) + log2(1 + snr_rx / (1 + inr_rx))`.
///
/// The selection uses only the information a real probing policy would have;
/// the achieved rates in the returned trace are the true noiseless ones.
pub fn random_probe_policy<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    horizon: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ProbeTrace> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let mut slots = Vec::with_capacity(horizon);
    let mut best: Option<(f64, BeamPair)> = None;
    for t in 1..=horizon {
        let pair = BeamPair::new(
            random_gaussian_beam(ch.n_tx(), rng),
            random_gaussian_beam(ch.n_rx(), rng),
        )?;
        let m = metrics::measure(ch, &pair, noise, rng, t)?;
        let score = measurement_proxy(&m);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, pair.clone()));
        }
        slots.push((pair, m));
    }
    let (_, serving) = best.expect("horizon >= 1 guarantees a winner");
    let achieved = metrics::rates(ch, &serving.f, &serving.w)?;
    Ok(ProbeTrace {
        slots,
        serving,
        achieved,
    })
}

/// Proxy sum rate computed from one slot's dB-domain measurements.
pub fn measurement_proxy(m: &crate::metrics::MeasurementVector) -> f64 {
    (1.0 + from_db(m.snr_tx_db)).log2()
        + (1.0 + sinr_from_db_parts(m.snr_rx_db, m.inr_rx_db)).log2()
}

/// Isotropic random feasible beam: i.i.d. complex Gaussian entries scaled to
/// the power constraint.
pub fn random_gaussian_beam<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<Complex64> {
    let v = Array1::from_shape_fn(n, |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let scale = (n as f64 / norm_sq(&v)).sqrt();
    v.mapv(|z| z * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{steering_vector, ArrayGeometry, ArraySide, InrNormalization, Scenario};
    use crate::math::to_db;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(kappa_db: f64) -> Scenario {
        Scenario::new(
            ArrayGeometry::from_carrier(8, 8, 28e9).unwrap(),
            kappa_db,
            10.0,
            40.0,
            InrNormalization::FrobeniusCeiling,
        )
        .unwrap()
    }

    #[test]
    fn mrt_of_steering_channel_is_the_steering_vector() {
        let s = scenario(7.0);
        let mut ch = s.sample(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // Overwrite the downlink channel with a bare steering vector (already
        // norm sqrt(n_tx)): MRT must return it unchanged.
        let a = steering_vector(&s.geometry, 25.0, ArraySide::Tx);
        ch.h_tx = a.clone();
        let pair = mrt_mrc(&ch).unwrap();
        for i in 0..8 {
            assert!((pair.f[i] - a[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn mrt_achieves_peak_snr_on_normalized_realizations() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let ch = s.sample(&mut rng).unwrap();
            let pair = mrt_mrc(&ch).unwrap();
            assert!((to_db(metrics::snr_tx(&ch, &pair.f).unwrap()) - 10.0).abs() < 1e-9);
            assert!((to_db(metrics::snr_rx(&ch, &pair.w).unwrap()) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_random_beam_beats_mrt() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = s.sample(&mut rng).unwrap();
        let pair = mrt_mrc(&ch).unwrap();
        let mrt_snr_db = to_db(metrics::snr_tx(&ch, &pair.f).unwrap());
        for _ in 0..10_000 {
            let f = random_gaussian_beam(8, &mut rng);
            let snr_db = to_db(metrics::snr_tx(&ch, &f).unwrap());
            assert!(snr_db <= mrt_snr_db + 1e-9);
        }
    }

    #[test]
    fn mrt_rejects_zero_channel() {
        let s = scenario(7.0);
        let mut ch = s.sample(&mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        ch.h_tx = Array1::from_elem(8, Complex64::new(0.0, 0.0));
        assert!(matches!(mrt_mrc(&ch), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn capacity_matches_closed_form() {
        let s = scenario(7.0);
        let ch = s.sample(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let cap = fd_capacity(&ch).unwrap();
        // Route 2: closed form from the pinned budget.
        assert!((cap - 2.0 * (11.0f64).log2()).abs() < 1e-9);
        assert!((cap - 6.91886).abs() < 1e-3);
        assert_eq!(cap, metrics::max_sum_rate(&ch));
    }

    #[test]
    fn capacity_vanishes_with_the_snr_budget() {
        let s = Scenario::new(
            ArrayGeometry::from_carrier(8, 8, 28e9).unwrap(),
            7.0,
            -1000.0,
            40.0,
            InrNormalization::FrobeniusCeiling,
        )
        .unwrap();
        let ch = s.sample(&mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!(fd_capacity(&ch).unwrap() < 1e-90);
    }

    #[test]
    fn capacity_is_independent_of_kappa() {
        let a = scenario(-13.0)
            .sample(&mut ChaCha8Rng::seed_from_u64(7))
            .unwrap();
        let b = scenario(17.0)
            .sample(&mut ChaCha8Rng::seed_from_u64(8))
            .unwrap();
        assert_eq!(fd_capacity(&a).unwrap(), fd_capacity(&b).unwrap());
    }

    #[test]
    fn capacity_bounds_every_beam_pair() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = s.sample(&mut rng).unwrap();
        let cap = fd_capacity(&ch).unwrap();
        for _ in 0..1000 {
            let f = random_gaussian_beam(8, &mut rng);
            let w = random_gaussian_beam(8, &mut rng);
            assert!(metrics::rates(&ch, &f, &w).unwrap().r_sum <= cap + 1e-12);
        }
    }

    #[test]
    fn single_slot_random_policy_serves_its_only_probe() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = s.sample(&mut rng).unwrap();
        let trace = random_probe_policy(&ch, 1, &NoiseModel::new(0.4).unwrap(), &mut rng).unwrap();
        assert_eq!(trace.slots.len(), 1);
        assert_eq!(trace.serving, trace.slots[0].0);
    }

    #[test]
    fn proxy_winner_survives_uniform_db_offsets() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = s.sample(&mut rng).unwrap();
        let trace =
            random_probe_policy(&ch, 10, &NoiseModel::noiseless(), &mut rng).unwrap();
        let argmax = |offset: f64| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (i, (_, m)) in trace.slots.iter().enumerate() {
                let shifted = crate::metrics::MeasurementVector {
                    snr_tx_db: m.snr_tx_db + offset,
                    snr_rx_db: m.snr_rx_db + offset,
                    inr_rx_db: m.inr_rx_db + offset,
                    ..*m
                };
                let score = measurement_proxy(&shifted);
                if score > best.0 {
                    best = (score, i);
                }
            }
            best.1
        };
        let baseline = argmax(0.0);
        for offset in [-3.0, -1.0, 1.0, 3.0] {
            assert_eq!(argmax(offset), baseline, "offset {offset} dB flipped the winner");
        }
    }

    #[test]
    fn random_policy_emits_feasible_beams() {
        let s = scenario(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = s.sample(&mut rng).unwrap();
        let trace = random_probe_policy(&ch, 5, &NoiseModel::new(0.4).unwrap(), &mut rng).unwrap();
        for (pair, m) in &trace.slots {
            assert!((norm_sq(&pair.f) - 8.0).abs() < 1e-6 * 8.0);
            assert!((norm_sq(&pair.w) - 8.0).abs() < 1e-6 * 8.0);
            assert!(m.noisy);
        }
        assert!((norm_sq(&trace.serving.f) - 8.0).abs() < 1e-6 * 8.0);
    }
}
