//! The differentiable probing episode.
//!
//! One episode, for a batch of channel realizations: start from the
//! trainable initial beam pair, then for each of the `T` slots measure the
//! three link metrics (dB domain, plus the externally drawn noise), feed
//! them through the LSTM cell, and synthesize the next probing pair from the
//! new hidden state; after the last slot, synthesize the serving pair from
//! the final cell state and score it by its true (noiseless) sum rate.
//!
//! The backward pass is written by hand and mirrors the forward step for
//! step; the finite-difference suite in the module tests pins it down.

use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64;

use super::nn::{LstmCache, MlpCache};
use super::{LearnerConfig, LearnerParams};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::math::DB_FLOOR_LINEAR;
use crate::metrics::{BeamPair, MeasurementVector, Rates};

/// dB-domain measurement noise, indexed `[batch][slot][component]` with
/// components ordered (snr_tx, snr_rx, inr_rx). Drawn outside the
/// differentiated graph and treated as constants.
pub type NoiseDraws = Vec<Vec<[f64; 3]>>;

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

/// Per-element measurement intermediates for one beam pair.
struct MeasCache {
    inner_tx: (f64, f64),
    snr_tx: f64,
    inner_rx: (f64, f64),
    snr_rx: f64,
    inner_si: (f64, f64),
    inr: f64,
    /// `H f`, kept for the INR backward.
    hf: Vec<Complex64>,
}

struct SlotCache {
    /// Beams used in this slot, real block then imaginary block per row.
    f: Array2<f64>,
    w: Array2<f64>,
    /// Euclidean norms of the raw rows the beams were normalized from.
    f_norm: Array1<f64>,
    w_norm: Array1<f64>,
    meas: Vec<MeasCache>,
    lstm: LstmCache,
    /// Probe-head cache that produced the *next* slot's beams (t < T only).
    head: Option<MlpCache>,
}

pub(super) struct EpisodeCache {
    slots: Vec<SlotCache>,
    serve_head: MlpCache,
    serve_f: Array2<f64>,
    serve_w: Array2<f64>,
    serve_f_norm: Array1<f64>,
    serve_w_norm: Array1<f64>,
    serve_meas: Vec<MeasCache>,
}

/// One element's recorded probing protocol, for trace assembly.
pub(super) struct RecordedEpisode {
    pub slots: Vec<(BeamPair, MeasurementVector)>,
    pub serving: BeamPair,
}

pub(super) struct EpisodeOutput {
    pub rates: Vec<Rates>,
    pub recorded: Option<Vec<RecordedEpisode>>,
    pub cache: Option<EpisodeCache>,
}

impl EpisodeOutput {
    pub fn mean_r_sum(&self) -> f64 {
        self.rates.iter().map(|r| r.r_sum).sum::<f64>() / self.rates.len() as f64
    }
}

/// Normalize each row of a raw block to squared norm `n`; returns the
/// normalized rows and the raw row norms.
fn normalize_rows(raw: &Array2<f64>, n: usize) -> Result<(Array2<f64>, Array1<f64>)> {
    let scale_target = (n as f64).sqrt();
    let mut out = raw.clone();
    let mut norms = Array1::zeros(raw.nrows());
    for (b, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::DegenerateBeam(format!(
                "raw beam vector in batch row {b} has norm {norm}"
            )));
        }
        norms[b] = norm;
        let s = scale_target / norm;
        row.mapv_inplace(|v| v * s);
    }
    Ok((out, norms))
}

/// Backward of [`normalize_rows`] expressed through the *normalized* rows:
/// `d_raw = (sqrt(n)/norm) (dy - y (y . dy) / n)`.
fn normalize_rows_backward(
    y: &Array2<f64>,
    norms: &Array1<f64>,
    n: usize,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let n_f = n as f64;
    let sqrt_n = n_f.sqrt();
    let mut out = Array2::zeros(dy.dim());
    for b in 0..y.nrows() {
        let yr = y.row(b);
        let dyr = dy.row(b);
        let dot: f64 = yr.iter().zip(dyr.iter()).map(|(a, g)| a * g).sum();
        let pre = sqrt_n / norms[b];
        for j in 0..y.ncols() {
            out[[b, j]] = pre * (dyr[j] - yr[j] * dot / n_f);
        }
    }
    out
}

/// Complex inner products and linear metrics for one element's beam pair.
fn measure_element(
    ch: &ChannelRealization,
    f_row: &[f64],
    w_row: &[f64],
) -> MeasCache {
    let n_tx = ch.n_tx();
    let n_rx = ch.n_rx();
    let (fr, fi) = f_row.split_at(n_tx);
    let (wr, wi) = w_row.split_at(n_rx);

    // <h_tx, f> = sum conj(h) f.
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n_tx {
        let h = ch.h_tx[i];
        re += h.re * fr[i] + h.im * fi[i];
        im += h.re * fi[i] - h.im * fr[i];
    }
    let inner_tx = (re, im);
    let snr_tx = ch.budget.gain_tx * (re * re + im * im);

    // <w, h_rx> = sum conj(w) h.
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n_rx {
        let h = ch.h_rx[i];
        re += wr[i] * h.re + wi[i] * h.im;
        im += wr[i] * h.im - wi[i] * h.re;
    }
    let inner_rx = (re, im);
    let snr_rx = ch.budget.gain_rx * (re * re + im * im);

    // H f, then <w, Hf>.
    let mut hf = vec![Complex64::new(0.0, 0.0); n_rx];
    for m in 0..n_rx {
        let (mut vr, mut vi) = (0.0, 0.0);
        for n in 0..n_tx {
            let h = ch.si[[m, n]];
            vr += h.re * fr[n] - h.im * fi[n];
            vi += h.re * fi[n] + h.im * fr[n];
        }
        hf[m] = Complex64::new(vr, vi);
    }
    let (mut re, mut im) = (0.0, 0.0);
    for m in 0..n_rx {
        re += wr[m] * hf[m].re + wi[m] * hf[m].im;
        im += wr[m] * hf[m].im - wi[m] * hf[m].re;
    }
    let inner_si = (re, im);
    let inr = ch.budget.gain_si * (re * re + im * im);

    MeasCache {
        inner_tx,
        snr_tx,
        inner_rx,
        snr_rx,
        inner_si,
        inr,
        hf,
    }
}

/// Scatter the gradients of the three linear metrics back onto the beam
/// rows. `d_snr_tx`, `d_snr_rx`, `d_inr` are gradients w.r.t. the *linear*
/// metric values.
#[allow(clippy::too_many_arguments)]
fn measure_element_backward(
    ch: &ChannelRealization,
    cache: &MeasCache,
    w_row: &[f64],
    d_snr_tx: f64,
    d_snr_rx: f64,
    d_inr: f64,
    df_row: &mut [f64],
    dw_row: &mut [f64],
) {
    let n_tx = ch.n_tx();
    let n_rx = ch.n_rx();

    if d_snr_tx != 0.0 {
        let (re, im) = cache.inner_tx;
        let g = ch.budget.gain_tx * d_snr_tx;
        for i in 0..n_tx {
            let h = ch.h_tx[i];
            df_row[i] += g * 2.0 * (re * h.re - im * h.im);
            df_row[n_tx + i] += g * 2.0 * (re * h.im + im * h.re);
        }
    }

    if d_snr_rx != 0.0 {
        let (re, im) = cache.inner_rx;
        let g = ch.budget.gain_rx * d_snr_rx;
        for i in 0..n_rx {
            let h = ch.h_rx[i];
            dw_row[i] += g * 2.0 * (re * h.re + im * h.im);
            dw_row[n_rx + i] += g * 2.0 * (re * h.im - im * h.re);
        }
    }

    if d_inr != 0.0 {
        let (re, im) = cache.inner_si;
        let g = ch.budget.gain_si * d_inr;
        let (wr, wi) = w_row.split_at(n_rx);
        // d/dw with Hf held fixed.
        for m in 0..n_rx {
            let v = cache.hf[m];
            dw_row[m] += g * 2.0 * (re * v.re + im * v.im);
            dw_row[n_rx + m] += g * 2.0 * (re * v.im - im * v.re);
        }
        // d/d(Hf), then back through the matvec onto f.
        for m in 0..n_rx {
            let dvr = g * 2.0 * (re * wr[m] - im * wi[m]);
            let dvi = g * 2.0 * (re * wi[m] + im * wr[m]);
            for n in 0..n_tx {
                let h = ch.si[[m, n]];
                df_row[n] += dvr * h.re + dvi * h.im;
                df_row[n_tx + n] += -dvr * h.im + dvi * h.re;
            }
        }
    }
}

fn broadcast_initial(raw: &Array1<f64>, batch: usize) -> Array2<f64> {
    let mut out = Array2::zeros((batch, raw.len()));
    for mut row in out.axis_iter_mut(Axis(0)) {
        row.assign(raw);
    }
    out
}

/// Run the full probing episode forward.
pub(super) fn forward_episode(
    params: &LearnerParams,
    config: &LearnerConfig,
    channels: &[&ChannelRealization],
    noise: &NoiseDraws,
    want_cache: bool,
    want_record: bool,
) -> Result<EpisodeOutput> {
    let batch = channels.len();
    if batch == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let horizon = config.horizon;
    if noise.len() != batch || noise.iter().any(|n| n.len() != horizon) {
        return Err(Error::InvalidParameter(format!(
            "noise draws must be exactly {horizon} triples per batch element"
        )));
    }
    let n_tx = config.n_tx;
    let n_rx = config.n_rx;
    for ch in channels {
        if ch.n_tx() != n_tx || ch.n_rx() != n_rx {
            return Err(Error::DimensionMismatch {
                context: "channel realization antennas".into(),
                expected: n_tx,
                found: ch.n_tx(),
            });
        }
    }
    let hidden = params.lstm.hidden_dim();
    let scale = config.measurement_scale;

    // Slot-1 beams from the trainable initial raw vector.
    let init_f_raw = broadcast_initial(
        &params.initial_probe_raw.slice(s![0..2 * n_tx]).to_owned(),
        batch,
    );
    let init_w_raw = broadcast_initial(
        &params.initial_probe_raw.slice(s![2 * n_tx..]).to_owned(),
        batch,
    );
    let (mut cur_f, mut cur_f_norm) = normalize_rows(&init_f_raw, n_tx)?;
    let (mut cur_w, mut cur_w_norm) = normalize_rows(&init_w_raw, n_rx)?;

    let mut s_state: Array2<f64> = Array2::zeros((batch, hidden));
    let mut c_state: Array2<f64> = Array2::zeros((batch, hidden));

    let mut slots: Vec<SlotCache> = Vec::with_capacity(if want_cache { horizon } else { 0 });
    let mut recorded: Vec<RecordedEpisode> = if want_record {
        (0..batch)
            .map(|_| RecordedEpisode {
                slots: Vec::with_capacity(horizon),
                serving: BeamPair {
                    f: Array1::zeros(0),
                    w: Array1::zeros(0),
                },
            })
            .collect()
    } else {
        Vec::new()
    };

    for t in 0..horizon {
        // Measure with the current pair.
        let meas: Vec<MeasCache> = (0..batch)
            .map(|b| {
                measure_element(
                    channels[b],
                    cur_f.row(b).to_slice().expect("row-major"),
                    cur_w.row(b).to_slice().expect("row-major"),
                )
            })
            .collect();

        let mut x = Array2::zeros((batch, 3));
        for b in 0..batch {
            let m = &meas[b];
            let db = [
                10.0 * m.snr_tx.max(DB_FLOOR_LINEAR).log10() + noise[b][t][0],
                10.0 * m.snr_rx.max(DB_FLOOR_LINEAR).log10() + noise[b][t][1],
                10.0 * m.inr.max(DB_FLOOR_LINEAR).log10() + noise[b][t][2],
            ];
            for k in 0..3 {
                x[[b, k]] = db[k] / scale;
            }
            if want_record {
                recorded[b].slots.push((
                    BeamPair {
                        f: row_to_complex(&cur_f, b, n_tx),
                        w: row_to_complex(&cur_w, b, n_rx),
                    },
                    MeasurementVector {
                        snr_tx_db: db[0],
                        snr_rx_db: db[1],
                        inr_rx_db: db[2],
                        noisy: noise[b][t].iter().any(|&v| v != 0.0),
                        slot_index: t + 1,
                    },
                ));
            }
        }

        let (s_next, c_next, lstm_cache) = params.lstm.forward_cached(&x, &s_state, &c_state);

        let mut head_cache = None;
        let (next_f, next_f_norm, next_w, next_w_norm) = if t + 1 < horizon {
            let (raw, cache) = params.probe_head.forward_cached(&s_next);
            head_cache = Some(cache);
            let raw_f = raw.slice(s![.., 0..2 * n_tx]).to_owned();
            let raw_w = raw.slice(s![.., 2 * n_tx..]).to_owned();
            let (f, f_norm) = normalize_rows(&raw_f, n_tx)?;
            let (w, w_norm) = normalize_rows(&raw_w, n_rx)?;
            (f, f_norm, w, w_norm)
        } else {
            // Placeholders; unused past the last slot.
            (
                Array2::zeros((0, 0)),
                Array1::zeros(0),
                Array2::zeros((0, 0)),
                Array1::zeros(0),
            )
        };

        if want_cache {
            slots.push(SlotCache {
                f: cur_f.clone(),
                w: cur_w.clone(),
                f_norm: cur_f_norm.clone(),
                w_norm: cur_w_norm.clone(),
                meas,
                lstm: lstm_cache,
                head: head_cache,
            });
        }

        s_state = s_next;
        c_state = c_next;
        if t + 1 < horizon {
            cur_f = next_f;
            cur_f_norm = next_f_norm;
            cur_w = next_w;
            cur_w_norm = next_w_norm;
        }
    }

    // Serving beams from the final cell state.
    let (serve_raw, serve_head_cache) = params.serve_head.forward_cached(&c_state);
    let serve_raw_f = serve_raw.slice(s![.., 0..2 * n_tx]).to_owned();
    let serve_raw_w = serve_raw.slice(s![.., 2 * n_tx..]).to_owned();
    let (serve_f, serve_f_norm) = normalize_rows(&serve_raw_f, n_tx)?;
    let (serve_w, serve_w_norm) = normalize_rows(&serve_raw_w, n_rx)?;

    let serve_meas: Vec<MeasCache> = (0..batch)
        .map(|b| {
            measure_element(
                channels[b],
                serve_f.row(b).to_slice().expect("row-major"),
                serve_w.row(b).to_slice().expect("row-major"),
            )
        })
        .collect();

    let rates: Vec<Rates> = (0..batch)
        .map(|b| {
            let m = &serve_meas[b];
            let r_tx = (1.0 + m.snr_tx / (1.0 + channels[b].inr_cross_linear())).log2();
            let r_rx = (1.0 + m.snr_rx / (1.0 + m.inr)).log2();
            Rates {
                r_tx,
                r_rx,
                r_sum: r_tx + r_rx,
            }
        })
        .collect();

    if want_record {
        for (b, rec) in recorded.iter_mut().enumerate() {
            rec.serving = BeamPair {
                f: row_to_complex(&serve_f, b, n_tx),
                w: row_to_complex(&serve_w, b, n_rx),
            };
        }
    }

    Ok(EpisodeOutput {
        rates,
        recorded: want_record.then_some(recorded),
        cache: want_cache.then_some(EpisodeCache {
            slots,
            serve_head: serve_head_cache,
            serve_f,
            serve_w,
            serve_f_norm,
            serve_w_norm,
            serve_meas,
        }),
    })
}

fn row_to_complex(rows: &Array2<f64>, b: usize, n: usize) -> Array1<Complex64> {
    Array1::from_iter((0..n).map(|i| Complex64::new(rows[[b, i]], rows[[b, n + i]])))
}

/// Backpropagate `loss = -mean(r_sum)` through a cached episode,
/// accumulating into `grads` (a zeroed parameter mirror).
pub(super) fn backward_episode(
    params: &LearnerParams,
    config: &LearnerConfig,
    channels: &[&ChannelRealization],
    cache: &EpisodeCache,
    grads: &mut LearnerParams,
) {
    let batch = channels.len();
    let n_tx = config.n_tx;
    let n_rx = config.n_rx;
    let scale = config.measurement_scale;
    let d_r_sum = -1.0 / batch as f64;
    let ln2 = std::f64::consts::LN_2;

    // Serving stage: rates -> linear metrics -> beams.
    let mut d_serve_f = Array2::zeros((batch, 2 * n_tx));
    let mut d_serve_w = Array2::zeros((batch, 2 * n_rx));
    for b in 0..batch {
        let m = &cache.serve_meas[b];
        let q = channels[b].inr_cross_linear();
        let sinr_tx = m.snr_tx / (1.0 + q);
        let sinr_rx = m.snr_rx / (1.0 + m.inr);
        let d_snr_tx = d_r_sum / (ln2 * (1.0 + sinr_tx) * (1.0 + q));
        let d_snr_rx = d_r_sum / (ln2 * (1.0 + sinr_rx) * (1.0 + m.inr));
        let d_inr = -d_r_sum * m.snr_rx / (ln2 * (1.0 + sinr_rx) * (1.0 + m.inr).powi(2));
        measure_element_backward(
            channels[b],
            m,
            cache.serve_w.row(b).to_slice().expect("row-major"),
            d_snr_tx,
            d_snr_rx,
            d_inr,
            d_serve_f.row_mut(b).into_slice().expect("row-major"),
            d_serve_w.row_mut(b).into_slice().expect("row-major"),
        );
    }
    let d_serve_raw_f =
        normalize_rows_backward(&cache.serve_f, &cache.serve_f_norm, n_tx, &d_serve_f);
    let d_serve_raw_w =
        normalize_rows_backward(&cache.serve_w, &cache.serve_w_norm, n_rx, &d_serve_w);
    let d_serve_raw = concat_cols(&d_serve_raw_f, &d_serve_raw_w);
    let mut dc = params
        .serve_head
        .backward(&cache.serve_head, &d_serve_raw, &mut grads.serve_head);
    let mut ds = Array2::zeros(dc.dim());

    // BPTT over the probing slots.
    for t in (0..config.horizon).rev() {
        let slot = &cache.slots[t];
        let (dx, ds_prev, dc_prev) =
            params
                .lstm
                .backward(&slot.lstm, &ds, &dc, &mut grads.lstm);

        // Measurement backward: dx -> linear metrics -> this slot's beams.
        let mut d_f = Array2::zeros((batch, 2 * n_tx));
        let mut d_w = Array2::zeros((batch, 2 * n_rx));
        for b in 0..batch {
            let m = &slot.meas[b];
            // d(dB)/d(lin) = 10 / (ln 10 * lin), zero below the floor clamp.
            let dlin = |lin: f64, dxv: f64| {
                if lin > DB_FLOOR_LINEAR {
                    dxv / (scale * LN10_OVER_10 * lin)
                } else {
                    0.0
                }
            };
            measure_element_backward(
                channels[b],
                m,
                slot.w.row(b).to_slice().expect("row-major"),
                dlin(m.snr_tx, dx[[b, 0]]),
                dlin(m.snr_rx, dx[[b, 1]]),
                dlin(m.inr, dx[[b, 2]]),
                d_f.row_mut(b).into_slice().expect("row-major"),
                d_w.row_mut(b).into_slice().expect("row-major"),
            );
        }

        let d_raw_f = normalize_rows_backward(&slot.f, &slot.f_norm, n_tx, &d_f);
        let d_raw_w = normalize_rows_backward(&slot.w, &slot.w_norm, n_rx, &d_w);
        let d_raw = concat_cols(&d_raw_f, &d_raw_w);

        if t == 0 {
            // Slot-1 beams come from the shared trainable raw vector.
            grads.initial_probe_raw += &d_raw.sum_axis(Axis(0));
            ds = ds_prev;
            dc = dc_prev;
        } else {
            // Probe head at slot t-1 consumed s_t and produced these beams.
            let head_cache = cache.slots[t - 1]
                .head
                .as_ref()
                .expect("probe head cache exists for every non-final slot");
            let ds_head = params
                .probe_head
                .backward(head_cache, &d_raw, &mut grads.probe_head);
            ds = ds_prev + ds_head;
            dc = dc_prev;
        }
    }
}

fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., 0..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}
