//! The active beam-learning policy: a single LSTM cell that digests one
//! measurement triple per probing slot, a probing head that synthesizes the
//! next slot's beam pair from the new hidden state, and a serving head that
//! synthesizes the final beams from the last cell state. Trained end-to-end
//! by backpropagation through the unrolled probing episode with loss equal
//! to the negated mean sum spectral efficiency.

mod graph;
pub mod nn;

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::metrics::{BeamPair, MeasurementVector, NoiseModel, Rates};
use nn::{Adam, LstmCell, Mlp};

pub use graph::NoiseDraws;

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Number of probing slots T.
    pub horizon: usize,
    pub hidden_dim: usize,
    pub dnn_hidden_widths: Vec<usize>,
    pub activation: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_iterations: usize,
    /// dB divisor applied to measurements before they enter the LSTM.
    pub measurement_scale: f64,
    pub seed: u64,
    /// Global-norm gradient clip; 0 disables clipping.
    pub grad_clip_norm: f64,
    /// Validation cadence in training iterations.
    pub eval_every: usize,
    /// Held-out validation set size.
    pub n_val: usize,
    /// Initial forget-gate bias.
    pub forget_bias: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            horizon: 10,
            hidden_dim: 512,
            dnn_hidden_widths: vec![1024, 1024, 1024],
            activation: "relu".into(),
            learning_rate: 1e-4,
            batch_size: 128,
            train_iterations: 30_000,
            measurement_scale: 10.0,
            seed: 0,
            grad_clip_norm: 100.0,
            eval_every: 500,
            n_val: 256,
            forget_bias: 1.0,
        }
    }
}

impl LearnerConfig {
    pub fn new(n_tx: usize, n_rx: usize, horizon: usize) -> Self {
        Self {
            n_tx,
            n_rx,
            horizon,
            ..Self::default()
        }
    }

    /// Raw output width of both synthesis heads: real and imaginary blocks
    /// for each array.
    pub fn head_output_dim(&self) -> usize {
        2 * (self.n_tx + self.n_rx)
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("horizon", self.horizon),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("n_val", self.n_val),
        ];
        for (name, v) in positives {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.dnn_hidden_widths.is_empty() || self.dnn_hidden_widths.contains(&0) {
            return Err(Error::Config(
                "dnn_hidden_widths must be nonempty and positive".into(),
            ));
        }
        if self.activation != "relu" {
            return Err(Error::Config(format!(
                "unsupported activation `{}` (only `relu`)",
                self.activation
            )));
        }
        if !(self.measurement_scale.is_finite() && self.measurement_scale > 0.0) {
            return Err(Error::Config("measurement_scale must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if !(self.grad_clip_norm.is_finite() && self.grad_clip_norm >= 0.0) {
            return Err(Error::Config("grad_clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

/// All trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub lstm: LstmCell,
    pub probe_head: Mlp,
    pub serve_head: Mlp,
    /// Raw real vector producing the slot-1 probing pair.
    pub initial_probe_raw: Array1<f64>,
}

/// The LSTM consumes the three scaled measurements.
const MEASUREMENT_DIM: usize = 3;

impl LearnerParams {
    /// Glorot-initialized parameters; the initial probing pair starts at the
    /// broadside steering pair (all-ones real parts).
    pub fn init(config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let head_dims: Vec<usize> = std::iter::once(config.hidden_dim)
            .chain(config.dnn_hidden_widths.iter().copied())
            .chain(std::iter::once(config.head_output_dim()))
            .collect();
        let lstm = LstmCell::glorot(
            MEASUREMENT_DIM,
            config.hidden_dim,
            config.forget_bias,
            &mut rng,
        );
        let probe_head = Mlp::glorot(&head_dims, &mut rng);
        let serve_head = Mlp::glorot(&head_dims, &mut rng);
        let mut initial_probe_raw = Array1::zeros(config.head_output_dim());
        initial_probe_raw
            .slice_mut(ndarray::s![0..config.n_tx])
            .fill(1.0);
        initial_probe_raw
            .slice_mut(ndarray::s![2 * config.n_tx..2 * config.n_tx + config.n_rx])
            .fill(1.0);
        Ok(Self {
            lstm,
            probe_head,
            serve_head,
            initial_probe_raw,
        })
    }

    /// Zero-valued parameters with the shapes the config implies.
    pub fn zeros(config: &LearnerConfig) -> Result<Self> {
        let mut p = Self::init(config)?;
        for t in p.flat_mut() {
            t.1.fill(0.0);
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            lstm: self.lstm.zeros_like(),
            probe_head: self.probe_head.zeros_like(),
            serve_head: self.serve_head.zeros_like(),
            initial_probe_raw: Array1::zeros(self.initial_probe_raw.len()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|(_, s, _)| s.len()).sum()
    }

    /// Named flat views over every tensor, in a fixed order shared by the
    /// optimizer and the checkpoint format.
    pub fn flat(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out: Vec<(String, &[f64], Vec<usize>)> = Vec::new();
        out.push((
            "lstm.w_x".into(),
            self.lstm.w_x.as_slice().expect("standard layout"),
            self.lstm.w_x.shape().to_vec(),
        ));
        out.push((
            "lstm.w_h".into(),
            self.lstm.w_h.as_slice().expect("standard layout"),
            self.lstm.w_h.shape().to_vec(),
        ));
        out.push((
            "lstm.b".into(),
            self.lstm.b.as_slice().expect("standard layout"),
            vec![self.lstm.b.len()],
        ));
        for (prefix, head) in [("probe", &self.probe_head), ("serve", &self.serve_head)] {
            for (i, layer) in head.layers.iter().enumerate() {
                out.push((
                    format!("{prefix}.{i}.w"),
                    layer.w.as_slice().expect("standard layout"),
                    layer.w.shape().to_vec(),
                ));
                out.push((
                    format!("{prefix}.{i}.b"),
                    layer.b.as_slice().expect("standard layout"),
                    vec![layer.b.len()],
                ));
            }
        }
        out.push((
            "initial_probe_raw".into(),
            self.initial_probe_raw.as_slice().expect("standard layout"),
            vec![self.initial_probe_raw.len()],
        ));
        out
    }

    /// Mutable counterpart of [`Self::flat`], same order.
    pub fn flat_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push((
            "lstm.w_x".into(),
            self.lstm.w_x.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            "lstm.w_h".into(),
            self.lstm.w_h.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            "lstm.b".into(),
            self.lstm.b.as_slice_mut().expect("standard layout"),
        ));
        for (prefix, head) in [
            ("probe", &mut self.probe_head),
            ("serve", &mut self.serve_head),
        ] {
            for (i, layer) in head.layers.iter_mut().enumerate() {
                out.push((
                    format!("{prefix}.{i}.w"),
                    layer.w.as_slice_mut().expect("standard layout"),
                ));
                out.push((
                    format!("{prefix}.{i}.b"),
                    layer.b.as_slice_mut().expect("standard layout"),
                ));
            }
        }
        out.push((
            "initial_probe_raw".into(),
            self.initial_probe_raw
                .as_slice_mut()
                .expect("standard layout"),
        ));
        out
    }
}

/// Recurrent state plus the probing pair currently in the air.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub s: Array1<f64>,
    pub c: Array1<f64>,
    pub current_pair: BeamPair,
    /// 1-based index of the next probing slot.
    pub t: usize,
}

/// Record of one full probing episode.
#[derive(Debug, Clone)]
pub struct ProbeTrace {
    /// `(beam pair, measurement)` per probing slot, slot indices 1..=T.
    pub slots: Vec<(BeamPair, MeasurementVector)>,
    pub serving: BeamPair,
    /// True noiseless rates achieved by the serving pair.
    pub achieved: Rates,
}

/// Map a raw real vector `[re_0.. re_{N-1}, im_0.. im_{N-1}]` onto a complex
/// beam scaled to squared norm `N`.
pub fn normalize_beam(raw: &[f64]) -> Result<Array1<Complex64>> {
    if raw.is_empty() || raw.len() % 2 != 0 {
        return Err(Error::DegenerateBeam(format!(
            "raw beam vector must have even nonzero length, got {}",
            raw.len()
        )));
    }
    let n = raw.len() / 2;
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::DegenerateBeam(format!(
            "raw beam vector has norm {norm}"
        )));
    }
    let scale = (n as f64).sqrt() / norm;
    Ok(Array1::from_iter(
        (0..n).map(|i| Complex64::new(raw[i] * scale, raw[n + i] * scale)),
    ))
}

fn split_raw_pair(raw: &[f64], n_tx: usize, n_rx: usize) -> Result<BeamPair> {
    if raw.len() != 2 * (n_tx + n_rx) {
        return Err(Error::DimensionMismatch {
            context: "raw beam pair vector".into(),
            expected: 2 * (n_tx + n_rx),
            found: raw.len(),
        });
    }
    let f = normalize_beam(&raw[0..2 * n_tx])?;
    let w = normalize_beam(&raw[2 * n_tx..])?;
    BeamPair::new(f, w)
}

/// Fresh state: zero hidden/cell vectors, slot counter at 1, and the
/// trainable initial probing pair.
pub fn init_state(params: &LearnerParams, config: &LearnerConfig) -> Result<LearnerState> {
    let pair = split_raw_pair(
        params
            .initial_probe_raw
            .as_slice()
            .expect("standard layout"),
        config.n_tx,
        config.n_rx,
    )?;
    Ok(LearnerState {
        s: Array1::zeros(config.hidden_dim),
        c: Array1::zeros(config.hidden_dim),
        current_pair: pair,
        t: 1,
    })
}

/// Advance the recurrent state with one measurement triple (scaled by
/// `1/measurement_scale` before entering the cell).
pub fn lstm_step(
    params: &LearnerParams,
    config: &LearnerConfig,
    state: &LearnerState,
    y: &MeasurementVector,
) -> Result<LearnerState> {
    if y.slot_index != state.t {
        return Err(Error::InvalidParameter(format!(
            "measurement slot {} does not match state slot {}",
            y.slot_index, state.t
        )));
    }
    if !y.is_finite() {
        return Err(Error::NonFinite(format!("measurement {y:?}")));
    }
    let x = Array2::from_shape_vec(
        (1, MEASUREMENT_DIM),
        vec![
            y.snr_tx_db / config.measurement_scale,
            y.snr_rx_db / config.measurement_scale,
            y.inr_rx_db / config.measurement_scale,
        ],
    )
    .expect("shape is static");
    let s_prev = state.s.clone().insert_axis(ndarray::Axis(0));
    let c_prev = state.c.clone().insert_axis(ndarray::Axis(0));
    let (s_next, c_next, _) = params.lstm.forward_cached(&x, &s_prev, &c_prev);
    Ok(LearnerState {
        s: s_next.row(0).to_owned(),
        c: c_next.row(0).to_owned(),
        current_pair: state.current_pair.clone(),
        t: state.t + 1,
    })
}

/// Synthesize the next probing pair from an updated hidden state.
pub fn synthesize_probe(
    params: &LearnerParams,
    config: &LearnerConfig,
    s_next: &Array1<f64>,
) -> Result<BeamPair> {
    head_pair(&params.probe_head, config, s_next)
}

/// Synthesize the serving pair from the final cell state.
pub fn synthesize_serving(
    params: &LearnerParams,
    config: &LearnerConfig,
    c_final: &Array1<f64>,
) -> Result<BeamPair> {
    head_pair(&params.serve_head, config, c_final)
}

fn head_pair(head: &Mlp, config: &LearnerConfig, state: &Array1<f64>) -> Result<BeamPair> {
    let expected = head.layers[0].w.nrows();
    if state.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "synthesis head input".into(),
            expected,
            found: state.len(),
        });
    }
    let x = state.clone().insert_axis(ndarray::Axis(0));
    let raw = head.forward(&x);
    let out = raw.row(0);
    split_raw_pair(
        out.as_slice().expect("standard layout"),
        config.n_tx,
        config.n_rx,
    )
}

/// Run one full probing episode with noise drawn from `rng`
/// (`horizon` i.i.d. triples, standard normal scaled by sigma).
pub fn unroll<R: Rng + ?Sized>(
    params: &LearnerParams,
    config: &LearnerConfig,
    ch: &ChannelRealization,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ProbeTrace> {
    let sigma = noise.sigma2.sqrt();
    let draws: Vec<[f64; 3]> = (0..config.horizon)
        .map(|_| {
            let mut triple = [0.0; 3];
            for v in triple.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = sigma * z;
            }
            triple
        })
        .collect();
    unroll_with_noise(params, config, ch, &draws)
}

/// Deterministic unroll against explicit dB-domain noise triples; exactly
/// `horizon` triples are consumed, one per probing slot.
pub fn unroll_with_noise(
    params: &LearnerParams,
    config: &LearnerConfig,
    ch: &ChannelRealization,
    noise_db: &[[f64; 3]],
) -> Result<ProbeTrace> {
    if noise_db.len() != config.horizon {
        return Err(Error::InvalidParameter(format!(
            "expected exactly {} noise triples, got {}",
            config.horizon,
            noise_db.len()
        )));
    }
    let noise: NoiseDraws = vec![noise_db.to_vec()];
    let out = graph::forward_episode(params, config, &[ch], &noise, false, true)?;
    let mut recorded = out.recorded.expect("recording requested");
    let rec = recorded.pop().expect("batch of one");
    Ok(ProbeTrace {
        slots: rec.slots,
        serving: rec.serving,
        achieved: out.rates[0],
    })
}

/// Training loss: negated mean sum rate achieved by the serving beams over
/// the batch, with fresh measurement noise per element and slot.
pub fn loss<R: Rng + ?Sized>(
    params: &LearnerParams,
    config: &LearnerConfig,
    batch: &[ChannelRealization],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    let draws = draw_noise(config, batch.len(), noise, rng);
    let refs: Vec<&ChannelRealization> = batch.iter().collect();
    let out = graph::forward_episode(params, config, &refs, &draws, false, false)?;
    Ok(-out.mean_r_sum())
}

/// Loss plus its analytic gradient for fixed noise draws. The noise enters
/// as a constant, so the same draws make this a deterministic function of
/// the parameters (which is what the finite-difference suite exercises).
pub fn loss_and_grad(
    params: &LearnerParams,
    config: &LearnerConfig,
    batch: &[&ChannelRealization],
    noise_draws: &NoiseDraws,
) -> Result<(f64, LearnerParams)> {
    let out = graph::forward_episode(params, config, batch, noise_draws, true, false)?;
    let mut grads = params.zeros_like();
    graph::backward_episode(
        params,
        config,
        batch,
        out.cache.as_ref().expect("cache requested"),
        &mut grads,
    );
    Ok((-out.mean_r_sum(), grads))
}

/// Deterministic loss for fixed noise draws (no gradient); the
/// finite-difference oracle evaluates this.
pub fn loss_with_noise(
    params: &LearnerParams,
    config: &LearnerConfig,
    batch: &[&ChannelRealization],
    noise_draws: &NoiseDraws,
) -> Result<f64> {
    let out = graph::forward_episode(params, config, batch, noise_draws, false, false)?;
    Ok(-out.mean_r_sum())
}

pub fn draw_noise<R: Rng + ?Sized>(
    config: &LearnerConfig,
    batch: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> NoiseDraws {
    let sigma = noise.sigma2.sqrt();
    (0..batch)
        .map(|_| {
            (0..config.horizon)
                .map(|_| {
                    let mut triple = [0.0; 3];
                    for v in triple.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = sigma * z;
                    }
                    triple
                })
                .collect()
        })
        .collect()
}

/// Source of fresh channel realizations for training.
pub trait ChannelSampler {
    fn sample(&mut self) -> Result<ChannelRealization>;
}

/// Samples a fixed [`Scenario`] with a seeded RNG stream.
pub struct ScenarioSampler {
    pub scenario: Scenario,
    rng: ChaCha8Rng,
}

impl ScenarioSampler {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ChannelSampler for ScenarioSampler {
    fn sample(&mut self) -> Result<ChannelRealization> {
        self.scenario.sample(&mut self.rng)
    }
}

impl<F> ChannelSampler for F
where
    F: FnMut() -> Result<ChannelRealization>,
{
    fn sample(&mut self) -> Result<ChannelRealization> {
        self()
    }
}

/// Mean validation sum rate at a training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub iteration: usize,
    pub mean_r_sum: f64,
}

/// Final parameters plus the validation history.
pub struct TrainReport {
    pub params: LearnerParams,
    pub history: Vec<ValidationPoint>,
    /// Iteration at which a non-finite loss aborted training, if any; the
    /// returned params are then the last validated ones.
    pub diverged_at: Option<usize>,
}

/// Train with Adam on freshly sampled batches. The first `n_val` draws from
/// the sampler form the fixed held-out validation set; validation noise is
/// also held fixed so the history is comparable across iterations.
pub fn train<S: ChannelSampler + ?Sized>(
    config: &LearnerConfig,
    sampler: &mut S,
    noise: &NoiseModel,
) -> Result<TrainReport> {
    train_with_callback(config, sampler, noise, |_| {})
}

/// [`train`] with a per-validation callback (progress reporting).
pub fn train_with_callback<S: ChannelSampler + ?Sized>(
    config: &LearnerConfig,
    sampler: &mut S,
    noise: &NoiseModel,
    mut on_validation: impl FnMut(&ValidationPoint),
) -> Result<TrainReport> {
    config.validate()?;
    let mut params = LearnerParams::init(config)?;

    let val_set: Vec<ChannelRealization> = (0..config.n_val)
        .map(|_| sampler.sample())
        .collect::<Result<_>>()?;
    let val_refs: Vec<&ChannelRealization> = val_set.iter().collect();
    let mut val_noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x56414c]));
    let val_noise = draw_noise(config, val_set.len(), noise, &mut val_noise_rng);
    let mut train_noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x545249]));

    let tensor_lens: Vec<usize> = params.flat().iter().map(|(_, s, _)| s.len()).collect();
    let mut adam = Adam::new(&tensor_lens, config.learning_rate);

    let validate_now = |params: &LearnerParams, iteration: usize| -> Result<ValidationPoint> {
        let out = graph::forward_episode(params, config, &val_refs, &val_noise, false, false)?;
        Ok(ValidationPoint {
            iteration,
            mean_r_sum: out.mean_r_sum(),
        })
    };

    let mut history = Vec::new();
    let first = validate_now(&params, 0)?;
    on_validation(&first);
    history.push(first);

    let mut last_good = params.clone();
    let mut diverged_at = None;

    for it in 1..=config.train_iterations {
        let batch: Vec<ChannelRealization> = (0..config.batch_size)
            .map(|_| sampler.sample())
            .collect::<Result<_>>()?;
        let refs: Vec<&ChannelRealization> = batch.iter().collect();
        let draws = draw_noise(config, batch.len(), noise, &mut train_noise_rng);

        let (loss_value, mut grads) = loss_and_grad(&params, config, &refs, &draws)?;
        if !loss_value.is_finite() {
            params = last_good.clone();
            diverged_at = Some(it);
            break;
        }

        if config.grad_clip_norm > 0.0 {
            clip_global_norm(&mut grads, config.grad_clip_norm);
        }
        {
            let mut views: Vec<&mut [f64]> =
                params.flat_mut().into_iter().map(|(_, s)| s).collect();
            let grad_flat = grads.flat();
            let grad_views: Vec<&[f64]> = grad_flat.iter().map(|(_, s, _)| *s).collect();
            adam.step(&mut views, &grad_views);
        }

        if it % config.eval_every == 0 || it == config.train_iterations {
            let vp = validate_now(&params, it)?;
            if vp.mean_r_sum.is_finite() {
                last_good = params.clone();
            } else {
                params = last_good.clone();
                diverged_at = Some(it);
                break;
            }
            on_validation(&vp);
            history.push(vp);
        }
    }

    Ok(TrainReport {
        params,
        history,
        diverged_at,
    })
}

fn clip_global_norm(grads: &mut LearnerParams, max_norm: f64) {
    let norm_sq: f64 = grads
        .flat()
        .iter()
        .map(|(_, s, _)| s.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for (_, s) in grads.flat_mut() {
            for v in s.iter_mut() {
                *v *= scale;
            }
        }
    }
}

// --- checkpoint container -------------------------------------------------

const CHECKPOINT_FORMAT: &str = "fdxbl-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    /// Little-endian f64 bytes, base64; bit-exact round trip.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: LearnerConfig,
    tensors: BTreeMap<String, TensorRecord>,
}

/// A loaded checkpoint: parameters plus the config they were trained with.
pub struct Checkpoint {
    pub params: LearnerParams,
    pub config: LearnerConfig,
}

/// Serialize parameters and their config to a self-describing JSON container
/// with bit-exact tensor payloads.
pub fn save_params(params: &LearnerParams, config: &LearnerConfig, path: &Path) -> Result<()> {
    let tensors: BTreeMap<String, TensorRecord> = params
        .flat()
        .into_iter()
        .map(|(name, slice, shape)| {
            let mut bytes = Vec::with_capacity(slice.len() * 8);
            for v in slice {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            (
                name,
                TensorRecord {
                    shape,
                    data: BASE64.encode(bytes),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        tensors,
    };
    let writer = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(writer, &file)
        .map_err(|e| Error::Checkpoint(format!("write {}: {e}", path.display())))
}

/// Load a checkpoint, validating the container format and every tensor shape
/// against the embedded config.
pub fn load_params(path: &Path) -> Result<Checkpoint> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(reader)
        .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown container format `{}`",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    file.config.validate()?;
    let mut params = LearnerParams::zeros(&file.config)?;
    let expected_shapes: Vec<(String, Vec<usize>)> = params
        .flat()
        .into_iter()
        .map(|(name, _, shape)| (name, shape))
        .collect();

    for (name, expected) in &expected_shapes {
        let record = file.tensors.get(name).ok_or_else(|| {
            Error::Checkpoint(format!("tensor `{name}` missing from checkpoint"))
        })?;
        if &record.shape != expected {
            return Err(Error::CheckpointShape {
                name: name.clone(),
                expected: expected.clone(),
                found: record.shape.clone(),
            });
        }
    }
    for name in file.tensors.keys() {
        if !expected_shapes.iter().any(|(n, _)| n == name) {
            return Err(Error::Checkpoint(format!(
                "unexpected tensor `{name}` in checkpoint"
            )));
        }
    }

    for (name, slice) in params.flat_mut() {
        let record = &file.tensors[&name];
        let bytes = BASE64
            .decode(&record.data)
            .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: bad base64: {e}")))?;
        if bytes.len() != slice.len() * 8 {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}`: expected {} bytes, found {}",
                slice.len() * 8,
                bytes.len()
            )));
        }
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            slice[i] = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
    }

    Ok(Checkpoint {
        params,
        config: file.config,
    })
}
