//! Minimal dense-network machinery for the probing policy: linear layers,
//! a ReLU MLP, a standard LSTM cell, and Adam. Forward passes cache exactly
//! what their hand-written backward passes need; everything is plain f64 on
//! row-major `ndarray` types, batch-first.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Uniform Glorot initialization: `U(-L, L)` with `L = sqrt(6/(fan_in+fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit))
}

/// Fully connected layer `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(in_dim, out_dim, rng),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates weight gradients into `grad` and returns `dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

/// ReLU MLP: hidden layers activated, output layer linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Layer inputs captured during [`Mlp::forward_cached`]: `inputs[i]` feeds
/// layer `i`; hidden entries are post-ReLU, so the backward mask is just
/// `inputs[i] > 0`.
pub struct MlpCache {
    pub inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Build from the full dimension chain `[in, hidden..., out]`.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Linear::glorot(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (y, _) = self.forward_cached(x);
        y
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            h = layer.forward(&h);
            if i + 1 < self.layers.len() {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        (h, MlpCache { inputs })
    }

    /// Accumulates into `grad` and returns the gradient at the MLP input.
    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut d = dy.clone();
        for i in (0..self.layers.len()).rev() {
            d = self.layers[i].backward(&cache.inputs[i], &d, &mut grad.layers[i]);
            if i > 0 {
                // ReLU mask from the cached post-activation input.
                d.zip_mut_with(&cache.inputs[i], |g, &inp| {
                    if inp <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
        }
        d
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One standard LSTM cell (forget gate, no peepholes). Gate blocks are laid
/// out `[input | forget | output | candidate]` along the 4H axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

/// Intermediates for one cell application.
pub struct LstmCache {
    pub x: Array2<f64>,
    pub s_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub gate_i: Array2<f64>,
    pub gate_f: Array2<f64>,
    pub gate_o: Array2<f64>,
    pub gate_g: Array2<f64>,
    pub tanh_c_next: Array2<f64>,
}

impl LstmCell {
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let mut b = Array1::zeros(4 * hidden_dim);
        b.slice_mut(ndarray::s![hidden_dim..2 * hidden_dim])
            .fill(forget_bias);
        Self {
            w_x: glorot_uniform(input_dim, 4 * hidden_dim, rng),
            w_h: glorot_uniform(hidden_dim, 4 * hidden_dim, rng),
            b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_x: Array2::zeros(self.w_x.dim()),
            w_h: Array2::zeros(self.w_h.dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.nrows()
    }

    /// `(s_next, c_next, cache)` from inputs `x: [B, in]` and states `[B, H]`.
    pub fn forward_cached(
        &self,
        x: &Array2<f64>,
        s_prev: &Array2<f64>,
        c_prev: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, LstmCache) {
        let h = self.hidden_dim();
        let z = x.dot(&self.w_x) + s_prev.dot(&self.w_h) + &self.b;
        let gate_i = z.slice(ndarray::s![.., 0..h]).mapv(sigmoid);
        let gate_f = z.slice(ndarray::s![.., h..2 * h]).mapv(sigmoid);
        let gate_o = z.slice(ndarray::s![.., 2 * h..3 * h]).mapv(sigmoid);
        let gate_g = z.slice(ndarray::s![.., 3 * h..4 * h]).mapv(f64::tanh);

        let c_next = &gate_f * c_prev + &gate_i * &gate_g;
        let tanh_c_next = c_next.mapv(f64::tanh);
        let s_next = &gate_o * &tanh_c_next;
        let cache = LstmCache {
            x: x.clone(),
            s_prev: s_prev.clone(),
            c_prev: c_prev.clone(),
            gate_i,
            gate_f,
            gate_o,
            gate_g,
            tanh_c_next,
        };
        (s_next, c_next, cache)
    }

    /// Backpropagate through one cell application. `ds_next`/`dc_next` are
    /// the upstream gradients at the cell outputs; returns
    /// `(dx, ds_prev, dc_prev)` and accumulates weight gradients.
    pub fn backward(
        &self,
        cache: &LstmCache,
        ds_next: &Array2<f64>,
        dc_next: &Array2<f64>,
        grad: &mut LstmCell,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = self.hidden_dim();
        let d_o = ds_next * &cache.tanh_c_next;
        let dc_total =
            dc_next + &(ds_next * &cache.gate_o * cache.tanh_c_next.mapv(|t| 1.0 - t * t));
        let d_i = &dc_total * &cache.gate_g;
        let d_g = &dc_total * &cache.gate_i;
        let d_f = &dc_total * &cache.c_prev;
        let dc_prev = &dc_total * &cache.gate_f;

        let batch = cache.x.nrows();
        let mut dz = Array2::zeros((batch, 4 * h));
        // sigmoid'(z) = s(1-s) for the three sigmoid gates, tanh'(z) = 1-g^2
        // for the candidate.
        dz.slice_mut(ndarray::s![.., 0..h])
            .assign(&(&d_i * &cache.gate_i * &cache.gate_i.mapv(|v| 1.0 - v)));
        dz.slice_mut(ndarray::s![.., h..2 * h])
            .assign(&(&d_f * &cache.gate_f * &cache.gate_f.mapv(|v| 1.0 - v)));
        dz.slice_mut(ndarray::s![.., 2 * h..3 * h])
            .assign(&(&d_o * &cache.gate_o * &cache.gate_o.mapv(|v| 1.0 - v)));
        dz.slice_mut(ndarray::s![.., 3 * h..4 * h])
            .assign(&(&d_g * &cache.gate_g.mapv(|v| 1.0 - v * v)));

        grad.w_x += &cache.x.t().dot(&dz);
        grad.w_h += &cache.s_prev.t().dot(&dz);
        grad.b += &dz.sum_axis(Axis(0));

        let dx = dz.dot(&self.w_x.t());
        let ds_prev = dz.dot(&self.w_h.t());
        (dx, ds_prev, dc_prev)
    }
}

/// Adam over a flat view of the parameter set; moment buffers are aligned
/// with the tensor order of [`super::LearnerParams::flat_tensors`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(tensor_lens: &[usize], learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update step. `params` and `grads` must be aligned flat views.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_forward_matches_manual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Linear::glorot(3, 2, &mut rng);
        let x = Array2::from_shape_vec((1, 3), vec![1.0, -2.0, 0.5]).unwrap();
        let y = l.forward(&x);
        for j in 0..2 {
            let manual: f64 =
                (0..3).map(|i| x[[0, i]] * l.w[[i, j]]).sum::<f64>() + l.b[j];
            assert!((y[[0, j]] - manual).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::glorot(&[4, 8, 3], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        // Scalar objective: sum of squares of outputs.
        let (y, cache) = mlp.forward_cached(&x);
        let dy = y.mapv(|v| 2.0 * v);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, &dy, &mut grad);

        let f = |m: &Mlp| -> f64 { m.forward(&x).mapv(|v| v * v).sum() };
        let h = 1e-6;

        // Check a few weight coordinates in each layer.
        for li in 0..2 {
            for &(r, c) in &[(0usize, 0usize), (1, 2), (3, 1)] {
                let mut plus = mlp.clone();
                plus.layers[li].w[[r, c]] += h;
                let mut minus = mlp.clone();
                minus.layers[li].w[[r, c]] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = grad.layers[li].w[[r, c]];
                assert!(
                    (fd - an).abs() <= 1e-6 * fd.abs().max(1.0),
                    "layer {li} w[{r},{c}]: fd {fd} vs {an}"
                );
            }
        }
        // And an input coordinate.
        let mut xp = x.clone();
        xp[[2, 1]] += h;
        let mut xm = x.clone();
        xm[[2, 1]] -= h;
        let fd = (mlp.forward(&xp).mapv(|v| v * v).sum()
            - mlp.forward(&xm).mapv(|v| v * v).sum())
            / (2.0 * h);
        assert!((fd - dx[[2, 1]]).abs() <= 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn lstm_zero_weights_zero_state_stays_at_rest() {
        let cell = LstmCell {
            w_x: Array2::zeros((3, 8)),
            w_h: Array2::zeros((2, 8)),
            b: Array1::zeros(8),
        };
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.7, 1.1]).unwrap();
        let s = Array2::zeros((1, 2));
        let c = Array2::zeros((1, 2));
        let (s1, c1, _) = cell.forward_cached(&x, &s, &c);
        // All gates sit at sigmoid(0) = 1/2 and the candidate at tanh(0) = 0,
        // so c' = 0.5 * 0 + 0.5 * 0 = 0 and s' = 0.5 * tanh(0) = 0.
        assert_eq!(s1, Array2::<f64>::zeros((1, 2)));
        assert_eq!(c1, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn lstm_zero_weights_halves_cell_state() {
        let cell = LstmCell {
            w_x: Array2::zeros((3, 8)),
            w_h: Array2::zeros((2, 8)),
            b: Array1::zeros(8),
        };
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.7, 1.1]).unwrap();
        let s = Array2::zeros((1, 2));
        let c = Array2::from_shape_vec((1, 2), vec![0.8, -0.4]).unwrap();
        let (s1, c1, _) = cell.forward_cached(&x, &s, &c);
        // f = i = o = 1/2, g = 0: c' = c/2 and s' = tanh(c/2)/2.
        for j in 0..2 {
            assert!((c1[[0, j]] - c[[0, j]] / 2.0).abs() < 1e-15);
            assert!((s1[[0, j]] - (c[[0, j]] / 2.0).tanh() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::glorot(3, 4, 1.0, &mut rng);
        let x = Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0));
        let s = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0));
        let c = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0));

        let objective = |cell: &LstmCell| -> f64 {
            let (s1, c1, _) = cell.forward_cached(&x, &s, &c);
            s1.sum() + 0.5 * c1.mapv(|v| v * v).sum()
        };

        let (s1, c1, cache) = cell.forward_cached(&x, &s, &c);
        let _ = s1;
        let ds = Array2::ones((2, 4));
        let dc = c1.clone();
        let mut grad = cell.zeros_like();
        let (dx, dsp, dcp) = cell.backward(&cache, &ds, &dc, &mut grad);

        let h = 1e-6;
        for &(r, cc) in &[(0usize, 0usize), (1, 5), (2, 11), (0, 15)] {
            let mut plus = cell.clone();
            plus.w_x[[r % 3, cc]] += h;
            let mut minus = cell.clone();
            minus.w_x[[r % 3, cc]] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let an = grad.w_x[[r % 3, cc]];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1.0), "w_x fd {fd} vs {an}");
            let _ = r;
        }
        for idx in [0usize, 7, 12] {
            let mut plus = cell.clone();
            plus.b[idx] += h;
            let mut minus = cell.clone();
            minus.b[idx] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((fd - grad.b[idx]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
        // Input-side gradients via perturbing x, s, c.
        let num = |base: &Array2<f64>, r: usize, q: usize, which: u8| -> f64 {
            let eval = |arr: &Array2<f64>| -> f64 {
                let (xx, ss, cc2) = match which {
                    0 => (arr, &s, &c),
                    1 => (&x, arr, &c),
                    _ => (&x, &s, arr),
                };
                let (s1, c1, _) = cell.forward_cached(xx, ss, cc2);
                s1.sum() + 0.5 * c1.mapv(|v| v * v).sum()
            };
            let mut plus = base.clone();
            plus[[r, q]] += h;
            let mut minus = base.clone();
            minus[[r, q]] -= h;
            (eval(&plus) - eval(&minus)) / (2.0 * h)
        };
        assert!((num(&x, 1, 2, 0) - dx[[1, 2]]).abs() < 1e-6);
        assert!((num(&s, 0, 3, 1) - dsp[[0, 3]]).abs() < 1e-6);
        assert!((num(&c, 1, 1, 2) - dcp[[1, 1]]).abs() < 1e-6);
    }

    #[test]
    fn adam_moves_toward_quadratic_minimum() {
        let mut p = vec![5.0f64, -3.0];
        let mut adam = Adam::new(&[2], 0.1);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|&x| 2.0 * x).collect();
            let mut views: Vec<&mut [f64]> = vec![p.as_mut_slice()];
            adam.step(&mut views, &[g.as_slice()]);
        }
        assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3, "{p:?}");
    }
}
