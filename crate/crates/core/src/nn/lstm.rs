//! Single LSTM layer with an exact backward pass.
//!
//! Gate blocks inside `w`, `u` and `b` are laid out as
//! `(input, forget, cell-candidate, output)`, each `units` wide:
//!
//! ```text
//! a_t = x_t W + h_{t-1} U + b
//! i = σ(a[0..u])   f = σ(a[u..2u])   g = tanh(a[2u..3u])   o = σ(a[3u..4u])
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! Initial hidden and cell states are zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub units: usize,
    pub input_dim: usize,
    /// `input_dim × 4·units`
    pub w: Tensor,
    /// `units × 4·units`
    pub u: Tensor,
    /// `4·units`
    pub b: Tensor,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            units,
            input_dim,
            w: Tensor::zeros(&[input_dim, 4 * units]),
            u: Tensor::zeros(&[units, 4 * units]),
            b: Tensor::zeros(&[4 * units]),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget block.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, units: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input_dim, units);
        let gates = 4 * units;
        let w_limit = (6.0 / (input_dim + gates) as f64).sqrt();
        for v in layer.w.as_mut_slice() {
            *v = rng.random_range(-w_limit..w_limit);
        }
        let u_limit = (6.0 / (units + gates) as f64).sqrt();
        for v in layer.u.as_mut_slice() {
            *v = rng.random_range(-u_limit..u_limit);
        }
        layer.b.as_mut_slice()[units..2 * units].fill(FORGET_BIAS_INIT);
        layer
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let g = 4 * self.units;
        if self.w.shape() != [self.input_dim, g] || self.u.shape() != [self.units, g] || self.b.shape() != [g] {
            return Err(Error::Dimension(format!(
                "lstm layer ({}→{}) has inconsistent tensor shapes",
                self.input_dim, self.units
            )));
        }
        Ok(())
    }
}

impl Parameters for LstmLayerParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.u, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Activations retained from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    steps: usize,
    /// `T × input_dim`
    inputs: Vec<f64>,
    /// per step, `4·units` post-activation gates (i, f, g, o)
    gates: Vec<f64>,
    /// `(T+1) × units`, row 0 is the zero initial state
    cells: Vec<f64>,
    /// `(T+1) × units`
    hidden: Vec<f64>,
    /// `T × units`
    tanh_cells: Vec<f64>,
}

impl LstmCache {
    /// Hidden state at step `t` (0-based), i.e. the layer output for that step.
    pub(crate) fn output(&self, t: usize, units: usize) -> &[f64] {
        &self.hidden[(t + 1) * units..(t + 2) * units]
    }

    pub(crate) fn outputs(&self, units: usize) -> &[f64] {
        &self.hidden[units..]
    }

    pub(crate) fn last_output(&self, units: usize) -> &[f64] {
        self.output(self.steps - 1, units)
    }
}

/// Runs the recurrence over `inputs` (`steps × input_dim`, row-major).
pub(crate) fn forward_cached(params: &LstmLayerParams, inputs: &[f64], steps: usize) -> LstmCache {
    let units = params.units;
    let d = params.input_dim;
    let g4 = 4 * units;
    debug_assert_eq!(inputs.len(), steps * d);

    let w = params.w.as_slice();
    let u = params.u.as_slice();
    let b = params.b.as_slice();

    let mut gates = vec![0.0; steps * g4];
    let mut cells = vec![0.0; (steps + 1) * units];
    let mut hidden = vec![0.0; (steps + 1) * units];
    let mut tanh_cells = vec![0.0; steps * units];
    let mut pre = vec![0.0; g4];

    for t in 0..steps {
        pre.copy_from_slice(b);
        let x = &inputs[t * d..(t + 1) * d];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let row = &w[k * g4..(k + 1) * g4];
                for (p, &wv) in pre.iter_mut().zip(row) {
                    *p += xk * wv;
                }
            }
        }
        let h_prev = &hidden[t * units..(t + 1) * units];
        for (k, &hk) in h_prev.iter().enumerate() {
            if hk != 0.0 {
                let row = &u[k * g4..(k + 1) * g4];
                for (p, &uv) in pre.iter_mut().zip(row) {
                    *p += hk * uv;
                }
            }
        }

        let gt = &mut gates[t * g4..(t + 1) * g4];
        for j in 0..units {
            gt[j] = sigmoid(pre[j]);
            gt[units + j] = sigmoid(pre[units + j]);
            gt[2 * units + j] = pre[2 * units + j].tanh();
            gt[3 * units + j] = sigmoid(pre[3 * units + j]);
        }
        for j in 0..units {
            let c_prev = cells[t * units + j];
            let c = gt[units + j] * c_prev + gt[j] * gt[2 * units + j];
            let tc = c.tanh();
            cells[(t + 1) * units + j] = c;
            tanh_cells[t * units + j] = tc;
            hidden[(t + 1) * units + j] = gt[3 * units + j] * tc;
        }
    }

    LstmCache {
        steps,
        inputs: inputs.to_vec(),
        gates,
        cells,
        hidden,
        tanh_cells,
    }
}

/// Backpropagates `d_outputs` (`T × units`, gradient w.r.t. each step's
/// hidden output) through the layer. Parameter gradients are accumulated into
/// `grads`; the gradient w.r.t. the inputs (`T × input_dim`) is returned.
pub(crate) fn backward(
    params: &LstmLayerParams,
    cache: &LstmCache,
    d_outputs: &[f64],
    grads: &mut LstmLayerParams,
) -> Vec<f64> {
    let units = params.units;
    let d = params.input_dim;
    let g4 = 4 * units;
    let steps = cache.steps;
    debug_assert_eq!(d_outputs.len(), steps * units);

    let w = params.w.as_slice();
    let u = params.u.as_slice();

    let mut d_inputs = vec![0.0; steps * d];
    let mut dh_next = vec![0.0; units];
    let mut dc_next = vec![0.0; units];
    let mut da = vec![0.0; g4];

    for t in (0..steps).rev() {
        let gt = &cache.gates[t * g4..(t + 1) * g4];
        let c_prev = &cache.cells[t * units..(t + 1) * units];
        let tc = &cache.tanh_cells[t * units..(t + 1) * units];

        for j in 0..units {
            let dh = d_outputs[t * units + j] + dh_next[j];
            let (i, f, g, o) = (gt[j], gt[units + j], gt[2 * units + j], gt[3 * units + j]);
            let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
            da[j] = dc * g * i * (1.0 - i);
            da[units + j] = dc * c_prev[j] * f * (1.0 - f);
            da[2 * units + j] = dc * i * (1.0 - g * g);
            da[3 * units + j] = dh * tc[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }

        let x = &cache.inputs[t * d..(t + 1) * d];
        let gw = grads.w.as_mut_slice();
        for (k, &xk) in x.iter().enumerate() {
            let row = &mut gw[k * g4..(k + 1) * g4];
            for (gv, &dav) in row.iter_mut().zip(&da) {
                *gv += xk * dav;
            }
        }
        let h_prev = &cache.hidden[t * units..(t + 1) * units];
        let gu = grads.u.as_mut_slice();
        for (k, &hk) in h_prev.iter().enumerate() {
            let row = &mut gu[k * g4..(k + 1) * g4];
            for (gv, &dav) in row.iter_mut().zip(&da) {
                *gv += hk * dav;
            }
        }
        for (gv, &dav) in grads.b.as_mut_slice().iter_mut().zip(&da) {
            *gv += dav;
        }

        let dx = &mut d_inputs[t * d..(t + 1) * d];
        for (k, dxk) in dx.iter_mut().enumerate() {
            let row = &w[k * g4..(k + 1) * g4];
            *dxk = row.iter().zip(&da).map(|(a, b)| a * b).sum();
        }
        for (k, dhk) in dh_next.iter_mut().enumerate() {
            let row = &u[k * g4..(k + 1) * g4];
            *dhk = row.iter().zip(&da).map(|(a, b)| a * b).sum();
        }
    }

    d_inputs
}

/// Runs the layer over a `T × input_dim` sequence. Returns `T × units` when
/// `return_sequences` is set, otherwise the last hidden state (`units`).
pub fn lstm_forward(params: &LstmLayerParams, sequence: &Tensor, return_sequences: bool) -> Result<Tensor> {
    params.check_shapes()?;
    let shape = sequence.shape();
    let (steps, dim) = match shape {
        [t, d] => (*t, *d),
        [t] if params.input_dim == 1 => (*t, 1),
        _ => {
            return Err(Error::Dimension(format!(
                "expected a T×{} sequence, got shape {:?}",
                params.input_dim, shape
            )))
        }
    };
    if dim != params.input_dim {
        return Err(Error::Dimension(format!(
            "sequence feature width {} does not match layer input_dim {}",
            dim, params.input_dim
        )));
    }
    if steps == 0 {
        return Err(Error::Dimension("sequence must hold at least one step".into()));
    }
    let cache = forward_cached(params, sequence.as_slice(), steps);
    let units = params.units;
    if return_sequences {
        Tensor::from_vec(&[steps, units], cache.outputs(units).to_vec())
    } else {
        Tensor::from_vec(&[units], cache.last_output(units).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar-loop reference recurrence, written gate by gate.
    fn reference_lstm(p: &LstmLayerParams, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let u = p.units;
        let g4 = 4 * u;
        let w = |k: usize, j: usize| p.w.as_slice()[k * g4 + j];
        let uu = |k: usize, j: usize| p.u.as_slice()[k * g4 + j];
        let b = |j: usize| p.b.as_slice()[j];
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        let mut out = Vec::new();
        for x in seq {
            let mut nh = vec![0.0; u];
            let mut nc = vec![0.0; u];
            for j in 0..u {
                let pre = |block: usize| {
                    let col = block * u + j;
                    let mut s = b(col);
                    for (k, xk) in x.iter().enumerate() {
                        s += xk * w(k, col);
                    }
                    for (k, hk) in h.iter().enumerate() {
                        s += hk * uu(k, col);
                    }
                    s
                };
                let ig = sig(pre(0));
                let fg = sig(pre(1));
                let gg = pre(2).tanh();
                let og = sig(pre(3));
                nc[j] = fg * c[j] + ig * gg;
                nh[j] = og * nc[j].tanh();
            }
            h = nh;
            c = nc;
            out.push(h.clone());
        }
        out
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = LstmLayerParams::zeros(3, 5);
        let seq = Tensor::from_vec(&[4, 3], (0..12).map(|v| v as f64 - 3.0).collect()).unwrap();
        let out = lstm_forward(&p, &seq, true).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_sequence_matches_last_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmLayerParams::init(2, 3, &mut rng);
        let seq = Tensor::from_vec(&[1, 2], vec![0.4, -1.2]).unwrap();
        let a = lstm_forward(&p, &seq, true).unwrap();
        let b = lstm_forward(&p, &seq, false).unwrap();
        assert_eq!(a.shape(), &[1, 3]);
        assert_eq!(b.shape(), &[3]);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = LstmLayerParams::init(1, 2, &mut rng);
        let seq: Vec<Vec<f64>> = vec![vec![1.0]; 5];
        let expect = reference_lstm(&p, &seq);
        let got = lstm_forward(&p, &Tensor::column(&[1.0; 5]), true).unwrap();
        for (t, row) in expect.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((got.as_slice()[t * 2 + j] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wide_input_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmLayerParams::init(4, 3, &mut rng);
        let seq: Vec<Vec<f64>> = (0..6)
            .map(|t| (0..4).map(|k| ((t * 4 + k) as f64 * 0.37).sin()).collect())
            .collect();
        let flat: Vec<f64> = seq.iter().flatten().copied().collect();
        let got = lstm_forward(&p, &Tensor::from_vec(&[6, 4], flat).unwrap(), true).unwrap();
        let expect: Vec<f64> = reference_lstm(&p, &seq).into_iter().flatten().collect();
        for (a, b) in got.as_slice().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let p = LstmLayerParams::zeros(2, 3);
        let seq = Tensor::from_vec(&[4, 3], vec![0.0; 12]).unwrap();
        assert!(matches!(lstm_forward(&p, &seq, true), Err(Error::Dimension(_))));
    }

    #[test]
    fn forget_bias_initialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmLayerParams::init(1, 4, &mut rng);
        let b = p.b.as_slice();
        assert!(b[..4].iter().all(|&v| v == 0.0));
        assert!(b[4..8].iter().all(|&v| v == FORGET_BIAS_INIT));
        assert!(b[8..].iter().all(|&v| v == 0.0));
    }
}
