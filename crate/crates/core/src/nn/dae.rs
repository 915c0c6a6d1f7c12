//! The per-sensor LSTM denoising autoencoder.
//!
//! ```text
//! window (n×1)
//!   → LSTM 8, sequence  → dropout
//!   → LSTM 4, last step
//!   → repeat n
//!   → LSTM 4, sequence  → dropout
//!   → LSTM 8, sequence
//!   → dense 8→1 per step  → reconstruction (n×1)
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lstm::{self, LstmCache, LstmLayerParams};
use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

pub const ENCODER_UNITS: usize = 8;
pub const LATENT_UNITS: usize = 4;
pub const DECODER_UNITS: usize = 4;
pub const OUTPUT_UNITS: usize = 8;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeParams {
    pub window_size: usize,
    pub dropout_p: f64,
    pub enc1: LstmLayerParams,
    pub enc2: LstmLayerParams,
    pub dec1: LstmLayerParams,
    pub dec2: LstmLayerParams,
    /// `8 × 1`
    pub out_w: Tensor,
    /// `1`
    pub out_b: Tensor,
}

impl Parameters for DaeParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::with_capacity(14);
        v.extend(self.enc1.tensors());
        v.extend(self.enc2.tensors());
        v.extend(self.dec1.tensors());
        v.extend(self.dec2.tensors());
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::with_capacity(14);
        v.extend(self.enc1.tensors_mut());
        v.extend(self.enc2.tensors_mut());
        v.extend(self.dec1.tensors_mut());
        v.extend(self.dec2.tensors_mut());
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }
}

/// Inverted-dropout masks for one window: each entry is either 0 or
/// `1/(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// after the first encoder layer, `n × 8`
    pub encoder: Vec<f64>,
    /// after the first decoder layer, `n × 4`
    pub decoder: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(window_size: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 - p;
        let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                .collect()
        };
        let encoder = draw(window_size * ENCODER_UNITS);
        let decoder = draw(window_size * DECODER_UNITS);
        Self { encoder, decoder }
    }

    /// All-ones masks, equivalent to inference.
    pub fn identity(window_size: usize) -> Self {
        Self {
            encoder: vec![1.0; window_size * ENCODER_UNITS],
            decoder: vec![1.0; window_size * DECODER_UNITS],
        }
    }
}

struct DaeCache {
    enc1: LstmCache,
    enc2: LstmCache,
    dec1: LstmCache,
    dec2: LstmCache,
    output: Vec<f64>,
}

fn apply_mask(values: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => values.iter().zip(m).map(|(v, k)| v * k).collect(),
        None => values.to_vec(),
    }
}

impl DaeParams {
    pub fn zeros(window_size: usize) -> Self {
        Self {
            window_size,
            dropout_p: DEFAULT_DROPOUT,
            enc1: LstmLayerParams::zeros(1, ENCODER_UNITS),
            enc2: LstmLayerParams::zeros(ENCODER_UNITS, LATENT_UNITS),
            dec1: LstmLayerParams::zeros(LATENT_UNITS, DECODER_UNITS),
            dec2: LstmLayerParams::zeros(DECODER_UNITS, OUTPUT_UNITS),
            out_w: Tensor::zeros(&[OUTPUT_UNITS, 1]),
            out_b: Tensor::zeros(&[1]),
        }
    }

    pub fn init<R: Rng + ?Sized>(window_size: usize, rng: &mut R) -> Self {
        let enc1 = LstmLayerParams::init(1, ENCODER_UNITS, rng);
        let enc2 = LstmLayerParams::init(ENCODER_UNITS, LATENT_UNITS, rng);
        let dec1 = LstmLayerParams::init(LATENT_UNITS, DECODER_UNITS, rng);
        let dec2 = LstmLayerParams::init(DECODER_UNITS, OUTPUT_UNITS, rng);
        let limit = (6.0 / (OUTPUT_UNITS + 1) as f64).sqrt();
        let out_w: Vec<f64> = (0..OUTPUT_UNITS).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            window_size,
            dropout_p: DEFAULT_DROPOUT,
            enc1,
            enc2,
            dec1,
            dec2,
            out_w: Tensor::column(&out_w),
            out_b: Tensor::zeros(&[1]),
        }
    }

    /// A zero-valued parameter set with this one's structure, used to
    /// accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Checks the fixed layer widths and every tensor shape.
    pub fn validate(&self) -> Result<()> {
        let expect = [
            (&self.enc1, 1, ENCODER_UNITS, "enc1"),
            (&self.enc2, ENCODER_UNITS, LATENT_UNITS, "enc2"),
            (&self.dec1, LATENT_UNITS, DECODER_UNITS, "dec1"),
            (&self.dec2, DECODER_UNITS, OUTPUT_UNITS, "dec2"),
        ];
        for (layer, input_dim, units, name) in expect {
            if layer.input_dim != input_dim || layer.units != units {
                return Err(Error::Dimension(format!(
                    "{name} must be {input_dim}→{units}, found {}→{}",
                    layer.input_dim, layer.units
                )));
            }
            layer.check_shapes()?;
        }
        if self.out_w.shape() != [OUTPUT_UNITS, 1] || self.out_b.shape() != [1] {
            return Err(Error::Dimension("output layer must be 8→1".into()));
        }
        if self.window_size == 0 {
            return Err(Error::Dimension("window_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Dimension(format!("dropout_p {} outside [0,1)", self.dropout_p)));
        }
        Ok(())
    }

    fn check_window(&self, window: &Tensor) -> Result<()> {
        let n = self.window_size;
        let ok = match window.shape() {
            [len, 1] | [len] => *len == n,
            _ => false,
        };
        if !ok {
            return Err(Error::Dimension(format!(
                "window of shape {:?} does not match window_size {}",
                window.shape(),
                n
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, window: &[f64], masks: Option<&DropoutMasks>) -> DaeCache {
        let n = self.window_size;
        let enc1 = lstm::forward_cached(&self.enc1, window, n);
        let a1 = apply_mask(enc1.outputs(ENCODER_UNITS), masks.map(|m| m.encoder.as_slice()));
        let enc2 = lstm::forward_cached(&self.enc2, &a1, n);
        let latent = enc2.last_output(LATENT_UNITS);
        let repeated: Vec<f64> = latent.iter().copied().cycle().take(n * LATENT_UNITS).collect();
        let dec1 = lstm::forward_cached(&self.dec1, &repeated, n);
        let a3 = apply_mask(dec1.outputs(DECODER_UNITS), masks.map(|m| m.decoder.as_slice()));
        let dec2 = lstm::forward_cached(&self.dec2, &a3, n);

        let w = self.out_w.as_slice();
        let b = self.out_b.as_slice()[0];
        let output = (0..n)
            .map(|t| {
                let h = dec2.output(t, OUTPUT_UNITS);
                b + h.iter().zip(w).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect();
        DaeCache {
            enc1,
            enc2,
            dec1,
            dec2,
            output,
        }
    }

    /// Accumulates the gradient of a scalar loss with `d_output = ∂L/∂y`
    /// into `grads`.
    fn backward(&self, cache: &DaeCache, masks: Option<&DropoutMasks>, d_output: &[f64], grads: &mut DaeParams) {
        let n = self.window_size;
        let w = self.out_w.as_slice();

        let mut d_h4 = vec![0.0; n * OUTPUT_UNITS];
        {
            let gw = grads.out_w.as_mut_slice();
            for t in 0..n {
                let dy = d_output[t];
                let h = cache.dec2.output(t, OUTPUT_UNITS);
                for k in 0..OUTPUT_UNITS {
                    gw[k] += h[k] * dy;
                    d_h4[t * OUTPUT_UNITS + k] = w[k] * dy;
                }
            }
            grads.out_b.as_mut_slice()[0] += d_output.iter().sum::<f64>();
        }

        let d_a3 = lstm::backward(&self.dec2, &cache.dec2, &d_h4, &mut grads.dec2);
        let d_h3 = apply_mask(&d_a3, masks.map(|m| m.decoder.as_slice()));
        let d_rep = lstm::backward(&self.dec1, &cache.dec1, &d_h3, &mut grads.dec1);

        let mut d_h2 = vec![0.0; n * LATENT_UNITS];
        let last = &mut d_h2[(n - 1) * LATENT_UNITS..];
        for t in 0..n {
            for k in 0..LATENT_UNITS {
                last[k] += d_rep[t * LATENT_UNITS + k];
            }
        }
        let d_a1 = lstm::backward(&self.enc2, &cache.enc2, &d_h2, &mut grads.enc2);
        let d_h1 = apply_mask(&d_a1, masks.map(|m| m.encoder.as_slice()));
        lstm::backward(&self.enc1, &cache.enc1, &d_h1, &mut grads.enc1);
    }

    /// Deterministic reconstruction with dropout disabled.
    pub fn infer(&self, window: &Tensor) -> Result<Tensor> {
        self.check_window(window)?;
        let cache = self.forward_cached(window.as_slice(), None);
        Ok(Tensor::column(&cache.output))
    }

    /// Training-mode reconstruction with dropout masks drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(&self, window: &Tensor, rng: &mut R) -> Result<Tensor> {
        self.check_window(window)?;
        let masks = DropoutMasks::sample(self.window_size, self.dropout_p, rng);
        self.forward_masked(window, &masks)
    }

    /// Reconstruction under explicit dropout masks.
    pub fn forward_masked(&self, window: &Tensor, masks: &DropoutMasks) -> Result<Tensor> {
        self.check_window(window)?;
        let cache = self.forward_cached(window.as_slice(), Some(masks));
        Ok(Tensor::column(&cache.output))
    }
}

/// Forward pass mode.
pub enum Mode<'a, R: Rng + ?Sized> {
    Train(&'a mut R),
    Infer,
}

pub fn dae_forward<R: Rng + ?Sized>(params: &DaeParams, window: &Tensor, mode: Mode<'_, R>) -> Result<Tensor> {
    match mode {
        Mode::Train(rng) => params.forward_train(window, rng),
        Mode::Infer => params.infer(window),
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `noise_sigma`.
pub fn corrupt<R: Rng + ?Sized>(window: &Tensor, noise_sigma: f64, rng: &mut R) -> Tensor {
    let mut out = window.clone();
    if noise_sigma > 0.0 {
        for v in out.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise_sigma * z;
        }
    }
    out
}

/// Mean squared error between a reconstruction and its target.
pub fn reconstruction_loss(recon: &Tensor, target: &Tensor) -> Result<f64> {
    if recon.len() != target.len() || recon.is_empty() {
        return Err(Error::Dimension(format!(
            "reconstruction {:?} vs target {:?}",
            recon.shape(),
            target.shape()
        )));
    }
    let sum: f64 = recon
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / recon.len() as f64)
}

/// One training example: the corrupted input and the clean target.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: Tensor,
    pub target: Tensor,
}

fn check_batch(params: &DaeParams, batch: &[Example], masks: &[DropoutMasks]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if masks.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} masks for {} examples",
            masks.len(),
            batch.len()
        )));
    }
    for ex in batch {
        params.check_window(&ex.input)?;
        params.check_window(&ex.target)?;
    }
    Ok(())
}

/// Mean batch MSE under fixed dropout masks.
pub fn batch_loss(params: &DaeParams, batch: &[Example], masks: &[DropoutMasks]) -> Result<f64> {
    check_batch(params, batch, masks)?;
    let total: f64 = batch
        .iter()
        .zip(masks)
        .map(|(ex, m)| {
            let cache = params.forward_cached(ex.input.as_slice(), Some(m));
            let n = cache.output.len() as f64;
            cache
                .output
                .iter()
                .zip(ex.target.as_slice())
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / n
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`batch_loss`] by backpropagation through time.
/// Returns the loss alongside the gradient.
pub fn dae_gradient(params: &DaeParams, batch: &[Example], masks: &[DropoutMasks]) -> Result<(f64, DaeParams)> {
    check_batch(params, batch, masks)?;
    let n = params.window_size as f64;
    let b = batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for (ex, m) in batch.iter().zip(masks) {
        let cache = params.forward_cached(ex.input.as_slice(), Some(m));
        let mut sq = 0.0;
        let d_output: Vec<f64> = cache
            .output
            .iter()
            .zip(ex.target.as_slice())
            .map(|(y, t)| {
                let e = y - t;
                sq += e * e;
                2.0 * e / (n * b)
            })
            .collect();
        total += sq / n;
        params.backward(&cache, Some(m), &d_output, &mut grads);
    }
    Ok((total / b, grads))
}
