//! Per-sensor component models: z-score normalization, windowing, the
//! reconstruction-error health indicator and its calibrated acceptable
//! region.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::series::SegmentedSeries;
use crate::error::{Error, Result};
use crate::nn::{train_dae, DaeParams, Tensor, TrainConfig, TrainReport};
use crate::stats;

pub const DEFAULT_WEIGHT: f64 = 0.5;
pub const DEFAULT_EPSILON_MIN: f64 = 1e-6;
pub const SIGMA_MULTIPLIER: f64 = 9.0;
const DEGENERATE_STD: f64 = 1e-12;

/// Which pretrained network a sensor starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// pretrained on temperature-like data
    T,
    /// generic, pretrained on accelerometer-like data
    C,
}

impl ModelKind {
    pub fn as_char(self) -> char {
        match self {
            ModelKind::T => 'T',
            ModelKind::C => 'C',
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(ModelKind::T),
            "C" | "c" => Ok(ModelKind::C),
            other => Err(Error::Config(format!("unknown model kind {other:?}, expected T or C"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub sensor_id: String,
    pub model_kind: ModelKind,
    pub weight: f64,
}

impl SensorSpec {
    pub fn new(sensor_id: impl Into<String>, model_kind: ModelKind) -> Self {
        Self {
            sensor_id: sensor_id.into(),
            model_kind,
            weight: DEFAULT_WEIGHT,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_id.is_empty() {
            return Err(Error::Config("sensor id must not be empty".into()));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!(
                "weight of sensor {} must be positive, got {}",
                self.sensor_id, self.weight
            )));
        }
        Ok(())
    }
}

/// Z-score normalizer fitted on burn-in data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
    /// Set when the fitted series had (numerically) zero spread and `std`
    /// fell back to 1.
    pub degenerate: bool,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            degenerate: false,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }
}

/// Mean and population standard deviation of `series`.
pub fn fit_normalizer(series: &[f64]) -> Result<Normalizer> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalizer needs at least 2 samples, got {}",
            series.len()
        )));
    }
    let mean = stats::mean(series);
    let std = stats::population_std(series);
    if std < DEGENERATE_STD {
        Ok(Normalizer {
            mean,
            std: 1.0,
            degenerate: true,
        })
    } else {
        Ok(Normalizer {
            mean,
            std,
            degenerate: false,
        })
    }
}

/// Sliding windows of length `n` with the given stride, one window set per
/// segment. Each window is paired with the global index (position in the
/// concatenated series) of its last sample.
pub fn make_indexed_windows(series: &SegmentedSeries, n: usize, stride: usize) -> Vec<(usize, Tensor)> {
    assert!(n >= 1 && stride >= 1, "window size and stride must be positive");
    let mut out = Vec::new();
    let mut offset = 0;
    for seg in series.segments() {
        let len = seg.samples.len();
        if len >= n {
            let mut start = 0;
            while start + n <= len {
                out.push((offset + start + n - 1, Tensor::column(&seg.samples[start..start + n])));
                start += stride;
            }
        }
        offset += len;
    }
    out
}

pub fn make_windows(series: &SegmentedSeries, n: usize, stride: usize) -> Vec<Tensor> {
    make_indexed_windows(series, n, stride)
        .into_iter()
        .map(|(_, w)| w)
        .collect()
}

/// Mean absolute error between a window and its reconstruction.
pub fn mean_absolute_error(x: &[f64], reconstruction: &[f64]) -> f64 {
    let sum: f64 = x.iter().zip(reconstruction).map(|(a, b)| (a - b).abs()).sum();
    sum / x.len() as f64
}

/// How the upper boundary of an acceptable region is derived from the
/// burn-in HI statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `max(9σ, ε_min)`
    #[default]
    NineSigma,
    /// `mean + max(9σ, ε_min)`
    MeanPlusNineSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRule {
    pub mode: BoundMode,
    pub epsilon_min: f64,
}

impl Default for BoundRule {
    fn default() -> Self {
        Self {
            mode: BoundMode::NineSigma,
            epsilon_min: DEFAULT_EPSILON_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCalibration {
    pub bound: f64,
    pub mean: f64,
    pub std: f64,
}

impl BoundRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_min > 0.0 && self.epsilon_min.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon_min {} must be positive",
                self.epsilon_min
            )));
        }
        Ok(())
    }

    /// Sample mean, sample standard deviation and the resulting bound.
    pub fn calibrate(&self, his: &[f64]) -> Result<BoundCalibration> {
        if his.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "bound calibration needs at least 2 HI values, got {}",
                his.len()
            )));
        }
        let mean = stats::mean(his);
        let std = stats::sample_std(his);
        let spread = (SIGMA_MULTIPLIER * std).max(self.epsilon_min);
        let bound = match self.mode {
            BoundMode::NineSigma => spread,
            BoundMode::MeanPlusNineSigma => mean + spread,
        };
        Ok(BoundCalibration { bound, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub spec: SensorSpec,
    pub dae: DaeParams,
    pub normalizer: Normalizer,
    pub hi_upper_bound: f64,
    pub burn_in_hi_mean: f64,
    pub burn_in_hi_std: f64,
    /// Seed of the training run that produced `dae`.
    pub train_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiRecord {
    pub sensor_id: String,
    pub t: u64,
    pub hi: f64,
    pub over_bound: bool,
}

impl ComponentModel {
    pub fn window_size(&self) -> usize {
        self.dae.window_size
    }

    /// Health indicator of a raw (un-normalized) window, in normalized units.
    pub fn compute_hi(&self, window: &Tensor) -> Result<f64> {
        let x = Tensor::column(&self.normalizer.normalize(window.as_slice()));
        let recon = self.dae.infer(&x)?;
        Ok(mean_absolute_error(x.as_slice(), recon.as_slice()))
    }

    pub fn is_over_bound(&self, hi: f64) -> bool {
        hi > self.hi_upper_bound
    }

    pub fn step(&self, window: &Tensor, t: u64) -> Result<HiRecord> {
        let hi = self.compute_hi(window)?;
        Ok(HiRecord {
            sensor_id: self.spec.sensor_id.clone(),
            t,
            hi,
            over_bound: self.is_over_bound(hi),
        })
    }
}

/// A fitted component together with its burn-in trace.
#[derive(Debug, Clone)]
pub struct FittedComponent {
    pub model: ComponentModel,
    /// `(window end index, HI)` over every burn-in window.
    pub burn_in_his: Vec<(usize, f64)>,
    pub report: TrainReport,
}

/// Fits the normalizer, fine-tunes the pretrained network on the burn-in
/// windows and calibrates the HI bound on all burn-in windows.
pub fn burn_in_fit(
    spec: &SensorSpec,
    pretrained: &DaeParams,
    burn_in: &SegmentedSeries,
    n: usize,
    stride: usize,
    train_config: &TrainConfig,
    rule: &BoundRule,
) -> Result<FittedComponent> {
    spec.validate()?;
    rule.validate()?;
    if pretrained.window_size != n {
        return Err(Error::Config(format!(
            "pretrained model for sensor {} has window_size {}, configuration uses {}",
            spec.sensor_id, pretrained.window_size, n
        )));
    }
    let values: Vec<f64> = burn_in.values().collect();
    let normalizer = fit_normalizer(&values)?;

    let indexed = make_indexed_windows(burn_in, n, stride);
    if indexed.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "sensor {}: burn-in yields {} windows of size {}, need at least 2",
            spec.sensor_id,
            indexed.len(),
            n
        )));
    }
    let windows: Vec<Tensor> = indexed
        .iter()
        .map(|(_, w)| Tensor::column(&normalizer.normalize(w.as_slice())))
        .collect();

    let (dae, report) = train_dae(pretrained, &windows, train_config)?;

    let mut model = ComponentModel {
        spec: spec.clone(),
        dae,
        normalizer,
        hi_upper_bound: rule.epsilon_min,
        burn_in_hi_mean: 0.0,
        burn_in_hi_std: 0.0,
        train_seed: train_config.seed,
    };
    let mut burn_in_his = Vec::with_capacity(indexed.len());
    for (end, raw) in &indexed {
        burn_in_his.push((*end, model.compute_hi(raw)?));
    }
    let his: Vec<f64> = burn_in_his.iter().map(|(_, h)| *h).collect();
    let cal = rule.calibrate(&his)?;
    model.hi_upper_bound = cal.bound;
    model.burn_in_hi_mean = cal.mean;
    model.burn_in_hi_std = cal.std;

    Ok(FittedComponent {
        model,
        burn_in_his,
        report,
    })
}
