//! Pretraining sources and the pretraining routine for the T and C models.

use std::f64::consts::TAU;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::series::SegmentedSeries;
use crate::component::{burn_in_fit, BoundRule, ComponentModel, ModelKind, SensorSpec};
use crate::error::{Error, Result};
use crate::nn::{DaeParams, TrainConfig};

/// Reads one numeric column (by header name) from a headed CSV, or the
/// first column when `column` is `None`.
pub fn load_pretrain_series<R: Read>(reader: R, column: Option<&str>) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let idx = match column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("pretraining CSV has no column named {name:?}")))?,
        None => 0,
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let raw = rec.get(idx).ok_or_else(|| Error::parse(line, "missing field"))?;
        let v = raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(line, format!("{raw:?} is not a finite number")))?;
        out.push(v);
    }
    if out.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pretraining source holds {} values, need at least 2",
            out.len()
        )));
    }
    Ok(out)
}

/// Deterministic stand-in pretraining data.
///
/// `T`: slowly varying temperature-like signal (offset, long sinusoid and a
/// daily harmonic). `C`: oscillatory vibration-like signal with positive
/// lag-1 autocorrelation.
pub fn synth_pretrain_series(kind: ModelKind, length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    (0..length)
        .map(|i| {
            let t = i as f64;
            let e: f64 = noise.sample(&mut rng);
            match kind {
                ModelKind::T => 10.0 + 3.0 * (TAU * t / 2000.0).sin() + (TAU * t / 24.0).sin() + 0.2 * e,
                ModelKind::C => {
                    (TAU * t / 7.0).sin() + 0.6 * (TAU * t / 13.0).sin() + 0.4 * (TAU * t / 29.0).sin() + 0.3 * e
                }
            }
        })
        .collect()
}

/// Trains a freshly initialized network on `series` and calibrates its
/// bound on the same windows. The initialization draws from `config.seed`.
pub fn pretrain_model(
    kind: ModelKind,
    series: &[f64],
    window_size: usize,
    stride: usize,
    config: &TrainConfig,
    rule: &BoundRule,
) -> Result<ComponentModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = DaeParams::init(window_size, &mut rng);
    let spec = SensorSpec::new(format!("pretrain-{kind}"), kind);
    let fitted = burn_in_fit(
        &spec,
        &initial,
        &SegmentedSeries::single(series.to_vec()),
        window_size,
        stride,
        config,
        rule,
    )?;
    Ok(fitted.model)
}
