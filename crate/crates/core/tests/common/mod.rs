//! Oracles and generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use modhi::component::{ComponentModel, ModelKind, Normalizer, SensorSpec};
use modhi::data::ncmapss::{CruiseFilter, NcmapssRecord};
use modhi::data::SegmentedSeries;
use modhi::nn::{DaeParams, Parameters};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Every maximal qualifying run, found by checking all `(start, end)` pairs.
pub fn brute_force_runs(records: &[NcmapssRecord], f: &CruiseFilter) -> Vec<(usize, usize)> {
    let n = records.len();
    let ok = |s: usize, e: usize| -> bool {
        (s..e).all(|i| f.in_band(records[i].altitude))
            && (s + 1..e).all(|i| records[i].flight == records[s].flight && records[i - 1].time <= records[i].time)
    };
    let mut out = Vec::new();
    for s in 0..n {
        for e in s + 1..=n {
            if !ok(s, e) {
                continue;
            }
            let left_max = s == 0 || !ok(s - 1, e);
            let right_max = e == n || !ok(s, e + 1);
            if left_max && right_max && e - s >= f.min_len {
                out.push((s, e));
            }
        }
    }
    out
}

/// Every window of length `n` at offsets `0, stride, ...` inside each
/// segment, with its global end index.
pub fn brute_force_windows(lengths: &[usize], n: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    let seg_of = |g: usize| -> usize {
        let mut acc = 0;
        for (k, l) in lengths.iter().enumerate() {
            acc += l;
            if g < acc {
                return k;
            }
        }
        unreachable!()
    };
    for &len in lengths {
        for start in (0..len).step_by(stride) {
            if start + n <= len {
                let (a, b) = (offset + start, offset + start + n - 1);
                assert_eq!(seg_of(a), seg_of(b));
                out.push((a, b));
            }
        }
        offset += len;
    }
    out
}

/// Random altitude trace over a few flights, with occasional time resets.
pub fn random_altitude_trace<R: Rng>(rng: &mut R, len: usize) -> Vec<NcmapssRecord> {
    let mut flight = 1;
    let mut time = 0.0;
    let mut alt: f64 = rng.random_range(20_000.0..32_000.0);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.05) {
                flight += 1;
            }
            if rng.random_bool(0.03) {
                time = 0.0;
            } else {
                time += 1.0;
            }
            if rng.random_bool(0.3) {
                alt = rng.random_range(20_000.0..32_000.0);
            }
            if rng.random_bool(0.05) {
                alt = [25_000.0, 30_000.0][rng.random_range(0..2)];
            }
            NcmapssRecord {
                time,
                altitude: alt,
                flight,
                unit: None,
                sensors: [("x".to_string(), time)].into_iter().collect(),
            }
        })
        .collect()
}

/// A model with random architecture size, parameters and metadata.
pub fn random_model<R: Rng>(rng: &mut R) -> ComponentModel {
    let n = rng.random_range(1..=16);
    let mut dae = DaeParams::init(n, rng);
    for t in dae.tensors_mut() {
        for v in t.as_mut_slice() {
            *v = match rng.random_range(0..4) {
                0 => loop {
                    let v = f64::from_bits(rng.random());
                    if v.is_finite() {
                        break v;
                    }
                },
                1 => -0.0,
                _ => rng.random_range(-10.0..10.0),
            };
        }
    }
    dae.dropout_p = rng.random_range(0.0..1.0);
    let id: String = (0..rng.random_range(0..12))
        .map(|_| rng.random_range('a'..='z'))
        .collect();
    let kind = if rng.random_bool(0.5) {
        ModelKind::T
    } else {
        ModelKind::C
    };
    ComponentModel {
        spec: SensorSpec::new(id + "é", kind).with_weight(rng.random_range(0.01..5.0)),
        dae,
        normalizer: Normalizer {
            mean: rng.random_range(-1e4..1e4),
            std: rng.random_range(1e-6..1e3),
            degenerate: rng.random_bool(0.2),
        },
        hi_upper_bound: rng.random(),
        burn_in_hi_mean: rng.random(),
        burn_in_hi_std: rng.random(),
        train_seed: rng.random(),
    }
}

/// Bitwise equality of every persisted field.
pub fn models_bit_equal(a: &ComponentModel, b: &ComponentModel) -> bool {
    let scalars = |m: &ComponentModel| {
        [
            m.dae.dropout_p,
            m.normalizer.mean,
            m.normalizer.std,
            m.spec.weight,
            m.hi_upper_bound,
            m.burn_in_hi_mean,
            m.burn_in_hi_std,
        ]
        .map(f64::to_bits)
    };
    let params = |m: &ComponentModel| -> Vec<(Vec<usize>, Vec<u64>)> {
        m.dae
            .tensors()
            .iter()
            .map(|t| (t.shape().to_vec(), t.as_slice().iter().map(|v| v.to_bits()).collect()))
            .collect()
    };
    a.dae.window_size == b.dae.window_size
        && a.train_seed == b.train_seed
        && a.spec.sensor_id == b.spec.sensor_id
        && a.spec.model_kind == b.spec.model_kind
        && a.normalizer.degenerate == b.normalizer.degenerate
        && scalars(a) == scalars(b)
        && params(a) == params(b)
}

/// Unit-variance noise for `onset` samples, then a linear mean drift that
/// reaches `+peak` at sample `len` (1-based).
pub fn drift_series<R: Rng>(rng: &mut R, onset: usize, len: usize, peak: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    (1..=len)
        .map(|t| {
            let d = if t > onset {
                peak * (t - onset) as f64 / (len - onset) as f64
            } else {
                0.0
            };
            noise.sample(rng) + d
        })
        .collect()
}

/// Synthetic N-CMAPSS-style records: each flight climbs, cruises inside the
/// band for `cruise` records and descends. `SmLPC` trends downwards from
/// flight `drift_from` on; the other three sensors stay stationary.
pub fn synthetic_ncmapss<R: Rng>(
    rng: &mut R,
    flights: usize,
    cruise: usize,
    drift_from: usize,
    drift_per_flight: f64,
) -> Vec<NcmapssRecord> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut out = Vec::new();
    for f in 1..=flights {
        let ramp = 40;
        let total = ramp + cruise + ramp;
        let drift = if f >= drift_from {
            -drift_per_flight * (f - drift_from + 1) as f64
        } else {
            0.0
        };
        for i in 0..total {
            let altitude = if i < ramp {
                3_000.0 + 22_000.0 * i as f64 / ramp as f64 - 1.0
            } else if i < ramp + cruise {
                27_500.0 + 500.0 * (i as f64 * 0.01).sin()
            } else {
                24_999.0 - 22_000.0 * (i - ramp - cruise) as f64 / ramp as f64
            };
            let phase = i as f64 * 0.05;
            let progress = if i >= ramp && i < ramp + cruise {
                (i - ramp) as f64 / cruise as f64
            } else {
                0.0
            };
            let mut sensors = BTreeMap::new();
            sensors.insert("T40".to_string(), 1_200.0 + 3.0 * phase.sin() + noise.sample(rng));
            sensors.insert(
                "T2".to_string(),
                480.0 + 2.0 * (phase * 0.7).cos() + 0.5 * noise.sample(rng),
            );
            sensors.insert(
                "SmHPC".to_string(),
                20.0 + 0.3 * (phase * 1.3).sin() + 0.1 * noise.sample(rng),
            );
            sensors.insert(
                "SmLPC".to_string(),
                6.0 + 0.2 * (phase * 0.9).sin() + 0.05 * noise.sample(rng) + drift * (1.0 + progress),
            );
            out.push(NcmapssRecord {
                time: i as f64,
                altitude,
                flight: f as i64,
                unit: Some(2),
                sensors,
            });
        }
    }
    out
}

pub fn segment_lengths(series: &BTreeMap<String, SegmentedSeries>) -> Vec<usize> {
    series.values().next().map(|s| s.lengths()).unwrap_or_default()
}
