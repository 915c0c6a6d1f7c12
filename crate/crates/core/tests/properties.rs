mod common;

use std::collections::BTreeMap;

use modhi::component::{fit_normalizer, make_indexed_windows, BoundRule, ComponentModel, ModelKind, SensorSpec};
use modhi::data::cmapss::parse_cmapss;
use modhi::data::model_file::{decode, encode};
use modhi::data::ncmapss::{cruise_runs, filter_cruise, CruiseFilter};
use modhi::data::SegmentedSeries;
use modhi::nn::{DaeParams, Tensor};
use modhi::supervisor::{calibrate_joint_bound, joint_hi};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn his_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0f64..10.0, k),
            prop::collection::vec(0.01f64..5.0, k),
        )
    })
}

fn keyed(values: &[f64]) -> BTreeMap<String, f64> {
    values.iter().enumerate().map(|(i, v)| (format!("s{i}"), *v)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn joint_is_sandwiched((his, w) in his_and_weights()) {
        let j = joint_hi(&keyed(&his), &keyed(&w)).unwrap();
        let lo = his.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = his.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= j && j <= hi + 1e-12);
    }

    #[test]
    fn joint_weight_scale_invariant((his, w) in his_and_weights(), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let a = joint_hi(&keyed(&his), &keyed(&w)).unwrap();
        let b = joint_hi(&keyed(&his), &keyed(&scaled)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn joint_equal_weights_is_mean(his in prop::collection::vec(0.0f64..10.0, 1..8), w in 0.01f64..5.0) {
        let j = joint_hi(&keyed(&his), &keyed(&vec![w; his.len()])).unwrap();
        prop_assert_eq!(j, his.iter().sum::<f64>() / his.len() as f64);
    }

    #[test]
    fn joint_monotone((his, w) in his_and_weights(), idx in 0usize..8, delta in 0.0f64..5.0) {
        let i = idx % his.len();
        let mut up = his.clone();
        up[i] += delta;
        let a = joint_hi(&keyed(&his), &keyed(&w)).unwrap();
        let b = joint_hi(&keyed(&up), &keyed(&w)).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn joint_bound_scales(series in prop::collection::vec(0.0f64..5.0, 2..50), k in 0.1f64..10.0) {
        let rule = BoundRule { epsilon_min: 1e-300, ..BoundRule::default() };
        let scaled: Vec<f64> = series.iter().map(|v| v * k).collect();
        let a = calibrate_joint_bound(&series, &rule).unwrap().bound;
        let b = calibrate_joint_bound(&scaled, &rule).unwrap().bound;
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1e-12));
    }

    #[test]
    fn windows_match_brute_force(
        lengths in prop::collection::vec(1usize..40, 1..6),
        n in 1usize..12,
        stride in 1usize..5,
    ) {
        let mut next = 0.0;
        let series = SegmentedSeries::from_segments(lengths.iter().enumerate().map(|(k, &l)| {
            let seg: Vec<f64> = (0..l).map(|_| { next += 1.0; next }).collect();
            (k as u64, seg)
        })).unwrap();
        let got = make_indexed_windows(&series, n, stride);
        let want = common::brute_force_windows(&lengths, n, stride);
        prop_assert_eq!(got.len(), want.len());
        let flat: Vec<f64> = series.values().collect();
        for ((end, w), (a, b)) in got.iter().zip(&want) {
            prop_assert_eq!(*end, *b);
            prop_assert_eq!(w.as_slice(), &flat[*a..=*b]);
        }
    }

    #[test]
    fn cruise_runs_are_maximal(seed in any::<u64>(), len in 0usize..120, min_len in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = common::random_altitude_trace(&mut rng, len);
        let f = CruiseFilter { min_len, ..CruiseFilter::default() };
        prop_assert_eq!(cruise_runs(&records, &f), common::brute_force_runs(&records, &f));
        let series = filter_cruise(&records, &f, &["x".to_string()]).unwrap();
        let total: usize = cruise_runs(&records, &f).iter().map(|(s, e)| e - s).sum();
        prop_assert_eq!(series["x"].total_len(), total);
    }

    #[test]
    fn model_bytes_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_model(&mut rng);
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        prop_assert!(common::models_bit_equal(&m, &back));
        prop_assert_eq!(encode(&back), bytes.clone());
        let cut = (seed as usize) % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn hi_is_affine_invariant(
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
        shift in -1e3f64..1e3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dae = DaeParams::init(8, &mut rng);
        let base: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.37 + seed as f64 % 7.0).sin()).collect();
        let moved: Vec<f64> = base.iter().map(|v| scale * v + shift).collect();
        let model = |series: &[f64]| ComponentModel {
            spec: SensorSpec::new("s", ModelKind::T),
            dae: dae.clone(),
            normalizer: fit_normalizer(series).unwrap(),
            hi_upper_bound: 1.0,
            burn_in_hi_mean: 0.0,
            burn_in_hi_std: 0.0,
            train_seed: 0,
        };
        let a = model(&base).compute_hi(&Tensor::column(&base[10..18])).unwrap();
        let b = model(&moved).compute_hi(&Tensor::column(&moved[10..18])).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn cmapss_keeps_every_row(rows in prop::collection::vec((1u32..5, 1u32..400, -1e3f64..1e3), 0..40)) {
        let mut text = String::new();
        for (u, c, v) in &rows {
            text.push_str(&format!("{u} {c}"));
            for k in 0..24 {
                text.push_str(&format!(" {}", v + k as f64));
            }
            text.push_str("\n\n");
        }
        let recs = parse_cmapss(text.as_bytes()).unwrap();
        prop_assert_eq!(recs.len(), rows.len());
        for (r, (u, c, v)) in recs.iter().zip(&rows) {
            prop_assert_eq!((r.unit, r.cycle), (*u, *c));
            prop_assert_eq!(r.op_settings[0], *v);
        }
    }
}
