//! Property-based invariants across modules.

use acoustic_repro::analysis::{boxplot_stats, deviation, quantile};
use acoustic_repro::dataset::{denormalize, normalize, rotate, Datapoint};
use acoustic_repro::lbm::{self, Field2D, PulseSpec, SimConfig};
use acoustic_repro::msnet::spatial_gradient;
use acoustic_repro::nn::{EntropySeed, Reducer, SummationPolicy};
use acoustic_repro::rollout::energy_correction;
use proptest::prelude::*;

fn field(n: usize, values: Vec<f64>) -> Field2D<f64> {
    Field2D::from_values(n, values, 0).unwrap()
}

fn datapoint(n: usize, seed: Vec<f64>) -> Datapoint<f64> {
    let frame = |k: usize| field(n, seed.iter().map(|v| v * (1.0 + k as f64 * 0.1)).collect());
    Datapoint {
        inputs: std::array::from_fn(frame),
        target: frame(4),
        source_sim: 0,
        source_offset: 0,
    }
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

proptest! {
    #[test]
    fn deviation_is_bounded(values in prop::collection::vec(-1e3f64..1e3, 2..12)) {
        let d = deviation(&values).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn deviation_is_scale_invariant(values in prop::collection::vec(-1e3f64..1e3, 2..12), c in prop_oneof![-1e6f64..-1e-6, 1e-6f64..1e6]) {
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let (a, b) = (deviation(&values).unwrap(), deviation(&scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
    }

    #[test]
    fn boxplot_matches_sort_oracle(values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let stats = boxplot_stats(&values).unwrap();
        let mut s = values.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = |p: f64| {
            let h = (s.len() - 1) as f64 * p;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        };
        prop_assert_eq!(stats.median, rank(0.5));
        prop_assert_eq!(stats.q1, rank(0.25));
        prop_assert_eq!(stats.q3, rank(0.75));
        prop_assert!(stats.q1 <= stats.median && stats.median <= stats.q3);
        prop_assert_eq!(quantile(&s, 0.0), s[0]);
        prop_assert_eq!(quantile(&s, 1.0), s[s.len() - 1]);
    }

    #[test]
    fn four_quarter_turns_are_identity(n in 2usize..9, k in 0usize..4, seed in prop::collection::vec(-1.0f64..1.0, 81)) {
        let dp = datapoint(n, seed[..n * n].to_vec());
        prop_assert_eq!(rotate(&rotate(&dp, k), 4 - k), dp.clone());
        let mut a = rotate(&dp, k).target.values;
        let mut b = dp.target.values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalization_roundtrip_within_one_ulp(seed in prop::collection::vec(-1e-3f64..1e-3, 16)) {
        let dp = datapoint(4, seed);
        prop_assume!(normalize(&dp).is_ok());
        let (norm, scale) = normalize(&dp).unwrap();
        let back = denormalize(&norm, scale);
        for (a, b) in dp.frames().zip(back.frames()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(ulp_distance(*x, *y) <= 1, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn correction_restores_mean(values in prop::collection::vec(-1.0f64..1.0, 64), target in -1.0f64..1.0) {
        let corrected = energy_correction(&field(8, values), target);
        prop_assert!((corrected.mean() - target).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_affine_plane_is_exact(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, h in 5usize..9, w in 5usize..9) {
        let plane: Vec<f64> = (0..h * w).map(|i| a * (i % w) as f64 + b * (i / w) as f64 + c).collect();
        let (gx, gy) = spatial_gradient(&plane, h, w).unwrap();
        prop_assert!(gx.iter().all(|g| (g - a).abs() < 1e-12));
        prop_assert!(gy.iter().all(|g| (g - b).abs() < 1e-12));
    }

    #[test]
    fn shuffled_sums_of_integers_are_exact(values in prop::collection::vec(-1000i32..1000, 0..64), seed in any::<[u8; 32]>()) {
        let vals: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let mut order = Vec::new();
        let mut shuffled = SummationPolicy::replay(EntropySeed(seed)).reducer();
        let exact: f64 = values.iter().map(|&v| v as f64).sum();
        prop_assert_eq!(shuffled.sum(&vals, &mut order), exact);
        prop_assert_eq!(Reducer::fixed().sum(&vals, &mut order), exact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lbm_conserves_mass(cx in 0.3f64..0.7, cy in 0.3f64..0.7, amp in -2e-3f64..2e-3, hw in 1.5f64..4.0) {
        let cfg = SimConfig { grid_size: 16, total_timesteps: 24, ..SimConfig::paper() };
        let pulses = [PulseSpec::new((cx, cy), amp, hw)];
        let mut state = lbm::init_pulses::<f64>(&cfg, &pulses).unwrap();
        let m0 = state.total_mass();
        let mut scratch = Vec::new();
        for _ in 0..cfg.total_timesteps {
            state.advance(cfg.relaxation_time, &mut scratch).unwrap();
        }
        prop_assert!(((state.total_mass() - m0) / m0).abs() < 1e-12);
    }

    #[test]
    fn lbm_commutes_with_quarter_turns(cx in 0.3f64..0.7, cy in 0.3f64..0.7, k in 1usize..4) {
        let cfg = SimConfig { grid_size: 16, total_timesteps: 16, ..SimConfig::paper() };
        let pulse = PulseSpec::new((cx, cy), 1e-3, 2.5);
        let frames = lbm::run_simulation::<f64>(&cfg, &[pulse]).unwrap();
        // Same pulse rotated about the domain center.
        let (mut px, mut py) = (cx - 0.5, cy - 0.5);
        for _ in 0..k {
            (px, py) = (py, -px);
        }
        let rotated = PulseSpec::new((0.5 + px, 0.5 + py), 1e-3, 2.5);
        let frames_r = lbm::run_simulation::<f64>(&cfg, &[rotated]).unwrap();
        for (a, b) in frames.iter().zip(&frames_r) {
            let turned = a.transformed(k, false);
            let err = turned.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            prop_assert!(err < 1e-12, "max error {err:e}");
        }
    }
}
