use proptest::prelude::*;
use ringkit_core::estimators::{detect_peaks, RateBand};
use ringkit_core::preprocess::{bandpass, standardize, welch_psd, FilterSpec, SpectralParams};
use ringkit_core::signal::{ActivityTag, Channel};
use ringkit_core::synth::{generate, SynthSegment, SynthSpec, Trajectory};

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bandpass_is_linear(x in signal(1000), y in signal(1000), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let spec = FilterSpec::cardiac();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = bandpass(&mix, 100.0, &spec).unwrap();
        let fx = bandpass(&x, 100.0, &spec).unwrap();
        let fy = bandpass(&y, 100.0, &spec).unwrap();
        let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn welch_ignores_offset_after_standardization(x in signal(1500), c in -1000.0f64..1000.0) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let p = SpectralParams::default();
        let a = welch_psd(&standardize(&x), 100.0, &p).unwrap();
        let b = welch_psd(&standardize(&shifted), 100.0, &p).unwrap();
        let peak = a.power.iter().fold(0.0f64, |m, v| m.max(*v));
        for (u, v) in a.power.iter().zip(&b.power) {
            prop_assert!((u - v).abs() <= 1e-6 * peak.max(1e-12));
        }
    }

    #[test]
    fn power_is_nonnegative_on_increasing_grid(x in signal(1200)) {
        let s = welch_psd(&x, 100.0, &SpectralParams::default()).unwrap();
        prop_assert!(s.power.iter().all(|p| *p >= 0.0));
        prop_assert!(s.freqs_hz.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(s.freqs_hz[0], 0.0);
        prop_assert!((s.freqs_hz.last().unwrap() - 50.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synth_is_seed_deterministic(seed in any::<u64>(), snr in 0.0f64..30.0) {
        let spec = SynthSpec {
            segments: vec![SynthSegment::new(ActivityTag::Walking, 20.0)],
            noise_snr_db: Some(snr),
            seed,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        prop_assert!(a.violations().is_empty());
        prop_assert_eq!(a, generate(&spec).unwrap());
    }

    #[test]
    fn beat_count_follows_integrated_rate(h0 in 45.0f64..160.0, h1 in 45.0f64..160.0) {
        let spec = SynthSpec {
            segments: vec![SynthSegment::new(ActivityTag::Sitting, 60.0)],
            hr_bpm: Trajectory { knots: vec![(0.0, h0), (60.0, h1)] },
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let band = RateBand::heart();
        let x = bandpass(&standardize(&s.series(Channel::PpgIr).unwrap().values), 100.0, &band.filter).unwrap();
        let beats = detect_peaks(&x, 100.0, &band).unwrap().len() as f64;
        let expected: f64 = (0..6000).map(|i| spec.hr_bpm.at(i as f64 / 100.0) / 6000.0).sum();
        prop_assert!((beats - expected.round()).abs() <= 1.0, "{} vs {}", beats, expected);
    }
}
