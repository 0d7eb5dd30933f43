//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ringkit::config::ExperimentConfig;
use ringkit_core::estimators::{
    detect_peaks, rate_from_peaks, rate_from_spectrum, spo2_estimate, spo2_ratio, RateBand, SpO2Calibration,
};
use ringkit_core::eval::{merge_folds, metrics, MergeMode};
use ringkit_core::ingest::{
    labels_csv, load_session, make_folds, pair_labels, signals_csv, window_session, write_session, WindowConfig,
    SESSION_FILE,
};
use ringkit_core::learner::{default_feature_plan, featurize, train_with_selection, Dataset, FeatureSchema};
use ringkit_core::preprocess::{bandpass, run_plan, welch_psd, FilterSpec, PreprocessPlan, SpectralParams};
use ringkit_core::signal::{ActivityTag, Channel, RingType, Scenario, VitalKind};
use ringkit_core::synth::{brute_force_dft_argmax, generate, CohortSpec, SynthSegment, SynthSpec, Trajectory};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

/// Peak pipeline on clean pulse trains, HR drawn uniformly from 40-170 BPM.
fn c1_peak_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let band = RateBand::heart();
    let plan = PreprocessPlan::filtered(band.filter);
    let bound = 60.0 / 30.0;
    let (mut windows, mut worst) = (0, 0.0f64);
    for i in 0..500 {
        let hr = rng.random_range(40.0..=170.0);
        let spec = SynthSpec {
            session_id: format!("c1-{i}"),
            segments: vec![SynthSegment::new(ActivityTag::Sitting, 30.0)],
            hr_bpm: Trajectory::constant(hr),
            seed: rng.random(),
            ..SynthSpec::default()
        };
        let s = generate(&spec).map_err(|e| e.to_string())?;
        let cfg = WindowConfig { channels: vec![Channel::PpgIr], ..WindowConfig::default() };
        let w = window_session(&s, &cfg);
        let pairs = pair_labels(&w.windows, &s, VitalKind::Hr);
        check(!pairs.pairs.is_empty(), || format!("pulse train {i} produced no windows"))?;
        for p in &pairs.pairs {
            let x = run_plan(&p.window, Channel::PpgIr, &plan)
                .map_err(|e| e.to_string())?
                .into_samples()
                .expect("samples");
            let peaks = detect_peaks(&x, 100.0, &band).map_err(|e| e.to_string())?;
            let est = rate_from_peaks(peaks.len(), 30.0, &band).per_min;
            let err = (est - p.reference).abs();
            worst = worst.max(err);
            windows += 1;
            check(err <= bound, || format!("HR {hr:.2}: estimate {est:.2}, error {err:.3} > {bound}"))?;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{windows} windows, worst error {worst:.3} BPM <= {bound}, {secs:.1} s"))
}

/// Welch peak picking against the dense-DFT oracle on noisy in-band tones.
fn c2_spectral_oracle() -> Outcome {
    let params = SpectralParams::default();
    let mut summary = Vec::new();
    for (seed, band) in [(2u64, RateBand::heart()), (3, RateBand::respiratory())] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (band.low_hz(), band.high_hz());
        let mut worst = 0.0f64;
        let mut bin = 0.0;
        for _ in 0..200 {
            let f = rng.random_range(lo..=hi);
            let phase = rng.random_range(0.0..2.0 * PI);
            let noise = Normal::new(0.0, (0.5f64 / 10.0).sqrt()).unwrap();
            let x: Vec<f64> = (0..3000)
                .map(|i| (2.0 * PI * f * i as f64 / 100.0 + phase).sin() + noise.sample(&mut rng))
                .collect();
            let spec = welch_psd(&x, 100.0, &params).map_err(|e| e.to_string())?;
            bin = spec.resolution_hz();
            let est = rate_from_spectrum(&spec, &band).map_err(|e| e.to_string())?.per_min / 60.0;
            let oracle = brute_force_dft_argmax(&x, 100.0, lo, hi);
            let d = (est - oracle).abs();
            worst = worst.max(d);
            check(d <= bin, || {
                format!("{:?} tone {f:.4} Hz: welch {est:.4} vs oracle {oracle:.4} (bin {bin})", band.kind)
            })?;
        }
        summary.push(format!("{}: worst {worst:.4} Hz <= bin {bin}", band.kind));
    }
    Ok(format!("200 tones per band; {}", summary.join("; ")))
}

/// Ratio-of-ratios on synthetic channels and the calibration line.
fn c3_spo2_closure() -> Outcome {
    let mut worst = 0.0f64;
    for (i, r) in [0.5, 0.8, 1.0, 1.5].into_iter().enumerate() {
        let spec = SynthSpec {
            session_id: format!("c3-{i}"),
            target_r: r,
            segments: vec![SynthSegment::new(ActivityTag::Sitting, 90.0)],
            seed: 30 + i as u64,
            ..SynthSpec::default()
        };
        let s = generate(&spec).map_err(|e| e.to_string())?;
        let w = window_session(&s, &WindowConfig::default());
        check(w.windows.len() == 3, || format!("expected 3 windows, got {}", w.windows.len()))?;
        for win in &w.windows {
            let ir = win.require(Channel::PpgIr).map_err(|e| e.to_string())?;
            let red = win.require(Channel::PpgRed).map_err(|e| e.to_string())?;
            let got = spo2_ratio(ir, red, win.rate_hz()).map_err(|e| e.to_string())?;
            worst = worst.max((got - r).abs());
            check((got - r).abs() <= 0.02, || format!("target R {r}: measured {got:.4}"))?;
        }
    }
    for cal in [SpO2Calibration::REFLECTIVE, SpO2Calibration::TRANSMISSIVE] {
        for k in 0..=300 {
            let r = 0.2 + k as f64 * 0.01;
            let got = spo2_estimate(r, &cal).percent;
            let want = cal.a - cal.b * r;
            check((got - want).abs() <= 1e-9, || format!("({}, {}) at R {r}: {got} vs {want}", cal.a, cal.b))?;
        }
    }
    Ok(format!("R in {{0.5, 0.8, 1.0, 1.5}}: worst |R - target| {worst:.4} <= 0.02; a - b*R exact for 99/6 and 87/-6"))
}

/// Hand-computed metrics and pooled fold merging.
fn c4_metrics() -> Outcome {
    let m = metrics(&[(80.0, 82.0), (90.0, 88.0)]).map_err(|e| e.to_string())?;
    let r = m.pearson.ok_or("pearson undefined")?;
    let mape = m.mape.ok_or("mape undefined")?;
    check(m.mae == 2.0 && m.rmse == 2.0, || format!("MAE {} RMSE {}", m.mae, m.rmse))?;
    check((mape - 2.36).abs() <= 0.01, || format!("MAPE {mape}"))?;
    check((r - 1.0).abs() < 1e-12, || format!("r {r}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 6.0).unwrap();
    let pairs: Vec<(f64, f64)> = (0..400)
        .map(|_| {
            let y: f64 = rng.random_range(40.0..170.0);
            (y, y + noise.sample(&mut rng))
        })
        .collect();
    let whole = metrics(&pairs).map_err(|e| e.to_string())?;
    for trial in 0..50 {
        let k = rng.random_range(2..=8);
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let mut folds = vec![Vec::new(); k];
        for p in shuffled {
            folds[rng.random_range(0..k)].push(p);
        }
        let merged = merge_folds(&folds, MergeMode::Pooled).map_err(|e| e.to_string())?;
        check(merged == whole, || format!("partition {trial}: {merged:?} != {whole:?}"))?;
    }
    Ok(format!("MAE 2.0, RMSE 2.0, MAPE {mape:.4}, r {r:.1}; pooled merge bit-identical on 50 partitions"))
}

fn tone(f: f64) -> Vec<f64> {
    (0..3000).map(|i| (2.0 * PI * f * i as f64 / 100.0).sin()).collect()
}

fn trimmed_amplitude(x: &[f64]) -> f64 {
    let core = &x[100..x.len() - 100];
    let rms = (core.iter().map(|v| v * v).sum::<f64>() / core.len() as f64).sqrt();
    rms * 2f64.sqrt()
}

/// Cardiac band-pass: passband gain, stopband attenuation, zero lag.
fn c5_filter() -> Outcome {
    let spec = FilterSpec::cardiac();
    let pass = trimmed_amplitude(&bandpass(&tone(1.5), 100.0, &spec).map_err(|e| e.to_string())?);
    check((pass - 1.0).abs() <= 0.05, || format!("1.5 Hz amplitude {pass:.4}"))?;
    let mut atten = Vec::new();
    for f in [0.05, 10.0] {
        let a = trimmed_amplitude(&bandpass(&tone(f), 100.0, &spec).map_err(|e| e.to_string())?);
        let db = -20.0 * a.log10();
        check(db >= 20.0, || format!("{f} Hz attenuated only {db:.1} dB"))?;
        atten.push(format!("{f} Hz {db:.1} dB"));
    }
    let x = tone(1.5);
    let y = bandpass(&x, 100.0, &spec).map_err(|e| e.to_string())?;
    let xcorr = |lag: i64| -> f64 {
        (100..2900i64)
            .map(|i| x[i as usize] * y[(i + lag) as usize])
            .sum()
    };
    let lag = (-50..=50i64).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    check(lag == 0, || format!("lag {lag} samples"))?;
    Ok(format!("1.5 Hz amplitude {pass:.4}; {}; lag 0 samples", atten.join(", ")))
}

/// Subject folds on a 34-subject cohort and ridge isolation from test rows.
fn c6_protocol() -> Outcome {
    let cohort = CohortSpec { subjects: 34, seed: 6, ..CohortSpec::default() };
    let specs = cohort.sessions();
    let subjects: Vec<String> = specs.iter().map(|s| s.subject_id.clone()).collect();
    let plan = make_folds(&subjects, 5, 6).map_err(|e| e.to_string())?;
    let mut sizes = plan.fold_sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    check(sizes == [7, 7, 7, 7, 6], || format!("fold sizes {sizes:?}"))?;
    let mut tested: BTreeMap<String, usize> = BTreeMap::new();
    for f in 0..5 {
        let s = plan.split(f);
        check(s.train.is_disjoint(&s.test) && s.train.is_disjoint(&s.validation), || {
            format!("fold {f} overlaps")
        })?;
        check(s.validation.is_disjoint(&s.test), || format!("fold {f} validation overlaps test"))?;
        let all: BTreeSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
        check(all.len() == 34, || format!("fold {f} covers {} subjects", all.len()))?;
        for t in s.test {
            *tested.entry(t).or_default() += 1;
        }
    }
    check(tested.len() == 34 && tested.values().all(|&c| c == 1), || "a subject is tested twice or never".into())?;

    let channels = [Channel::PpgIr, Channel::PpgRed, Channel::AccX, Channel::AccY, Channel::AccZ];
    let feature_plan = default_feature_plan();
    let schema = Arc::new(FeatureSchema::for_channels(&channels));
    let mut rows: Vec<(String, Vec<f64>, f64)> = Vec::new();
    for spec in &specs {
        let s = generate(spec).map_err(|e| e.to_string())?;
        let w = window_session(&s, &WindowConfig::default());
        for p in pair_labels(&w.windows, &s, VitalKind::Hr).pairs {
            let f = featurize(&p.window, &channels, &feature_plan).map_err(|e| e.to_string())?;
            rows.push((p.subject_id.clone(), f.values, p.reference));
        }
    }
    let split = plan.split(0);
    let build = |rows: &[(String, Vec<f64>, f64)], set: &BTreeSet<String>| {
        let mut d = Dataset::new(VitalKind::Hr, schema.clone());
        for (s, x, y) in rows {
            if set.contains(s) {
                d.push(x.clone(), *y);
            }
        }
        d
    };
    let fit = |rows: &[(String, Vec<f64>, f64)]| {
        train_with_selection(&build(rows, &split.train), Some(&build(rows, &split.validation)), &[0.01, 0.1, 1.0, 10.0, 100.0])
    };
    let (clean, _) = fit(&rows).map_err(|e| e.to_string())?;
    let mut corrupted = rows.clone();
    let mut n_corrupt = 0;
    for (s, x, y) in corrupted.iter_mut() {
        if split.test.contains(s) {
            x.iter_mut().for_each(|v| *v = 1e9 - *v);
            *y = -500.0;
            n_corrupt += 1;
        }
    }
    let (dirty, _) = fit(&corrupted).map_err(|e| e.to_string())?;
    check(clean == dirty, || "model changed after corrupting the test fold".into())?;
    check(n_corrupt > 0, || "no test rows to corrupt".into())?;
    Ok(format!(
        "fold sizes {sizes:?}, subject-disjoint, each subject tested once; ridge bit-identical after corrupting {n_corrupt} test rows"
    ))
}

fn experiment(method: &str, task: &str, channels: &str, subjects: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"schema_version": 1, "dataset": {{"cohort": {{"subjects": {subjects}, "seed": 7}}}},
            "task": "{task}", "method": "{method}", "channels": {channels}, "seed": 7}}"#
    ))
    .expect("valid config")
}

/// Motion-scenario HR error exceeds stationary error for peak and fft.
fn c7_degradation() -> Outcome {
    let mut out = Vec::new();
    for method in ["peak", "fft"] {
        let cfg = experiment(method, "hr", r#"["ppg_ir"]"#, 34);
        let run = ringkit::execute(&cfg).map_err(|e| e.to_string())?;
        let mae = |scenario: Scenario| {
            run.report
                .iter()
                .find(|r| r.scenario == scenario.as_str())
                .map(|r| r.metrics.mae)
                .ok_or(format!("{method}: no {} row", scenario.as_str()))
        };
        let (m, s) = (mae(Scenario::Motion)?, mae(Scenario::Stationary)?);
        check(m > s, || format!("{method}: motion MAE {m:.3} <= stationary {s:.3}"))?;
        out.push(format!("{method} motion {m:.2} > stationary {s:.2}"));
    }
    Ok(out.join("; "))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Identical artifacts for identical (config, seed) at any worker count.
fn c8_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for (method, task, channels) in [
        ("ridge", "hr", r#"["ppg_ir", "ppg_red", "acc_x", "acc_y", "acc_z"]"#),
        ("fft", "rr", r#"["ppg_ir"]"#),
    ] {
        let cfg = experiment(method, task, channels, 12);
        let cfg_path = tmp.path().join(format!("{method}.json"));
        std::fs::write(&cfg_path, cfg.canonical_json()).map_err(|e| e.to_string())?;
        let mut trees = Vec::new();
        for jobs in [1usize, 2, 4, 8] {
            let out = tmp.path().join(format!("{method}-lib-{jobs}"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
            pool.install(|| ringkit::run(&cfg, &out)).map_err(|e| e.to_string())?;
            trees.push((format!("in-process jobs={jobs}"), read_tree(&out)));
        }
        for jobs in ["1", "3"] {
            let out = tmp.path().join(format!("{method}-bin-{jobs}"));
            let status = Command::new(env!("CARGO_BIN_EXE_ringkit"))
                .args(["run", "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "7", "--jobs", jobs])
                .status()
                .map_err(|e| e.to_string())?;
            check(status.success(), || format!("binary exited with {status}"))?;
            trees.push((format!("binary --jobs {jobs}"), read_tree(&out)));
        }
        let (first_name, first) = &trees[0];
        check(first.contains_key("report.csv") && first.contains_key("pairs.csv"), || "missing reports".into())?;
        for (name, t) in &trees[1..] {
            check(t == first, || format!("{method}: {name} differs from {first_name}"))?;
        }
        checked.push(format!("{method}/{task} ({} files)", first.len()));
    }
    Ok(format!("{} byte-identical across jobs 1/2/4/8 and two binary runs", checked.join(", ")))
}

/// synth -> write -> load -> write leaves every file unchanged.
fn c9_roundtrip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let specs = CohortSpec { subjects: 3, seed: 9, ..CohortSpec::default() }.sessions();
    for spec in specs.iter().chain([&SynthSpec { ring_type: RingType::Transmissive, noise_snr_db: Some(3.0), ..SynthSpec::default() }]) {
        let s = generate(spec).map_err(|e| e.to_string())?;
        let a = tmp.path().join(format!("{}-a", spec.session_id));
        let b = tmp.path().join(format!("{}-b", spec.session_id));
        write_session(&s, &a).map_err(|e| e.to_string())?;
        let loaded = load_session(&a).map_err(|e| e.to_string())?;
        check(loaded.report.samples_dropped == 0 && loaded.report.labels_dropped == 0, || "rows dropped on load".into())?;
        write_session(&loaded.record, &b).map_err(|e| e.to_string())?;
        check(read_tree(&a) == read_tree(&b), || format!("{}: files differ after round trip", spec.session_id))?;
        check(signals_csv(&s) == signals_csv(&loaded.record), || "signals body differs".into())?;
        check(labels_csv(&s) == labels_csv(&loaded.record), || "labels body differs".into())?;
        check(a.join(SESSION_FILE).is_file(), || "session.json missing".into())?;
    }
    Ok(format!("{} sessions: signals.csv, labels.csv and session.json identical", specs.len() + 1))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("peak-count HR exactness", c1_peak_exactness),
        ("spectral peak vs DFT oracle", c2_spectral_oracle),
        ("SpO2 ratio and calibration closure", c3_spo2_closure),
        ("metric hand checks and fold merging", c4_metrics),
        ("band-pass filter contract", c5_filter),
        ("fold protocol invariants", c6_protocol),
        ("motion degradation ordering", c7_degradation),
        ("end-to-end determinism", c8_determinism),
        ("session round trip", c9_roundtrip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
