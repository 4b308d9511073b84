mod common;

use rand::Rng;

use pdfault_core::analysis::Analyzer;
use pdfault_core::detect::{detect_indices, detect_pulses, DetectParams};
use pdfault_core::io::synth::{archetype_value, SynthScenario};
use pdfault_core::noise::{estimate_noise_level, section_maxima};
use pdfault_core::preprocess::{flatten, phase_correct, SavGolKernel};
use pdfault_core::{FlatSignal, Phase, PipelineConfig};

use common::*;

#[test]
fn savgol_kernels_match_least_squares() {
    for window in [3, 5, 7, 11, 21, 51, 99] {
        for order in 0..=(window - 1).min(5) {
            let k = SavGolKernel::new(window, order).unwrap();
            let oracle = savgol_oracle(window, order);
            for (a, b) in k.coefficients.iter().zip(&oracle) {
                assert!(
                    (a - b).abs() < 1e-10,
                    "window {window} order {order}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn flattening_removes_the_fundamental() {
    let n = 800_000;
    let x: Vec<f64> = (0..n)
        .map(|i| 60.0 * (std::f64::consts::TAU * i as f64 / n as f64 + 0.3).sin())
        .collect();
    let k = SavGolKernel::new(99, 3).unwrap();
    let flat = flatten(&x, &k);
    let worst = flat[49..n - 49].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-9, "{worst}");
}

/// Ten damped oscillations over low uniform noise on a full-length phase.
fn ten_oscillations() -> (Vec<f64>, Vec<usize>) {
    let mut r = rng(21);
    let n = 800_000;
    let mut s: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
    let onsets: Vec<usize> = (0..10)
        .map(|i| 30_000 + i * 77_000 + r.random_range(0..1000))
        .collect();
    for &p in &onsets {
        let amp = r.random_range(10.0..40.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        for t in 0..80 {
            s[p + t] += amp * archetype_value(0, t as i64);
        }
    }
    (s, onsets)
}

#[test]
fn ten_injected_oscillations_give_ten_pulses() {
    let (s, onsets) = ten_oscillations();
    let cfg = PipelineConfig::default();
    let a = estimate_noise_level(
        &section_maxima(&s, cfg.n_noise, cfg.l_noise).unwrap(),
        cfg.n_cover,
        cfg.c_max,
        cfg.c_step,
        cfg.c_step_descending,
    );
    let flat = FlatSignal {
        samples: s.clone(),
        noise_level: a,
        phase_shift: 0,
    };
    let pulses = detect_pulses(&flat, Phase::A, &DetectParams::default());
    assert_eq!(pulses.len(), 10, "noise level {a}");
    for (p, &o) in pulses.iter().zip(&onsets) {
        assert!(p.index.abs_diff(o) <= 3, "{} vs {o}", p.index);
        assert!(p.height > a && p.height < 50.0);
    }
    assert_eq!(
        pulses
            .iter()
            .map(|p| p.index)
            .collect::<std::collections::BTreeSet<_>>(),
        brute_force_pulses(&s, a, &DetectParams::default())
    );
}

#[test]
fn pure_noise_below_level_has_no_pulses() {
    let mut r = rng(22);
    let s: Vec<f64> = (0..800_000).map(|_| r.random_range(-1.0..1.0)).collect();
    assert!(detect_indices(&s, 1.5, &DetectParams::default()).is_empty());
}

#[test]
fn pulse_train_beyond_one_pass_admitted_by_three_passes() {
    // eight pulses per section with three taken per pass
    let params = scaled_detect_params();
    let mut r = rng(23);
    let mut s: Vec<f64> = (0..20_000).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut planted = Vec::new();
    for j in 0..20 {
        for m in 0..8 {
            let p = j * 1000 + 40 + m * 120;
            s[p] = r.random_range(5.0..45.0);
            planted.push(p);
        }
    }
    let got = detect_indices(&s, 2.0, &params);
    assert_eq!(got, planted);
    assert_eq!(
        got.iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>(),
        brute_force_pulses(&s, 2.0, &params)
    );
}

#[test]
fn pulses_closer_than_the_mask_can_be_lost() {
    // a neighbour inside the mask radius of a stronger pulse is zeroed before it can be taken
    let params = DetectParams {
        n_top: 1,
        ..scaled_detect_params()
    };
    let mut s = vec![0.0; 20_000];
    s[500] = 10.0;
    s[540] = 8.0;
    assert_eq!(detect_indices(&s, 2.0, &params), vec![500]);
    assert!(brute_force_pulses(&s, 2.0, &params).contains(&540));
}

#[test]
fn detector_matches_oracle_on_sparse_signals() {
    let params = scaled_detect_params();
    let mut r = rng(24);
    for _ in 0..40 {
        let s = sparse_pulse_signal(&mut r, 20_000, 20);
        let got: std::collections::BTreeSet<usize> =
            detect_indices(&s, 2.0, &params).into_iter().collect();
        assert_eq!(got, brute_force_pulses(&s, 2.0, &params));
    }
}

#[test]
fn corrected_input_reproduces_raw_analysis() {
    let sc = SynthScenario {
        seed: 5,
        n_frames: 2,
        faulty_fraction: 0.5,
        ..Default::default()
    };
    let analyzer = Analyzer::new(&PipelineConfig::default()).unwrap();
    for (frame, _) in sc.frames() {
        let direct = analyzer.analyze_frame(&frame).unwrap();
        let (corrected, shifts) = phase_correct(&frame).unwrap();
        let staged = analyzer.analyze_aligned_frame(&corrected, &shifts).unwrap();
        assert_eq!(direct, staged);
        assert!(direct.pulse_count() > 0);
    }
}
