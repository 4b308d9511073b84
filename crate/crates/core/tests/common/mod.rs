//! Independent reference implementations and input generators shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pdfault_core::analysis::{FrameAnalysis, PhaseAnalysis, PulseRecord};
use pdfault_core::cluster::{ClusterModel, ClusterSet, Scope};
use pdfault_core::detect::DetectParams;
use pdfault_core::features::TemplateBank;
use pdfault_core::metrics::ConfusionCounts;
use pdfault_core::types::{Phase, Pulse, Waveform};

/// Smoothing coefficients by a direct least-squares fit: the centre value of
/// the fitted polynomial is row 0 of the pseudo-inverse of the Vandermonde matrix.
pub fn savgol_oracle(window: usize, order: usize) -> Vec<f64> {
    let h = (window / 2) as f64;
    let a = DMatrix::from_fn(window, order + 1, |i, j| {
        ((i as f64 - h) / h.max(1.0)).powi(j as i32)
    });
    let pinv = a.pseudo_inverse(1e-14).expect("full column rank");
    (0..window).map(|i| pinv[(0, i)]).collect()
}

/// Exhaustive scan: every index that is a maximum of `|s|` over `±n_local`,
/// walked back by the relocation conditions and gated on `a < |s| < cap`.
pub fn brute_force_pulses(s: &[f64], a: f64, p: &DetectParams) -> BTreeSet<usize> {
    let n = s.len();
    let opposite_and_strong = |q: usize, i: usize| -> bool {
        if q < i {
            return false;
        }
        let (x, y) = (s[q - i], s[q]);
        ((x < 0.0 && y > 0.0) || (x > 0.0 && y < 0.0)) && x.abs() > p.c_mag * y.abs()
    };
    let mut out = BTreeSet::new();
    for q in 0..n {
        let lo = q.saturating_sub(p.n_local);
        let hi = (q + p.n_local).min(n - 1);
        let mut is_max = true;
        for j in lo..=hi {
            if s[j].abs() > s[q].abs() {
                is_max = false;
                break;
            }
        }
        if !is_max {
            continue;
        }
        let mut r = q;
        while opposite_and_strong(r, 1) {
            r -= 1;
        }
        if opposite_and_strong(r, 2) {
            r -= 2;
        } else if opposite_and_strong(r, 3) {
            r -= 3;
        }
        let h = s[r].abs();
        if a < h && h < p.amplitude_cap {
            out.insert(r);
        }
    }
    out
}

/// Detector parameters scaled to 20000-sample signals.
pub fn scaled_detect_params() -> DetectParams {
    DetectParams {
        n_sort: 20,
        n_top: 3,
        n_mask: 50,
        n_local: 25,
        c_mag: 0.5,
        amplitude_cap: 50.0,
    }
}

/// Uniform noise in [-1, 1] with at most two well-separated pulses per section.
///
/// Pulse shapes: isolated spike, fast damped oscillation, a strong precursor two
/// samples early, and a two-step opposite-polarity lead-in. Some amplitudes
/// exceed the cap.
pub fn sparse_pulse_signal(rng: &mut ChaCha8Rng, len: usize, sections: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let guard = 60;
    for j in 0..sections {
        let start = j * len / sections + guard;
        let end = (j + 1) * len / sections - guard;
        let count = rng.random_range(0..=2usize);
        let mut placed: Vec<usize> = Vec::new();
        for _ in 0..count {
            let p = rng.random_range(start..end);
            if placed.iter().any(|&q| q.abs_diff(p) < 2 * guard) {
                continue;
            }
            placed.push(p);
            let amp = if rng.random_bool(0.1) {
                rng.random_range(51.0..70.0)
            } else {
                rng.random_range(3.0..48.0)
            };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = amp * sign;
            match rng.random_range(0..4) {
                0 => s[p] = a,
                1 => {
                    for t in 0..20 {
                        let v = (std::f64::consts::TAU * t as f64 / 5.0).cos()
                            * (-(t as f64) / 3.0).exp();
                        s[p + t] = a * v + if t == 0 { 0.0 } else { s[p + t] * 0.1 };
                    }
                }
                2 => {
                    s[p] = a;
                    s[p - 1] = 0.0;
                    s[p - 2] = -0.7 * a;
                }
                _ => {
                    s[p] = a;
                    s[p - 1] = -0.8 * a;
                    s[p - 2] = 0.6 * a;
                }
            }
        }
    }
    s
}

/// Mean RMSE of every window against every template, by explicit loops.
pub fn template_degrees_oracle(windows: &[Vec<f64>], bank: &TemplateBank) -> Vec<f64> {
    let mut out = Vec::new();
    for t in &bank.templates {
        if windows.is_empty() {
            out.push(-1.0);
            continue;
        }
        let mut total = 0.0;
        for w in windows {
            let mut ss = 0.0;
            for k in 0..t.len() {
                ss += (w[k] - t[k]) * (w[k] - t[k]);
            }
            total += (ss / t.len() as f64).sqrt();
        }
        out.push(total / windows.len() as f64);
    }
    out
}

/// Nearest centroid by exhaustive squared distance, lowest index on ties.
pub fn nearest_oracle(centroids: &[Vec<f64>], w: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, m) in centroids.iter().enumerate() {
        let mut d = 0.0;
        for k in 0..w.len() {
            d += (w[k] - m[k]) * (w[k] - m[k]);
        }
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Per-cluster mean RMSE to the centroid, by explicit loops; -1 when empty.
pub fn concentration_oracle(waveforms: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (c, m) in centroids.iter().enumerate() {
        let mut total = 0.0;
        let mut n = 0;
        for w in waveforms {
            if nearest_oracle(centroids, w) != c {
                continue;
            }
            let mut ss = 0.0;
            for k in 0..w.len() {
                ss += (w[k] - m[k]) * (w[k] - m[k]);
            }
            total += (ss / w.len() as f64).sqrt();
            n += 1;
        }
        out.push(if n == 0 { -1.0 } else { total / n as f64 });
    }
    out
}

/// MCC with exact big-integer numerator and denominator; one rounding each,
/// then a single square root.
pub fn mcc_oracle(c: &ConfusionCounts) -> f64 {
    let b = |v: u64| BigInt::from(v);
    let (tp, fp, tn, fn_) = (b(c.tp), b(c.fp), b(c.tn), b(c.fn_));
    let factors = [&tp + &fp, &tp + &fn_, &tn + &fp, &tn + &fn_];
    if factors.iter().any(|f| *f == BigInt::from(0)) {
        return 0.0;
    }
    let num = &tp * &tn - &fp * &fn_;
    let den: BigInt = factors.iter().product();
    // mcc^2 as an exact ratio, then the sign
    let sq = BigRational::new(&num * &num, den);
    let (n, d) = (sq.numer().clone(), sq.denom().clone());
    let v = (to_f64(&n) / to_f64(&d)).sqrt();
    if num < BigInt::from(0) {
        -v
    } else {
        v
    }
}

fn to_f64(x: &BigInt) -> f64 {
    x.to_string().parse().expect("integer string")
}

/// Random window with a unit anchor at `anchor`.
pub fn random_window(rng: &mut ChaCha8Rng, len: usize, anchor: usize) -> Waveform {
    let mut values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    values[anchor] = 1.0;
    Waveform {
        values,
        anchor_offset: anchor,
    }
}

pub fn random_model(rng: &mut ChaCha8Rng, scope: Scope, k: usize, dim: usize) -> ClusterModel {
    ClusterModel {
        scope,
        k,
        seed: 0,
        centroids: (0..k).map(|_| random_window(rng, dim, 15).values).collect(),
        sse: 0.0,
    }
}

pub fn random_cluster_set(rng: &mut ChaCha8Rng) -> ClusterSet {
    ClusterSet {
        phases: Phase::ALL
            .iter()
            .map(|&p| random_model(rng, Scope::Phase(p), 6, 30))
            .collect(),
        all: random_model(rng, Scope::All, 15, 30),
    }
}

pub fn random_bank(rng: &mut ChaCha8Rng) -> TemplateBank {
    TemplateBank::new(
        (0..8).map(|_| random_window(rng, 50, 15).values).collect(),
        (0..8).map(|i| format!("random-{i}")).collect(),
    )
    .unwrap()
}

/// A frame analysis with random pulses; some lack one or both windows.
pub fn random_analysis(rng: &mut ChaCha8Rng, id: &str) -> FrameAnalysis {
    let len = 800_000;
    let phases = Phase::ALL
        .iter()
        .map(|&phase| {
            let n = rng.random_range(0..60);
            let pulses = (0..n)
                .map(|_| {
                    let index = rng.random_range(0..len);
                    let amp =
                        rng.random_range(3.0..49.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    PulseRecord {
                        pulse: Pulse::new(phase, index, amp, len),
                        cluster_window: rng.random_bool(0.95).then(|| random_window(rng, 30, 15)),
                        template_window: rng.random_bool(0.95).then(|| random_window(rng, 50, 15)),
                    }
                })
                .collect();
            PhaseAnalysis {
                phase,
                noise_level: 2.0,
                phase_shift: 0,
                signal_len: len,
                pulses,
            }
        })
        .collect();
    FrameAnalysis {
        id: id.to_string(),
        labels: [Some(false); 3],
        phases,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
