//! Seeded synthetic three-phase frames with planted pulses and a ground-truth log.
//!
//! Each frame is a 50 Hz fundamental with a random phase offset, Gaussian noise,
//! interference pulses biased to quadrants 2/4 and, for faulty frames, damped
//! partial-discharge bursts biased to quadrants 1/3. Pulse positions are drawn
//! in phase-corrected coordinates and then mapped back to raw sample indexes.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SignalFrame, PHASE_COUNT, SAMPLES_PER_CYCLE};

/// Number of planted pulse shapes.
pub const ARCHETYPES: usize = 6;
/// Samples generated per planted pulse, counted from its peak.
const PULSE_SPAN: i64 = 80;
const EDGE_GUARD: usize = 200;

/// Shape of archetype `id` at `t` samples after the peak (peak value 1).
///
/// 0..=3 are oscillatory partial-discharge shapes, 4 and 5 are interference.
pub fn archetype_value(id: usize, t: i64) -> f64 {
    let damped = |mhz: f64, tau: f64| {
        if t < 0 {
            0.0
        } else {
            let t = t as f64;
            (TAU * mhz * 1e6 * t / 40e6).cos() * (-t / tau).exp()
        }
    };
    match id {
        0 => damped(2.0, 8.0),
        1 => damped(5.0, 5.0),
        2 => damped(8.0, 3.0),
        3 if t == -2 => -0.7,
        3 => damped(4.0, 6.0),
        4 if t < 0 => 0.0,
        4 => (-(t as f64) / 2.0).exp(),
        5 => damped(3.0, 15.0),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseSpec {
    pub count_min: usize,
    pub count_max: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Probability that a pulse lands in the preferred quadrants.
    pub quadrant_bias: f64,
    pub archetypes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthScenario {
    pub seed: u64,
    pub n_frames: usize,
    pub faulty_fraction: f64,
    pub noise_sigma: f64,
    pub fundamental_amplitude: f64,
    pub samples_per_frame: usize,
    /// Minimum spacing between planted pulses on one phase.
    pub min_spacing: usize,
    /// Bursts on every phase of a faulty frame (preferred quadrants 1/3).
    pub pd: PulseSpec,
    /// Pulses on every frame (preferred quadrants 2/4).
    pub interference: PulseSpec,
    /// Stray discharge-like pulses on non-faulty frames, placed uniformly.
    pub stray: PulseSpec,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            seed: 1,
            n_frames: 10,
            faulty_fraction: 0.1,
            noise_sigma: 1.0,
            fundamental_amplitude: 20.0,
            samples_per_frame: SAMPLES_PER_CYCLE,
            min_spacing: 150,
            pd: PulseSpec {
                count_min: 50,
                count_max: 500,
                amplitude_min: 5.0,
                amplitude_max: 30.0,
                quadrant_bias: 0.9,
                archetypes: vec![0, 1, 2, 3],
            },
            interference: PulseSpec {
                count_min: 20,
                count_max: 120,
                amplitude_min: 5.0,
                amplitude_max: 30.0,
                quadrant_bias: 0.8,
                archetypes: vec![4, 5],
            },
            stray: PulseSpec {
                count_min: 0,
                count_max: 10,
                amplitude_min: 5.0,
                amplitude_max: 15.0,
                quadrant_bias: 0.0,
                archetypes: vec![0, 1, 2, 3],
            },
        }
    }
}

impl Default for PulseSpec {
    fn default() -> Self {
        SynthScenario::default().pd
    }
}

/// Ground truth for one planted pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPulse {
    pub frame: usize,
    pub frame_id: String,
    pub phase: usize,
    /// Peak position in the raw (uncorrected) record.
    pub index: usize,
    /// Peak position after ideal phase correction.
    pub aligned_index: usize,
    pub amplitude: f64,
    pub archetype: usize,
    pub kind: PulseKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Discharge,
    Interference,
    Stray,
}

impl SynthScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: SynthScenario =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if !(0.0..=1.0).contains(&self.faulty_fraction) {
            return bad("faulty_fraction must lie in [0, 1]");
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be non-negative");
        }
        if self.fundamental_amplitude <= 0.0 {
            return bad("fundamental_amplitude must be positive");
        }
        if self.samples_per_frame < 8 * EDGE_GUARD {
            return bad("samples_per_frame too small");
        }
        for (name, p) in [
            ("pd", &self.pd),
            ("interference", &self.interference),
            ("stray", &self.stray),
        ] {
            if p.count_min > p.count_max
                || p.amplitude_min > p.amplitude_max
                || p.amplitude_min < 0.0
            {
                return bad(&format!("{name}: inverted range"));
            }
            if !(0.0..=1.0).contains(&p.quadrant_bias) {
                return bad(&format!("{name}: quadrant_bias must lie in [0, 1]"));
            }
            if p.count_max > 0
                && (p.archetypes.is_empty() || p.archetypes.iter().any(|&a| a >= ARCHETYPES))
            {
                return bad(&format!(
                    "{name}: archetypes must be non-empty ids below {ARCHETYPES}"
                ));
            }
        }
        Ok(())
    }

    pub fn faulty_count(&self) -> usize {
        (self.faulty_fraction * self.n_frames as f64).round() as usize
    }

    /// Which frames are faulty: an exact count chosen by a seeded permutation.
    pub fn faulty_mask(&self) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut order: Vec<usize> = (0..self.n_frames).collect();
        order.shuffle(&mut rng);
        let mut mask = vec![false; self.n_frames];
        for &i in &order[..self.faulty_count()] {
            mask[i] = true;
        }
        mask
    }

    pub fn frame_id(&self, i: usize) -> String {
        format!("synth-{}-{i:05}", self.seed)
    }

    /// Generates frame `i`; independent of every other frame.
    pub fn generate_frame(&self, i: usize, faulty: bool) -> (SignalFrame, Vec<PlantedPulse>) {
        let n = self.samples_per_frame;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64 + 1);
        let id = self.frame_id(i);
        let frame_phase: f64 = rng.random_range(0.0..TAU);
        let noise =
            Normal::new(0.0, self.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut phases = Vec::with_capacity(PHASE_COUNT);
        let mut planted = Vec::new();
        for k in 0..PHASE_COUNT {
            let phi = frame_phase - k as f64 * TAU / 3.0;
            // raw = aligned + shift
            let shift = ((-phi * n as f64 / TAU).round() as i64).rem_euclid(n as i64) as usize;
            let mut x: Vec<f64> = (0..n)
                .map(|t| self.fundamental_amplitude * (TAU * t as f64 / n as f64 + phi).sin())
                .collect();
            if self.noise_sigma > 0.0 {
                for v in &mut x {
                    *v += noise.sample(&mut rng);
                }
            }
            let mut occupied: Vec<usize> = Vec::new();
            let mut plant =
                |spec: &PulseSpec, kind: PulseKind, preferred: [usize; 2], rng: &mut ChaCha8Rng| {
                    let count = rng.random_range(spec.count_min..=spec.count_max);
                    for _ in 0..count {
                        let Some(a) = self.place(rng, &mut occupied, spec.quadrant_bias, preferred)
                        else {
                            break;
                        };
                        let archetype = spec.archetypes[rng.random_range(0..spec.archetypes.len())];
                        let mut amplitude =
                            rng.random_range(spec.amplitude_min..=spec.amplitude_max);
                        if rng.random_bool(0.5) {
                            amplitude = -amplitude;
                        }
                        let raw = (a + shift) % n;
                        for t in -4..PULSE_SPAN {
                            let v = archetype_value(archetype, t);
                            if v != 0.0 {
                                let j = (raw as i64 + t).rem_euclid(n as i64) as usize;
                                x[j] += amplitude * v;
                            }
                        }
                        planted.push(PlantedPulse {
                            frame: i,
                            frame_id: id.clone(),
                            phase: k,
                            index: raw,
                            aligned_index: a,
                            amplitude,
                            archetype,
                            kind,
                        });
                    }
                };
            if faulty {
                plant(&self.pd, PulseKind::Discharge, [0, 2], &mut rng);
            } else {
                plant(&self.stray, PulseKind::Stray, [0, 2], &mut rng);
            }
            plant(
                &self.interference,
                PulseKind::Interference,
                [1, 3],
                &mut rng,
            );
            phases.push(
                x.into_iter()
                    .map(|v| v.round().clamp(-128.0, 127.0) as i8)
                    .collect(),
            );
        }
        planted.sort_by_key(|p| (p.phase, p.index));
        let labels = [Some(faulty); 3];
        let frame = SignalFrame { id, phases, labels };
        (frame, planted)
    }

    /// Picks an aligned peak position at least `min_spacing` from every occupied one.
    fn place(
        &self,
        rng: &mut ChaCha8Rng,
        occupied: &mut Vec<usize>,
        bias: f64,
        preferred: [usize; 2],
    ) -> Option<usize> {
        let n = self.samples_per_frame;
        let q = n / 4;
        for _ in 0..200 {
            let quadrant = if rng.random_bool(bias) {
                preferred[rng.random_range(0..2)]
            } else {
                rng.random_range(0..4)
            };
            let lo = (quadrant * q).max(EDGE_GUARD);
            let hi = ((quadrant + 1) * q).min(n - EDGE_GUARD);
            let a = rng.random_range(lo..hi);
            let pos = occupied.partition_point(|&o| o < a);
            let clear = |o: Option<&usize>| o.is_none_or(|&o| o.abs_diff(a) >= self.min_spacing);
            if clear(occupied.get(pos)) && clear(pos.checked_sub(1).and_then(|p| occupied.get(p))) {
                occupied.insert(pos, a);
                return Some(a);
            }
        }
        None
    }

    /// Every frame in order, generated lazily.
    pub fn frames(&self) -> impl Iterator<Item = (SignalFrame, Vec<PlantedPulse>)> + '_ {
        let mask = self.faulty_mask();
        (0..self.n_frames).map(move |i| self.generate_frame(i, mask[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::fundamental_phase;

    fn small() -> SynthScenario {
        SynthScenario {
            n_frames: 6,
            samples_per_frame: 40_000,
            faulty_fraction: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn archetype_peaks_are_unit() {
        for a in 0..ARCHETYPES {
            assert_eq!(archetype_value(a, 0), 1.0);
        }
        assert_eq!(archetype_value(3, -2), -0.7);
    }

    #[test]
    fn exact_faulty_count() {
        let s = SynthScenario {
            n_frames: 500,
            ..Default::default()
        };
        assert_eq!(s.faulty_mask().iter().filter(|&&f| f).count(), 50);
        let none = SynthScenario {
            faulty_fraction: 0.0,
            ..small()
        };
        assert!(none.frames().all(|(f, _)| f.is_faulty() == Some(false)));
    }

    #[test]
    fn reproducible_and_spaced() {
        let s = small();
        let a: Vec<_> = s.frames().collect();
        let b: Vec<_> = s.frames().collect();
        assert_eq!(a, b);
        for (_, planted) in &a {
            for w in planted.windows(2) {
                if w[0].phase == w[1].phase {
                    let d = w[0].aligned_index.abs_diff(w[1].aligned_index);
                    assert!(d >= 150 || d == 0, "spacing {d}");
                }
            }
        }
    }

    #[test]
    fn fundamental_phase_is_recoverable() {
        let s = SynthScenario {
            pd: PulseSpec {
                count_min: 0,
                count_max: 0,
                ..PulseSpec::default()
            },
            interference: PulseSpec {
                count_min: 0,
                count_max: 0,
                ..SynthScenario::default().interference
            },
            faulty_fraction: 0.0,
            ..small()
        };
        let (frame, _) = s.generate_frame(0, false);
        let n = s.samples_per_frame as f64;
        for (k, raw) in frame.phases.iter().enumerate() {
            let phi = fundamental_phase(raw).unwrap();
            let next =
                fundamental_phase(&s.generate_frame(0, false).0.phases[(k + 1) % 3]).unwrap();
            let diff = (phi - next).rem_euclid(TAU);
            assert!((diff - TAU / 3.0).abs() < 2.0 * TAU / n * 10.0, "{diff}");
        }
    }

    #[test]
    fn invalid_scenarios_rejected() {
        assert!(SynthScenario::from_json(r#"{"faulty_fraction": 1.5}"#).is_err());
        assert!(SynthScenario::from_json(r#"{"pd": {"archetypes": [9]}}"#).is_err());
        let s = SynthScenario::from_json(r#"{"seed": 7, "n_frames": 3}"#).unwrap();
        assert_eq!(s.n_frames, 3);
        assert_eq!(s.pd.count_max, 500);
    }
}
