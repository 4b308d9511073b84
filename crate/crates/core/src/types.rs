//! Shared data model: raw frames, flattened signals, pulses and waveforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples in one 50 Hz cycle at 40 MHz.
pub const SAMPLES_PER_CYCLE: usize = 800_000;
pub const SAMPLE_RATE_HZ: f64 = 40e6;
pub const PHASE_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One three-phase, one-cycle raw recording in ADC units.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub id: String,
    pub phases: Vec<Vec<i8>>,
    /// Per-phase fault flags; `None` when unlabelled.
    pub labels: [Option<bool>; 3],
}

impl SignalFrame {
    pub fn new(
        id: impl Into<String>,
        phases: Vec<Vec<i8>>,
        labels: [Option<bool>; 3],
    ) -> Result<Self> {
        let frame = SignalFrame {
            id: id.into(),
            phases,
            labels,
        };
        validate_frame(&frame)?;
        Ok(frame)
    }

    /// `Some(true)` iff any phase is flagged faulty; `None` if no phase carries a label.
    pub fn is_faulty(&self) -> Option<bool> {
        frame_label(&self.labels)
    }
}

pub(crate) fn frame_label(labels: &[Option<bool>; 3]) -> Option<bool> {
    if labels.contains(&Some(true)) {
        Some(true)
    } else if labels.iter().all(|l| l.is_some()) {
        Some(false)
    } else {
        None
    }
}

pub fn validate_frame(frame: &SignalFrame) -> Result<()> {
    if frame.phases.len() != PHASE_COUNT {
        return Err(Error::WrongPhaseCount(frame.phases.len()));
    }
    for (phase, samples) in frame.phases.iter().enumerate() {
        if samples.len() != SAMPLES_PER_CYCLE {
            return Err(Error::WrongLength {
                phase,
                len: samples.len(),
                expected: SAMPLES_PER_CYCLE,
            });
        }
    }
    Ok(())
}

/// A phase-corrected, flattened single-phase signal with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSignal {
    pub samples: Vec<f64>,
    pub noise_level: f64,
    /// Circular shift applied during phase correction (samples).
    pub phase_shift: i64,
}

/// Quadrant (1..=4) of a sample index within a cycle of `len` samples.
pub fn quadrant_of(index: usize, len: usize) -> u8 {
    (1 + (4 * index) / len.max(1)).min(4) as u8
}

/// A detected partial-discharge pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub phase: Phase,
    pub index: usize,
    pub amplitude: f64,
    pub height: f64,
    pub quadrant: u8,
}

impl Pulse {
    pub fn new(phase: Phase, index: usize, amplitude: f64, signal_len: usize) -> Self {
        Pulse {
            phase,
            index,
            amplitude,
            height: amplitude.abs(),
            quadrant: quadrant_of(index, signal_len),
        }
    }

    /// Quadrants one and three: the positive-going and negative-going halves
    /// of the fundamental's rising sections.
    pub fn in_q13(&self) -> bool {
        self.quadrant == 1 || self.quadrant == 3
    }
}

/// A window around a pulse anchor, divided by the anchor's signed amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub values: Vec<f64>,
    pub anchor_offset: usize,
}

impl Waveform {
    /// Extracts `s[p - before ..= p + after] / s[p]`; `None` if the window leaves the signal
    /// or the anchor is zero.
    pub fn extract(samples: &[f64], index: usize, before: usize, after: usize) -> Option<Waveform> {
        if index < before || index + after >= samples.len() {
            return None;
        }
        let anchor = samples[index];
        if anchor == 0.0 || !anchor.is_finite() {
            return None;
        }
        let values = samples[index - before..=index + after]
            .iter()
            .map(|v| v / anchor)
            .collect();
        Some(Waveform {
            values,
            anchor_offset: before,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Root-mean-square difference of two equal-length slices.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n_phases: usize, len: usize) -> SignalFrame {
        SignalFrame {
            id: "t".into(),
            phases: vec![vec![0i8; len]; n_phases],
            labels: [None; 3],
        }
    }

    #[test]
    fn validate_accepts_full_frame() {
        assert_eq!(validate_frame(&frame(3, SAMPLES_PER_CYCLE)), Ok(()));
    }

    #[test]
    fn validate_rejects_short_phase() {
        assert_eq!(
            validate_frame(&frame(3, SAMPLES_PER_CYCLE - 1)),
            Err(Error::WrongLength {
                phase: 0,
                len: SAMPLES_PER_CYCLE - 1,
                expected: SAMPLES_PER_CYCLE
            })
        );
    }

    #[test]
    fn validate_rejects_two_phases() {
        assert_eq!(
            validate_frame(&frame(2, SAMPLES_PER_CYCLE)),
            Err(Error::WrongPhaseCount(2))
        );
    }

    #[test]
    fn faulty_iff_any_phase() {
        assert_eq!(
            frame_label(&[Some(false), Some(true), Some(false)]),
            Some(true)
        );
        assert_eq!(frame_label(&[Some(false); 3]), Some(false));
        assert_eq!(frame_label(&[None, Some(false), Some(false)]), None);
        assert_eq!(frame_label(&[None, Some(true), None]), Some(true));
    }

    #[test]
    fn quadrants_split_cycle_evenly() {
        assert_eq!(quadrant_of(0, SAMPLES_PER_CYCLE), 1);
        assert_eq!(quadrant_of(199_999, SAMPLES_PER_CYCLE), 1);
        assert_eq!(quadrant_of(200_000, SAMPLES_PER_CYCLE), 2);
        assert_eq!(quadrant_of(599_999, SAMPLES_PER_CYCLE), 3);
        assert_eq!(quadrant_of(799_999, SAMPLES_PER_CYCLE), 4);
    }

    #[test]
    fn waveform_sign_normalized() {
        let mut s = vec![0.0; 40];
        s[20] = -10.0;
        s[22] = 5.0;
        let w = Waveform::extract(&s, 20, 15, 14).unwrap();
        assert_eq!(w.values[15], 1.0);
        assert_eq!(w.values[17], -0.5);
        assert!(Waveform::extract(&s, 7, 15, 14).is_none());
    }
}
