//! Per-frame signal stages: phase correction, flattening, noise level, pulse
//! detection and waveform extraction. The result keeps only what the feature
//! stages need, so raw and flattened samples can be dropped per frame.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::detect::{detect_pulses, DetectParams};
use crate::error::Result;
use crate::noise::{estimate_noise_level, section_maxima};
use crate::preprocess::{alignment_shift, circular_shift, flatten, SavGolKernel};
use crate::types::{frame_label, FlatSignal, Phase, Pulse, SignalFrame, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse: Pulse,
    /// `n_before + n_after + 1` samples; `None` when the window leaves the signal.
    pub cluster_window: Option<Waveform>,
    /// `template_len` samples starting `n_before` before the anchor.
    pub template_window: Option<Waveform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAnalysis {
    pub phase: Phase,
    pub noise_level: f64,
    pub phase_shift: i64,
    pub signal_len: usize,
    pub pulses: Vec<PulseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub id: String,
    pub labels: [Option<bool>; 3],
    pub phases: Vec<PhaseAnalysis>,
}

impl FrameAnalysis {
    pub fn is_faulty(&self) -> Option<bool> {
        frame_label(&self.labels)
    }

    pub fn pulse_records(&self) -> impl Iterator<Item = &PulseRecord> {
        self.phases.iter().flat_map(|p| p.pulses.iter())
    }

    pub fn pulse_count(&self) -> usize {
        self.phases.iter().map(|p| p.pulses.len()).sum()
    }
}

/// Runs the per-phase stages with a fixed configuration.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub cfg: PipelineConfig,
    kernel: SavGolKernel,
    detect: DetectParams,
}

impl Analyzer {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Analyzer {
            kernel: SavGolKernel::new(cfg.sg_window, cfg.sg_order)?,
            detect: DetectParams::from(cfg),
            cfg: cfg.clone(),
        })
    }

    /// Phase-corrects and flattens one raw phase, then estimates its noise level.
    pub fn flatten_phase(&self, raw: &[i8]) -> Result<FlatSignal> {
        let shift = alignment_shift(raw)?;
        self.flatten_aligned(&circular_shift(raw, shift), shift)
    }

    /// Flattens a phase that was already corrected by `shift` samples.
    pub fn flatten_aligned(&self, aligned: &[i8], shift: i64) -> Result<FlatSignal> {
        let aligned: Vec<f64> = aligned.iter().map(|&v| f64::from(v)).collect();
        let samples = flatten(&aligned, &self.kernel);
        let noise_level = self.noise_level(&samples)?;
        Ok(FlatSignal {
            samples,
            noise_level,
            phase_shift: shift,
        })
    }

    pub fn noise_level(&self, flat: &[f64]) -> Result<f64> {
        let maxima = section_maxima(flat, self.cfg.n_noise, self.cfg.l_noise)?;
        Ok(estimate_noise_level(
            &maxima,
            self.cfg.n_cover,
            self.cfg.c_max,
            self.cfg.c_step,
            self.cfg.c_step_descending,
        ))
    }

    pub fn analyze_flat(&self, flat: &FlatSignal, phase: Phase) -> PhaseAnalysis {
        let s = &flat.samples;
        let pulses = detect_pulses(flat, phase, &self.detect)
            .into_iter()
            .map(|pulse| self.record(pulse, s))
            .collect();
        PhaseAnalysis {
            phase,
            noise_level: flat.noise_level,
            phase_shift: flat.phase_shift,
            signal_len: s.len(),
            pulses,
        }
    }

    /// Attaches the clustering and template windows of `pulse`.
    pub fn record(&self, pulse: Pulse, s: &[f64]) -> PulseRecord {
        let before = self.cfg.n_before;
        PulseRecord {
            pulse,
            cluster_window: Waveform::extract(s, pulse.index, before, self.cfg.n_after),
            template_window: Waveform::extract(
                s,
                pulse.index,
                before,
                self.cfg.template_len - before - 1,
            ),
        }
    }

    pub fn analyze_frame(&self, frame: &SignalFrame) -> Result<FrameAnalysis> {
        let phases = frame
            .phases
            .iter()
            .zip(Phase::ALL)
            .map(|(raw, phase)| Ok(self.analyze_flat(&self.flatten_phase(raw)?, phase)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameAnalysis {
            id: frame.id.clone(),
            labels: frame.labels,
            phases,
        })
    }

    /// As [`Analyzer::analyze_frame`] for a frame whose phases are already corrected.
    pub fn analyze_aligned_frame(
        &self,
        frame: &SignalFrame,
        shifts: &[i64],
    ) -> Result<FrameAnalysis> {
        let phases = frame
            .phases
            .iter()
            .zip(Phase::ALL)
            .zip(shifts)
            .map(|((aligned, phase), &shift)| {
                Ok(self.analyze_flat(&self.flatten_aligned(aligned, shift)?, phase))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameAnalysis {
            id: frame.id.clone(),
            labels: frame.labels,
            phases,
        })
    }
}
