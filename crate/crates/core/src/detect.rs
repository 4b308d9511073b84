//! Two-stage pulse detection.
//!
//! Stage one collects candidates: three passes over a masked copy of `|s|`,
//! each taking the `n_top` largest values of every one of `n_sort` sections and
//! zeroing `±n_mask` samples around each taken index. Stage two keeps a candidate
//! only if it is the maximum of `|s|` within `±n_local`, walks it back onto an
//! earlier opposite-polarity peak when one is strong enough, and finally gates
//! on `a < |s[p]| < amplitude_cap`.

use std::collections::BTreeSet;

use crate::config::PipelineConfig;
use crate::types::{FlatSignal, Phase, Pulse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub n_sort: usize,
    pub n_top: usize,
    pub n_mask: usize,
    pub n_local: usize,
    pub c_mag: f64,
    pub amplitude_cap: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for DetectParams {
    fn from(c: &PipelineConfig) -> Self {
        DetectParams {
            n_sort: c.n_sort,
            n_top: c.n_top,
            n_mask: c.n_mask,
            n_local: c.n_local,
            c_mag: c.c_mag,
            amplitude_cap: c.amplitude_cap,
        }
    }
}

/// Stage-one candidate indexes in the order they were taken (may repeat).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub indexes: Vec<usize>,
}

impl CandidateSet {
    /// Distinct candidates, ascending.
    pub fn unique(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.indexes.iter().copied().collect();
        set.into_iter().collect()
    }
}

pub const CANDIDATE_PASSES: usize = 3;

pub fn stage1_candidates(s: &[f64], n_sort: usize, n_top: usize, n_mask: usize) -> CandidateSet {
    let len = s.len();
    let mut masked: Vec<f64> = s.iter().map(|v| v.abs()).collect();
    let mut indexes = Vec::with_capacity(CANDIDATE_PASSES * n_sort * n_top);
    let mut order: Vec<usize> = Vec::new();
    for _ in 0..CANDIDATE_PASSES {
        for j in 0..n_sort {
            let start = j * len / n_sort;
            let end = (j + 1) * len / n_sort;
            if start >= end {
                continue;
            }
            order.clear();
            order.extend(start..end);
            // larger value first, ties by lower index
            let cmp = |a: &usize, b: &usize| masked[*b].total_cmp(&masked[*a]).then(a.cmp(b));
            let take = n_top.min(order.len());
            if take < order.len() {
                order.select_nth_unstable_by(take - 1, cmp);
                order.truncate(take);
            }
            order.sort_unstable_by(cmp);
            indexes.extend_from_slice(&order);
            for &p in &order {
                let lo = p.saturating_sub(n_mask);
                let hi = (p + n_mask).min(len - 1);
                masked[lo..=hi].fill(0.0);
            }
        }
    }
    CandidateSet { indexes }
}

/// `s[p-i]` has the opposite sign of `s[p]` and more than `c_mag` of its magnitude.
#[inline]
fn relocation_cond(s: &[f64], p: usize, i: usize, c_mag: f64) -> bool {
    p >= i && s[p - i] * s[p] < 0.0 && s[p - i].abs() > c_mag * s[p].abs()
}

/// Index of the final pulse for candidate `p`, or `None` if rejected.
pub fn verify_and_relocate(
    p: usize,
    s: &[f64],
    noise_level: f64,
    params: &DetectParams,
) -> Option<usize> {
    let lo = p.saturating_sub(params.n_local);
    let hi = (p + params.n_local).min(s.len() - 1);
    let peak = s[p].abs();
    if s[lo..=hi].iter().any(|v| v.abs() > peak) {
        return None;
    }
    let mut p = p;
    while relocation_cond(s, p, 1, params.c_mag) {
        p -= 1;
    }
    if relocation_cond(s, p, 2, params.c_mag) {
        p -= 2;
    } else if relocation_cond(s, p, 3, params.c_mag) {
        p -= 3;
    }
    let h = s[p].abs();
    (h > noise_level && h < params.amplitude_cap).then_some(p)
}

/// Final pulse indexes (ascending, distinct) of a flattened signal.
pub fn detect_indices(s: &[f64], noise_level: f64, params: &DetectParams) -> Vec<usize> {
    if s.is_empty() {
        return Vec::new();
    }
    let candidates = stage1_candidates(s, params.n_sort, params.n_top, params.n_mask);
    let accepted: BTreeSet<usize> = candidates
        .unique()
        .into_iter()
        .filter_map(|p| verify_and_relocate(p, s, noise_level, params))
        .collect();
    accepted.into_iter().collect()
}

pub fn detect_pulses(flat: &FlatSignal, phase: Phase, params: &DetectParams) -> Vec<Pulse> {
    let len = flat.samples.len();
    detect_indices(&flat.samples, flat.noise_level, params)
        .into_iter()
        .map(|p| Pulse::new(phase, p, flat.samples[p], len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DetectParams {
        DetectParams::default()
    }

    #[test]
    fn all_zero_signal_yields_full_candidate_list() {
        let s = vec![0.0; 800_000];
        let c = stage1_candidates(&s, 20, 100, 50);
        assert_eq!(c.indexes.len(), 6000);
        // ties resolved by lowest index: each section contributes its first 100 indexes
        assert_eq!(&c.indexes[..3], &[0, 1, 2]);
        assert_eq!(c.indexes[100], 40_000);
        assert!(detect_indices(&s, 1.0, &params()).is_empty());
    }

    #[test]
    fn one_spike_per_section_taken_in_first_pass() {
        let n_sort = 20;
        let len = 20 * 1000;
        let mut s = vec![0.0; len];
        for j in 0..n_sort {
            s[j * 1000 + 500] = 10.0;
        }
        let c = stage1_candidates(&s, n_sort, 1, 50);
        assert_eq!(c.indexes.len(), 3 * n_sort);
        let first: Vec<usize> = c.indexes[..n_sort].to_vec();
        assert_eq!(
            first,
            (0..n_sort).map(|j| j * 1000 + 500).collect::<Vec<_>>()
        );
        assert!(c.indexes[n_sort..].iter().all(|&p| s[p] == 0.0));
    }

    #[test]
    fn masked_neighbour_never_becomes_candidate() {
        let mut s = vec![0.0; 1000];
        s[500] = 10.0;
        s[530] = 8.0;
        let c = stage1_candidates(&s, 1, 1, 50);
        assert_eq!(c.indexes[0], 500);
        assert!(!c.indexes.contains(&530));
    }

    #[test]
    fn isolated_spike_is_a_pulse() {
        let mut s = vec![0.0; 2000];
        s[1000] = 10.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), Some(1000));
    }

    #[test]
    fn cond2_relocates_two_steps() {
        let mut s = vec![0.0; 2000];
        s[998] = -6.0;
        s[1000] = 10.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), Some(998));
        assert_eq!(verify_and_relocate(1000, &s, 6.5, &params()), None);
    }

    #[test]
    fn cond1_loop_walks_back() {
        let mut s = vec![0.0; 2000];
        s[997] = 5.0;
        s[998] = 5.0;
        s[999] = -8.0;
        s[1000] = 10.0;
        // 1000 -> 999 (-8 vs 10) -> 998 (5 vs -8); then 997 has the same sign, loop stops
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), Some(998));
    }

    #[test]
    fn cond3_used_when_cond2_fails() {
        let mut s = vec![0.0; 2000];
        s[997] = -7.0;
        s[1000] = 10.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), Some(997));
    }

    #[test]
    fn amplitude_cap_rejects() {
        let mut s = vec![0.0; 2000];
        s[1000] = 60.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), None);
        s[1000] = 50.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), None);
        s[1000] = 49.9;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), Some(1000));
    }

    #[test]
    fn non_local_max_rejected() {
        let mut s = vec![0.0; 2000];
        s[1000] = 10.0;
        s[1020] = 11.0;
        assert_eq!(verify_and_relocate(1000, &s, 2.0, &params()), None);
        assert_eq!(verify_and_relocate(1020, &s, 2.0, &params()), Some(1020));
    }

    #[test]
    fn relocation_clips_at_start() {
        let s = vec![-8.0, 10.0, 0.0, 0.0];
        assert_eq!(verify_and_relocate(1, &s, 2.0, &params()), Some(0));
    }

    #[test]
    fn pulses_carry_quadrant_and_height() {
        let mut samples = vec![0.0; 800_000];
        samples[250_000] = -12.0;
        let flat = FlatSignal {
            samples,
            noise_level: 3.0,
            phase_shift: 0,
        };
        let p = detect_pulses(&flat, Phase::B, &params());
        assert_eq!(p.len(), 1);
        assert_eq!(
            (p[0].index, p[0].quadrant, p[0].height, p[0].amplitude),
            (250_000, 2, 12.0, -12.0)
        );
    }
}
