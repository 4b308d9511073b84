//! Global background-noise level of a flattened single-phase signal.
//!
//! Equidistant sections of the signal are reduced to their peak magnitudes.
//! The peaks are histogrammed into bins of width `step` over `(0, c_max]` and
//! the bins are scanned from the top down; the first bin holding more than
//! `n_cover` section peaks marks the noise floor. Sections containing real
//! pulses are few, so their bins stay below `n_cover`.

use crate::error::{Error, Result};

/// Peak absolute value of each sampled section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionMaxima(pub Vec<f64>);

/// Samples `n_noise` sections of length `l_noise` starting at `floor(i * len / n_noise)`.
/// Sections are clipped at the end of the signal and may overlap.
pub fn section_maxima(s: &[f64], n_noise: usize, l_noise: usize) -> Result<SectionMaxima> {
    let len = s.len();
    if l_noise > len {
        return Err(Error::SectionOverflow {
            section_len: l_noise,
            signal_len: len,
        });
    }
    let maxima = (0..n_noise)
        .map(|i| {
            let start = i * len / n_noise;
            let end = (start + l_noise).min(len);
            s[start..end].iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect();
    Ok(SectionMaxima(maxima))
}

/// Noise level `a` from section maxima.
///
/// Bins are `(lo, lo + step]`. With `descending` the scan starts at the bin ending
/// at `c_max`; otherwise at the bin starting at 0. The result is the triggering
/// bin's upper edge plus one bin width, or `step` when no bin exceeds `n_cover`.
pub fn estimate_noise_level(
    maxima: &SectionMaxima,
    n_cover: usize,
    c_max: f64,
    step: f64,
    descending: bool,
) -> f64 {
    let n_bins = (c_max / step).round() as usize;
    let mut counts = vec![0usize; n_bins];
    for &m in &maxima.0 {
        if m <= 0.0 || m > c_max {
            continue;
        }
        // bin b covers (b*step, (b+1)*step]
        let b = ((m / step).ceil() as usize).clamp(1, n_bins) - 1;
        counts[b] += 1;
    }
    let order: Box<dyn Iterator<Item = usize>> = if descending {
        Box::new((0..n_bins).rev())
    } else {
        Box::new(0..n_bins)
    };
    for b in order {
        if counts[b] > n_cover {
            return (b + 1) as f64 * step + step;
        }
    }
    step
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_signal_has_zero_maxima() {
        let m = section_maxima(&vec![0.0; 800_000], 1000, 1000).unwrap();
        assert_eq!(m.0.len(), 1000);
        assert!(m.0.iter().all(|&v| v == 0.0));
        assert_eq!(estimate_noise_level(&m, 80, 15.0, 0.5, true), 0.5);
    }

    #[test]
    fn spike_sections_by_enumeration() {
        // sections start every 800 samples and span 1000, so consecutive ones overlap
        let mut s = vec![0.0; 800_000];
        s[0] = 10.0;
        let m = section_maxima(&s, 1000, 1000).unwrap();
        assert_eq!(m.0[0], 10.0);
        assert!(m.0[1..].iter().all(|&v| v == 0.0));

        let mut s = vec![0.0; 800_000];
        s[900] = -10.0;
        let m = section_maxima(&s, 1000, 1000).unwrap();
        assert_eq!((m.0[0], m.0[1]), (10.0, 10.0));
        assert!(m.0[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overflow_rejected() {
        assert_eq!(
            section_maxima(&[0.0; 10], 5, 11),
            Err(Error::SectionOverflow {
                section_len: 11,
                signal_len: 10
            })
        );
    }

    #[test]
    fn last_section_is_clipped() {
        let mut s = vec![0.0; 100];
        s[99] = 3.0;
        let m = section_maxima(&s, 10, 50).unwrap();
        assert_eq!(m.0[9], 3.0);
        assert_eq!(m.0[5], 3.0);
    }

    #[test]
    fn uniform_noise_maxima_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..800_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = section_maxima(&s, 1000, 1000).unwrap();
        assert!(m.0.iter().all(|&v| v > 0.9 && v <= 1.0));
    }

    #[test]
    fn descending_scan_hits_highest_dense_bin() {
        let mut m = vec![0.75; 900];
        m.extend(std::iter::repeat_n(4.75, 100));
        let a = estimate_noise_level(&SectionMaxima(m), 80, 15.0, 0.5, true);
        assert_eq!(a, 5.5);

        let mut m = vec![0.75; 81];
        m.extend(std::iter::repeat_n(1.25, 81));
        m.extend(std::iter::repeat_n(0.2, 838));
        let a = estimate_noise_level(&SectionMaxima(m), 80, 15.0, 0.5, true);
        assert_eq!(a, 2.0);
    }

    #[test]
    fn bin_edges_are_upper_inclusive() {
        let m = SectionMaxima(vec![1.0; 100]);
        // 1.0 lies in (0.5, 1.0]
        assert_eq!(estimate_noise_level(&m, 80, 15.0, 0.5, true), 1.5);
        let m = SectionMaxima(vec![15.0; 100]);
        assert_eq!(estimate_noise_level(&m, 80, 15.0, 0.5, true), 15.5);
        let m = SectionMaxima(vec![15.1; 100]);
        assert_eq!(estimate_noise_level(&m, 80, 15.0, 0.5, true), 0.5);
    }

    #[test]
    fn ascending_scan_finds_lowest_dense_bin() {
        let mut m = vec![0.75; 900];
        m.extend(std::iter::repeat_n(4.75, 100));
        let a = estimate_noise_level(&SectionMaxima(m), 80, 15.0, 0.5, false);
        assert_eq!(a, 1.5);
    }
}
