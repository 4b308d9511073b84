//! Phase-angle correction against the 50 Hz fundamental and Savitzky-Golay flattening.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::types::SignalFrame;

/// Wraps an angle into (-pi, pi].
fn wrap_angle(mut a: f64) -> f64 {
    a %= TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Complex DFT coefficient at bin 1 (one period over the whole record).
fn dft_bin1<T: Copy + Into<f64>>(samples: &[T]) -> (f64, f64) {
    const BLOCK: usize = 1024;
    let n = samples.len();
    let step = -TAU / n as f64;
    let (ds, dc) = step.sin_cos();
    let (mut re, mut im) = (0.0, 0.0);
    for (b, block) in samples.chunks(BLOCK).enumerate() {
        // re-anchor the rotating phasor each block to bound drift
        let (mut s, mut c) = (step * (b * BLOCK) as f64).sin_cos();
        for &x in block {
            let x: f64 = x.into();
            re += x * c;
            im += x * s;
            let nc = c * dc - s * ds;
            s = s * dc + c * ds;
            c = nc;
        }
    }
    (re, im)
}

/// Phase of the fundamental measured against a sine: a pure `sin(2*pi*n/N + phi)`
/// yields `phi`, so an aligned signal reads 0.
pub fn fundamental_phase<T: Copy + Into<f64>>(samples: &[T]) -> Result<f64> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::ZeroFundamental { magnitude: 0.0 });
    }
    let (re, im) = dft_bin1(samples);
    let amplitude = 2.0 * re.hypot(im) / n as f64;
    let rms = (samples
        .iter()
        .map(|&x| {
            let x: f64 = x.into();
            x * x
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if amplitude <= 1e-9 * rms || amplitude == 0.0 {
        return Err(Error::ZeroFundamental {
            magnitude: amplitude,
        });
    }
    Ok(wrap_angle(im.atan2(re) + FRAC_PI_2))
}

/// Circular shift (in samples, within `[0, len)`) that moves the fundamental's phase to 0.
pub fn alignment_shift<T: Copy + Into<f64>>(samples: &[T]) -> Result<i64> {
    let n = samples.len() as i64;
    let phi = fundamental_phase(samples)?;
    let d = (-phi * n as f64 / TAU).round() as i64;
    Ok(d.rem_euclid(n))
}

/// `out[i] = samples[(i + shift) mod len]`.
pub fn circular_shift<T: Copy>(samples: &[T], shift: i64) -> Vec<T> {
    if samples.is_empty() {
        return Vec::new();
    }
    let d = shift.rem_euclid(samples.len() as i64) as usize;
    let mut out = Vec::with_capacity(samples.len());
    out.extend_from_slice(&samples[d..]);
    out.extend_from_slice(&samples[..d]);
    out
}

/// Shifts every phase so its fundamental starts at phase 0. Returns the corrected
/// frame and the shift applied to each phase.
pub fn phase_correct(frame: &SignalFrame) -> Result<(SignalFrame, Vec<i64>)> {
    let mut shifts = Vec::with_capacity(frame.phases.len());
    let mut phases = Vec::with_capacity(frame.phases.len());
    for raw in &frame.phases {
        let d = alignment_shift(raw)?;
        phases.push(circular_shift(raw, d));
        shifts.push(d);
    }
    let corrected = SignalFrame {
        id: frame.id.clone(),
        phases,
        labels: frame.labels,
    };
    Ok((corrected, shifts))
}

/// Least-squares polynomial smoothing coefficients for a centred window.
#[derive(Debug, Clone, PartialEq)]
pub struct SavGolKernel {
    pub coefficients: Vec<f64>,
    pub window: usize,
    pub order: usize,
}

impl SavGolKernel {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) || order >= window {
            return Err(Error::InvalidWindow { window, order });
        }
        let half = (window / 2) as i64;
        let scale = if half == 0 { 1.0 } else { half as f64 };
        let xs: Vec<f64> = (-half..=half).map(|i| i as f64 / scale).collect();
        let terms = order + 1;

        // Normal equations G v = e0 with G = A^T A on the scaled Vandermonde matrix;
        // the smoothed centre value is then sum_i (sum_k v_k x_i^k) y_i.
        let mut moments = vec![0.0; 2 * order + 1];
        for &x in &xs {
            let mut p = 1.0;
            for m in moments.iter_mut() {
                *m += p;
                p *= x;
            }
        }
        let mut g: Vec<Vec<f64>> = (0..terms)
            .map(|r| (0..terms).map(|c| moments[r + c]).collect())
            .collect();
        let mut rhs = vec![0.0; terms];
        rhs[0] = 1.0;
        let v = solve_dense(&mut g, &mut rhs);

        let coefficients = xs
            .iter()
            .map(|&x| {
                let mut p = 1.0;
                let mut acc = 0.0;
                for vk in &v {
                    acc += vk * p;
                    p *= x;
                }
                acc
            })
            .collect();
        Ok(SavGolKernel {
            coefficients,
            window,
            order,
        })
    }

    pub fn half_width(&self) -> usize {
        self.window / 2
    }

    /// Smooths `samples` with mirror padding at both edges.
    pub fn smooth(&self, samples: &[f64]) -> Vec<f64> {
        let n = samples.len();
        if n == 0 {
            return Vec::new();
        }
        let h = self.half_width();
        let padded = mirror_pad(samples, h);
        let mut out = vec![0.0; n];
        const BLOCK: usize = 4096;
        for (b, out_block) in out.chunks_mut(BLOCK).enumerate() {
            let start = b * BLOCK;
            for (tap, &c) in self.coefficients.iter().enumerate() {
                let src = &padded[start + tap..start + tap + out_block.len()];
                for (o, &x) in out_block.iter_mut().zip(src) {
                    *o += c * x;
                }
            }
        }
        out
    }
}

/// Reflects about the first and last sample (the edge sample is not repeated).
fn mirror_pad(samples: &[f64], h: usize) -> Vec<f64> {
    let n = samples.len() as i64;
    let reflect = |mut i: i64| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        i = i.rem_euclid(period);
        if i >= n {
            i = period - i;
        }
        i as usize
    };
    let mut padded = Vec::with_capacity(samples.len() + 2 * h);
    padded.extend((-(h as i64)..0).map(|i| samples[reflect(i)]));
    padded.extend_from_slice(samples);
    padded.extend((n..n + h as i64).map(|i| samples[reflect(i)]));
    padded
}

/// Gaussian elimination with partial pivoting for the small normal-equation system.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Removes the low-frequency component: `samples - smooth(samples)`.
pub fn flatten(samples: &[f64], kernel: &SavGolKernel) -> Vec<f64> {
    let smooth = kernel.smooth(samples);
    samples.iter().zip(smooth).map(|(x, s)| x - s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SAMPLES_PER_CYCLE;

    fn sine(n: usize, phase: f64, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (TAU * i as f64 / n as f64 + phase).sin())
            .collect()
    }

    #[test]
    fn aligned_sine_needs_no_shift() {
        let s = sine(SAMPLES_PER_CYCLE, 0.0, 20.0);
        assert!(fundamental_phase(&s).unwrap().abs() < 1e-9);
        assert_eq!(alignment_shift(&s).unwrap(), 0);
    }

    #[test]
    fn cosine_is_quarter_cycle_ahead() {
        let s = sine(SAMPLES_PER_CYCLE, FRAC_PI_2, 20.0);
        assert!((fundamental_phase(&s).unwrap() - FRAC_PI_2).abs() < 1e-9);
        assert_eq!(alignment_shift(&s).unwrap(), 600_000);
    }

    #[test]
    fn zero_signal_has_no_fundamental() {
        let s = vec![0i8; 1000];
        assert!(matches!(
            fundamental_phase(&s),
            Err(Error::ZeroFundamental { .. })
        ));
    }

    #[test]
    fn delayed_sine_is_restored() {
        let n = SAMPLES_PER_CYCLE;
        let base = sine(n, 0.0, 30.0);
        let delayed = circular_shift(&base, -200_000);
        let d = alignment_shift(&delayed).unwrap();
        let restored = circular_shift(&delayed, d);
        assert!(fundamental_phase(&restored).unwrap().abs() <= 1e-3);
        assert_eq!(d, 200_000);
    }

    #[test]
    fn kernel_rejects_even_window() {
        assert_eq!(
            SavGolKernel::new(4, 2),
            Err(Error::InvalidWindow {
                window: 4,
                order: 2
            })
        );
        assert!(SavGolKernel::new(5, 5).is_err());
    }

    #[test]
    fn five_point_quadratic_kernel() {
        let k = SavGolKernel::new(5, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|c| c / 35.0);
        for (c, e) in k.coefficients.iter().zip(expected) {
            assert!((c - e).abs() < 1e-12, "{c} vs {e}");
        }
    }

    #[test]
    fn kernel_sums_to_one() {
        let k = SavGolKernel::new(99, 3).unwrap();
        let s: f64 = k.coefficients.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_flattens_to_zero() {
        let k = SavGolKernel::new(99, 3).unwrap();
        let out = flatten(&vec![7.0; 5000], &k);
        assert!(out.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn mirror_pad_reflects_without_repeating_edge() {
        let p = mirror_pad(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(p, vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }
}
