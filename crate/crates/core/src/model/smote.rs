//! Borderline minority oversampling guided by a linear max-margin separator.
//!
//! A linear SVM is trained by stochastic subgradient descent on standardized
//! features. Minority rows inside the margin band `|w.x + b| <= 1` are the
//! borderline set; synthetic rows are interpolated between a borderline row and
//! one of its nearest minority neighbours until the minority/majority ratio
//! reaches `alpha`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OversampleConfig {
    /// Target minority/majority ratio, in (0, 1).
    pub alpha: f64,
    pub neighbors: usize,
    pub svm_epochs: usize,
    /// Regularisation of the hinge-loss objective.
    pub svm_lambda: f64,
}

impl OversampleConfig {
    pub fn from_config(c: &PipelineConfig) -> Self {
        OversampleConfig {
            alpha: c.smote_alpha,
            neighbors: c.smote_neighbors,
            svm_epochs: c.smote_svm_epochs,
            svm_lambda: 1e-3,
        }
    }
}

/// Interpolation record of one synthetic row: `row = a + lambda * (b - a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParents {
    pub a: usize,
    pub b: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Oversampled {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// `Some` for synthetic rows (appended after the originals).
    pub parents: Vec<Option<SyntheticParents>>,
}

impl Oversampled {
    pub fn synthetic_count(&self) -> usize {
        self.parents.iter().filter(|p| p.is_some()).count()
    }
}

/// `ceil(alpha * majority)`, guarded against representation error in the product.
pub fn target_minority_count(majority: usize, alpha: f64) -> usize {
    let t = alpha * majority as f64;
    let r = t.round();
    if (t - r).abs() < 1e-9 * t.max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for r in x {
        for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(f64::sqrt).collect();
    x.iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Pegasos-style linear SVM; labels are +1 for the minority class.
fn linear_svm(
    z: &[Vec<f64>],
    sign: &[f64],
    epochs: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let d = z[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut t = 0usize;
    let mut order: Vec<usize> = (0..z.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * (t as f64 + 100.0));
            let margin = sign[i] * (dot(&w, &z[i]) + b);
            let shrink = 1.0 - eta * lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, zj) in w.iter_mut().zip(&z[i]) {
                    *wj += eta * sign[i] * zj;
                }
                b += eta * sign[i] * 0.1;
            }
        }
    }
    (w, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversamples label 1 (faulty) to `ceil(alpha * majority)` rows. Original rows
/// are returned unchanged and first.
pub fn smote_svm(
    x: &[Vec<f64>],
    y: &[u8],
    cfg: &OversampleConfig,
    seed: u64,
) -> Result<Oversampled> {
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let majority = y.len() - minority.len();
    if minority.len() < 2 {
        return Err(Error::TooFewMinority(minority.len()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    let mut out = Oversampled {
        rows: x.to_vec(),
        labels: y.to_vec(),
        parents: vec![None; x.len()],
    };
    let target = target_minority_count(majority, cfg.alpha);
    if minority.len() >= target {
        return Ok(out);
    }
    let needed = target - minority.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = standardize(x);
    let sign: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let (w, b) = linear_svm(&z, &sign, cfg.svm_epochs, cfg.svm_lambda, &mut rng);
    let score = |i: usize| dot(&w, &z[i]) + b;

    let mut borderline: Vec<usize> = minority
        .iter()
        .copied()
        .filter(|&i| score(i).abs() <= 1.0)
        .collect();
    if borderline.is_empty() {
        // no minority row in the band: fall back to margin violators, then to all
        borderline = minority
            .iter()
            .copied()
            .filter(|&i| score(i) < 1.0)
            .collect();
    }
    if borderline.is_empty() {
        borderline = minority.clone();
    }

    let k = cfg.neighbors.min(minority.len() - 1).max(1);
    let neighbours: Vec<Vec<usize>> = borderline
        .iter()
        .map(|&i| {
            let mut cand: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (sq_dist(&z[i], &z[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|c| c.1).collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..borderline.len()).collect();
    let mut made = 0;
    'outer: loop {
        order.shuffle(&mut rng);
        for &bi in &order {
            if made == needed {
                break 'outer;
            }
            let a = borderline[bi];
            let nb = &neighbours[bi];
            let bsel = nb[rng.random_range(0..nb.len())];
            let lambda: f64 = rng.random();
            let row = x[a]
                .iter()
                .zip(&x[bsel])
                .map(|(u, v)| u + lambda * (v - u))
                .collect();
            out.rows.push(row);
            out.labels.push(1);
            out.parents
                .push(Some(SyntheticParents { a, b: bsel, lambda }));
            made += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> OversampleConfig {
        OversampleConfig {
            alpha,
            neighbors: 5,
            svm_epochs: 20,
            svm_lambda: 1e-3,
        }
    }

    #[test]
    fn target_count_arithmetic() {
        assert_eq!(target_minority_count(8187, 0.15), 1229);
        assert_eq!(target_minority_count(100, 0.2), 20);
        assert_eq!(target_minority_count(101, 0.2), 21);
    }

    #[test]
    fn satisfied_ratio_adds_nothing() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let o = smote_svm(&x, &y, &cfg(0.2), 0).unwrap();
        assert_eq!(o.synthetic_count(), 0);
        assert_eq!(o.rows, x);
    }

    #[test]
    fn too_few_minority() {
        let x = vec![vec![0.0]; 5];
        assert_eq!(
            smote_svm(&x, &[0, 0, 0, 0, 1], &cfg(0.5), 0),
            Err(Error::TooFewMinority(1))
        );
    }

    #[test]
    fn two_point_minority_stays_on_segment() {
        let mut x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let mut y = vec![1, 1];
        for i in 0..40 {
            x.push(vec![2.0 + (i % 5) as f64 * 0.1, 2.0 + (i / 5) as f64 * 0.1]);
            y.push(0);
        }
        let o = smote_svm(&x, &y, &cfg(0.5), 3).unwrap();
        assert_eq!(o.synthetic_count(), 18);
        for r in &o.rows[42..] {
            assert!((r[0] - r[1]).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r[0]));
        }
        assert_eq!(&o.rows[..42], &x[..]);
        assert!(o.labels[42..].iter().all(|&l| l == 1));
    }
}
