//! k-means clustering (k-means++ seeding, Lloyd iterations) of normalized pulse waveforms.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::FrameAnalysis;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::Phase;

/// Which pulses a cluster model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    Phase(Phase),
    All,
}

impl Scope {
    pub fn label(self) -> &'static str {
        match self {
            Scope::Phase(p) => p.name(),
            Scope::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub scope: Scope,
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub sse: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl ClusterModel {
    /// Nearest centroid by Euclidean distance; ties go to the lower index.
    pub fn assign(&self, x: &[f64]) -> usize {
        nearest_centroid(&self.centroids, x).0
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }
}

/// Outcome of one k-means run, with the SSE after every assignment step.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn distinct_at_least(points: &[Vec<f64>], k: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for p in points {
        seen.insert(p.iter().map(|v| v.to_bits()).collect());
        if seen.len() >= k {
            break;
        }
    }
    seen.len()
}

fn kmeanspp_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            // rounding can walk past the end; fall back to the last positive weight
            if d2[chosen] <= 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .with_min_len(1024)
        .map(|p| nearest_centroid(centroids, p))
        .collect()
}

/// k-means with k-means++ seeding. Stops when no centroid moves more than `tol`
/// or after `max_iter` Lloyd steps. Empty clusters are re-seeded at the point
/// farthest from its centroid.
pub fn kmeans_pp(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::DegenerateInput { k, distinct: 0 });
    }
    let distinct = distinct_at_least(points, k);
    if distinct < k {
        return Err(Error::DegenerateInput { k, distinct });
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_seeds(points, k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut assigned = assign_all(points, &centroids);
        history.push(assigned.iter().map(|a| a.1).sum());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.iter().zip(&assigned) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| {
                if n == 0 {
                    s
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] == 0 {
                let far = assigned
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                next[c] = points[far].clone();
                assigned[far].1 = 0.0;
            }
        }
        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if movement < tol {
            break;
        }
    }
    let sse: f64 = assign_all(points, &centroids).iter().map(|a| a.1).sum();
    history.push(sse);
    Ok(KMeansFit {
        model: ClusterModel {
            scope: Scope::All,
            k,
            seed,
            centroids,
            sse,
        },
        sse_history: history,
        iterations,
    })
}

/// Best (lowest SSE) of `restarts` k-means++ runs seeded `seed, seed+1, ...`.
pub fn kmeans_best_of(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit> {
    let runs: Vec<Result<KMeansFit>> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| kmeans_pp(points, k, seed.wrapping_add(r), max_iter, tol))
        .collect();
    let mut best: Option<KMeansFit> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.model.sse < b.model.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Uniform sample of up to `n_sample` positions out of `n`, ascending.
pub fn sample_pulses(n: usize, n_sample: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= n_sample {
        return (0..n).collect();
    }
    let mut picked = index::sample(rng, n, n_sample).into_vec();
    picked.sort_unstable();
    picked
}

/// SSE per k (best of `seeds` restarts), normalized so the first entry is 1.
pub fn sse_curve(
    points: &[Vec<f64>],
    k_list: &[usize],
    seeds: usize,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    let mut raw = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let fit = kmeans_best_of(points, k, 0, seeds, max_iter, tol)?;
        raw.push((k, fit.model.sse));
    }
    let first = raw.first().map_or(1.0, |r| r.1);
    Ok(raw
        .into_iter()
        .map(|(k, s)| (k, if first > 0.0 { s / first } else { 0.0 }))
        .collect())
}

/// The four fitted scopes: one model per phase plus the all-phase model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub phases: Vec<ClusterModel>,
    pub all: ClusterModel,
}

impl ClusterSet {
    pub fn phase(&self, p: Phase) -> &ClusterModel {
        &self.phases[p.index()]
    }

    pub fn models(&self) -> impl Iterator<Item = &ClusterModel> {
        std::iter::once(&self.all).chain(self.phases.iter())
    }
}

/// Clustering inputs: per-phase and pooled sampled waveforms.
pub struct ClusterCorpus {
    pub phases: [Vec<Vec<f64>>; 3],
    pub all: Vec<Vec<f64>>,
}

/// Samples up to `n_sample` clusterable waveforms per frame and phase.
pub fn sample_corpus(analyses: &[FrameAnalysis], n_sample: usize, seed: u64) -> ClusterCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases: [Vec<Vec<f64>>; 3] = Default::default();
    for frame in analyses {
        for pa in &frame.phases {
            let windows: Vec<&Vec<f64>> = pa
                .pulses
                .iter()
                .filter_map(|r| r.cluster_window.as_ref().map(|w| &w.values))
                .collect();
            for i in sample_pulses(windows.len(), n_sample, &mut rng) {
                phases[pa.phase.index()].push(windows[i].clone());
            }
        }
    }
    let all = phases.iter().flatten().cloned().collect();
    ClusterCorpus { phases, all }
}

pub fn fit_all_scopes(analyses: &[FrameAnalysis], cfg: &PipelineConfig) -> Result<ClusterSet> {
    let corpus = sample_corpus(analyses, cfg.n_sample, cfg.seed);
    let jobs: Vec<(Scope, &Vec<Vec<f64>>, usize)> = vec![
        (Scope::All, &corpus.all, cfg.k_all),
        (Scope::Phase(Phase::A), &corpus.phases[0], cfg.k_phase),
        (Scope::Phase(Phase::B), &corpus.phases[1], cfg.k_phase),
        (Scope::Phase(Phase::C), &corpus.phases[2], cfg.k_phase),
    ];
    let mut fitted: Vec<ClusterModel> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(i, (scope, points, k))| {
            let seed = cfg.seed.wrapping_add(1000 * (i as u64 + 1));
            let fit = kmeans_best_of(
                points,
                k,
                seed,
                cfg.kmeans_restarts,
                cfg.kmeans_max_iter,
                cfg.kmeans_tol,
            )?;
            Ok(ClusterModel { scope, ..fit.model })
        })
        .collect::<Result<_>>()?;
    let all = fitted.remove(0);
    Ok(ClusterSet {
        phases: fitted,
        all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        centers
            .iter()
            .flat_map(|c| {
                (0..per)
                    .map(|_| vec![c[0] + n.sample(&mut rng), c[1] + n.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 6.0]];
        let fit = kmeans_pp(&pts, 1, 7, 300, 1e-6).unwrap();
        let c = &fit.model.centroids[0];
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        // SSE = n * total variance
        let expected = 4.0 + 0.0 + 4.0 + 4.0 + 4.0 + 16.0;
        assert!((fit.model.sse - expected).abs() < 1e-9);
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let fit = kmeans_pp(&pts, 8, 1, 300, 1e-9).unwrap();
        assert_eq!(fit.model.sse, 0.0);
    }

    #[test]
    fn two_blobs_recovered() {
        let sigma = 1.0;
        let pts = blobs(&[[0.0, 0.0], [10.0, 0.0]], 200, sigma, 5);
        let fit = kmeans_pp(&pts, 2, 3, 300, 1e-9).unwrap();
        let mut xs: Vec<f64> = fit.model.centroids.iter().map(|c| c[0]).collect();
        xs.sort_by(f64::total_cmp);
        let mean = |r: std::ops::Range<usize>| {
            pts[r.clone()].iter().map(|p| p[0]).sum::<f64>() / r.len() as f64
        };
        assert!((xs[0] - mean(0..200)).abs() < 0.5 * sigma);
        assert!((xs[1] - mean(200..400)).abs() < 0.5 * sigma);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert_eq!(
            kmeans_pp(&pts, 3, 0, 10, 1e-6).unwrap_err(),
            Error::DegenerateInput { k: 3, distinct: 2 }
        );
        assert!(kmeans_pp(&[], 1, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn lloyd_sse_never_increases() {
        let pts = blobs(
            &[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0], [5.0, 5.0]],
            100,
            1.5,
            9,
        );
        for seed in 0..10 {
            let fit = kmeans_pp(&pts, 6, seed, 300, 1e-9).unwrap();
            for w in fit.sse_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.sse_history);
            }
        }
    }

    #[test]
    fn sampling_caps_and_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_pulses(40, 100, &mut rng),
            (0..40).collect::<Vec<_>>()
        );
        let a = sample_pulses(1000, 100, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_pulses(1000, 100, &mut ChaCha8Rng::seed_from_u64(5));
        let c = sample_pulses(1000, 100, &mut ChaCha8Rng::seed_from_u64(6));
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let set: HashSet<usize> = a.iter().copied().collect();
        assert_eq!(set.len(), 100);
    }

    #[test]
    fn sse_curve_starts_at_one_and_decreases() {
        let pts = blobs(&[[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]], 60, 1.0, 2);
        let curve = sse_curve(&pts, &[1, 2, 3, 4, 6, 8], 3, 300, 1e-9).unwrap();
        assert_eq!(curve[0].1, 1.0);
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn assignment_ties_go_to_lowest_index() {
        let m = ClusterModel {
            scope: Scope::All,
            k: 2,
            seed: 0,
            centroids: vec![vec![1.0], vec![-1.0]],
            sse: 0.0,
        };
        assert_eq!(m.assign(&[0.0]), 0);
        assert_eq!(m.assign(&[-0.1]), 1);
    }
}
