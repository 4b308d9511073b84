//! Frame-level features built from detected pulses and the fitted cluster models.
//!
//! All-pulse features: pulse counts (Q1+Q3, Q2+Q4, all), mean and SD of pulse
//! height over Q1+Q3, and eight template-matching degrees (mean RMSE between the
//! Q1+Q3 pulse windows and each template). Cluster-specific features, for every
//! cluster of the all-phase model and of each phase model: count, mean height,
//! SD of height and concentration (mean RMSE of members to the centroid).
//! Undefined means/SDs/RMSEs are coded as -1.

use serde::{Deserialize, Serialize};

use crate::analysis::{FrameAnalysis, PulseRecord};
use crate::cluster::{ClusterModel, ClusterSet};
use crate::config::TEMPLATE_COUNT;
use crate::error::{Error, Result};
use crate::types::{rmse, Phase, Pulse};

pub const MISSING: f64 = -1.0;
pub const ALL_PULSE_FEATURES: usize = 5 + TEMPLATE_COUNT;
pub const CLUSTER_GROUPS: [&str; 4] = ["count", "avg_height", "sd_height", "concentration"];

/// Fixed set of templates for the template-matching degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub templates: Vec<Vec<f64>>,
    pub provenance: Vec<String>,
}

impl TemplateBank {
    pub fn new(templates: Vec<Vec<f64>>, provenance: Vec<String>) -> Result<Self> {
        if templates.len() != TEMPLATE_COUNT || provenance.len() != TEMPLATE_COUNT {
            return Err(Error::Config(format!(
                "template bank needs {TEMPLATE_COUNT} templates, got {}",
                templates.len()
            )));
        }
        let len = templates[0].len();
        if templates.iter().any(|t| t.len() != len) {
            return Err(Error::Config("templates differ in length".into()));
        }
        Ok(TemplateBank {
            templates,
            provenance,
        })
    }

    pub fn template_len(&self) -> usize {
        self.templates[0].len()
    }
}

/// Cluster labels in feature order: all-phase clusters, then phases A, B, C.
pub fn cluster_labels(k_all: usize, k_phase: usize) -> Vec<String> {
    let mut out: Vec<String> = (1..=k_all).map(|i| format!("all_{i:02}")).collect();
    for p in Phase::ALL {
        out.extend((1..=k_phase).map(|i| format!("{p}_{i}")));
    }
    out
}

/// Ordered feature names for the given cluster counts (145 with the defaults).
pub fn feature_manifest(k_all: usize, k_phase: usize) -> Vec<String> {
    let mut names: Vec<String> = [
        "count_q13",
        "count_q24",
        "count_all",
        "avg_height_q13",
        "sd_height_q13",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend((1..=TEMPLATE_COUNT).map(|i| format!("template_rmse_{i}")));
    let clusters = cluster_labels(k_all, k_phase);
    for group in CLUSTER_GROUPS {
        names.extend(clusters.iter().map(|c| format!("{group}_{c}")));
    }
    names
}

/// Names removed from the model variants that drop average-height features.
pub fn is_average_height(name: &str) -> bool {
    name.starts_with("avg_height")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
}

/// Count, mean and population SD of heights; mean and SD are -1 for an empty
/// group.
pub fn count_height_stats(heights: &[f64]) -> (usize, f64, f64) {
    let n = heights.len();
    if n == 0 {
        return (0, MISSING, MISSING);
    }
    let mean = heights.iter().sum::<f64>() / n as f64;
    let var = heights.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / n as f64;
    (n, mean, var.sqrt())
}

/// Mean RMSE between the windows and each template; -1 for every template when
/// no window is given.
pub fn template_match<'a>(
    windows: impl IntoIterator<Item = &'a [f64]>,
    bank: &TemplateBank,
) -> Vec<f64> {
    let mut sums = vec![0.0; bank.templates.len()];
    let mut n = 0usize;
    for w in windows {
        n += 1;
        for (s, t) in sums.iter_mut().zip(&bank.templates) {
            *s += rmse(w, t);
        }
    }
    if n == 0 {
        return vec![MISSING; sums.len()];
    }
    sums.into_iter().map(|s| s / n as f64).collect()
}

/// Per-cluster mean RMSE to the centroid over assigned waveforms; -1 when empty.
pub fn concentration<'a>(
    waveforms: impl IntoIterator<Item = &'a [f64]>,
    model: &ClusterModel,
) -> Vec<f64> {
    let mut sums = vec![0.0; model.k];
    let mut counts = vec![0usize; model.k];
    for w in waveforms {
        let c = model.assign(w);
        sums[c] += rmse(w, &model.centroids[c]);
        counts[c] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| if n == 0 { MISSING } else { s / n as f64 })
        .collect()
}

/// Per-cluster statistics of one scope: count, mean height, SD height, concentration.
fn cluster_stats<'a>(
    records: impl Iterator<Item = &'a PulseRecord>,
    model: &ClusterModel,
) -> [Vec<f64>; 4] {
    let mut heights: Vec<Vec<f64>> = vec![Vec::new(); model.k];
    let mut rmse_sum = vec![0.0; model.k];
    for r in records {
        let Some(w) = &r.cluster_window else { continue };
        let c = model.assign(&w.values);
        heights[c].push(r.pulse.height);
        rmse_sum[c] += rmse(&w.values, &model.centroids[c]);
    }
    let mut out: [Vec<f64>; 4] = Default::default();
    for (h, rs) in heights.iter().zip(rmse_sum) {
        let (n, avg, sd) = count_height_stats(h);
        out[0].push(n as f64);
        out[1].push(avg);
        out[2].push(sd);
        out[3].push(if n == 0 { MISSING } else { rs / n as f64 });
    }
    out
}

pub fn build_features(
    frame: &FrameAnalysis,
    clusters: &ClusterSet,
    bank: &TemplateBank,
) -> FeatureVector {
    let pulses: Vec<&Pulse> = frame.pulse_records().map(|r| &r.pulse).collect();
    let q13: Vec<f64> = pulses
        .iter()
        .filter(|p| p.in_q13())
        .map(|p| p.height)
        .collect();
    let (count_q13, avg_q13, sd_q13) = count_height_stats(&q13);
    let count_all = pulses.len();

    let mut values = vec![
        count_q13 as f64,
        (count_all - count_q13) as f64,
        count_all as f64,
        avg_q13,
        sd_q13,
    ];
    let template_windows = frame
        .pulse_records()
        .filter(|r| r.pulse.in_q13())
        .filter_map(|r| r.template_window.as_ref().map(|w| w.values.as_slice()));
    values.extend(template_match(template_windows, bank));

    let mut groups = cluster_stats(frame.pulse_records(), &clusters.all);
    for phase in Phase::ALL {
        let records = frame
            .phases
            .iter()
            .filter(|pa| pa.phase == phase)
            .flat_map(|pa| pa.pulses.iter());
        let per_phase = cluster_stats(records, clusters.phase(phase));
        for (g, v) in groups.iter_mut().zip(per_phase) {
            g.extend(v);
        }
    }
    for g in groups {
        values.extend(g);
    }
    FeatureVector {
        id: frame.id.clone(),
        values,
    }
}

/// Pulse counts per (cluster, segment) for pulses assigned by `model`, with the
/// cycle split into `n_segments` equal index ranges.
pub fn segment_counts(
    frame: &FrameAnalysis,
    model: &ClusterModel,
    n_segments: usize,
) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; n_segments]; model.k];
    for pa in &frame.phases {
        if let crate::cluster::Scope::Phase(p) = model.scope {
            if p != pa.phase {
                continue;
            }
        }
        for r in &pa.pulses {
            let Some(w) = &r.cluster_window else { continue };
            let seg = (r.pulse.index * n_segments / pa.signal_len.max(1)).min(n_segments - 1);
            counts[model.assign(&w.values)][seg] += 1;
        }
    }
    counts
}

/// Chooses the all-phase clusters whose mean share of a frame's pulses differs
/// most between faulty and non-faulty training frames (faulty higher first).
/// Without both classes present, falls back to the most populated clusters.
pub fn select_template_clusters(analyses: &[FrameAnalysis], all: &ClusterModel) -> Vec<usize> {
    let k = all.k;
    let mut share = [vec![0.0; k], vec![0.0; k]];
    let mut frames = [0usize; 2];
    let mut totals = vec![0usize; k];
    for frame in analyses {
        let mut counts = vec![0usize; k];
        for r in frame.pulse_records() {
            if let Some(w) = &r.cluster_window {
                counts[all.assign(&w.values)] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
        let Some(label) = frame.is_faulty() else {
            continue;
        };
        let class = usize::from(label);
        frames[class] += 1;
        if n > 0 {
            for (s, c) in share[class].iter_mut().zip(&counts) {
                *s += *c as f64 / n as f64;
            }
        }
    }
    let mut ids: Vec<usize> = (0..k).collect();
    if frames[0] > 0 && frames[1] > 0 {
        let score: Vec<f64> = (0..k)
            .map(|c| share[1][c] / frames[1] as f64 - share[0][c] / frames[0] as f64)
            .collect();
        ids.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    } else {
        ids.sort_by(|&a, &b| totals[b].cmp(&totals[a]).then(a.cmp(&b)));
    }
    ids.truncate(TEMPLATE_COUNT.min(k));
    ids
}

/// Templates = mean template-length window over each selected cluster's members.
pub fn derive_templates(
    analyses: &[FrameAnalysis],
    all: &ClusterModel,
    selection: &[usize],
) -> Result<TemplateBank> {
    if selection.len() != TEMPLATE_COUNT {
        return Err(Error::Config(format!(
            "template selection must list {TEMPLATE_COUNT} clusters, got {}",
            selection.len()
        )));
    }
    if let Some(&bad) = selection.iter().find(|&&c| c >= all.k) {
        return Err(Error::Config(format!(
            "template cluster {bad} out of range"
        )));
    }
    let mut sums: Vec<Option<Vec<f64>>> = vec![None; all.k];
    let mut counts = vec![0usize; all.k];
    for r in analyses.iter().flat_map(|f| f.pulse_records()) {
        let (Some(cw), Some(tw)) = (&r.cluster_window, &r.template_window) else {
            continue;
        };
        let c = all.assign(&cw.values);
        if !selection.contains(&c) {
            continue;
        }
        let acc = sums[c].get_or_insert_with(|| vec![0.0; tw.values.len()]);
        for (a, v) in acc.iter_mut().zip(&tw.values) {
            *a += v;
        }
        counts[c] += 1;
    }
    let mut templates = Vec::with_capacity(TEMPLATE_COUNT);
    let mut provenance = Vec::with_capacity(TEMPLATE_COUNT);
    for &c in selection {
        let sum = sums[c].as_ref().ok_or(Error::ClusterEmpty(c))?;
        templates.push(sum.iter().map(|v| v / counts[c] as f64).collect());
        provenance.push(format!(
            "all-phase cluster {} (mean of {} windows)",
            c + 1,
            counts[c]
        ));
    }
    TemplateBank::new(templates, provenance)
}
