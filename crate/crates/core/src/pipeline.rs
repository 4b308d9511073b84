//! Stage drivers shared by the CLI, tests and benchmarks.

use rayon::prelude::*;

use crate::analysis::{Analyzer, FrameAnalysis};
use crate::cluster::fit_all_scopes;
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::features::{
    build_features, derive_templates, feature_manifest, select_template_clusters,
};
use crate::io::artifacts::ClusterArtifact;
use crate::model::Dataset;
use crate::types::SignalFrame;

/// Analyzes a frame stream in parallel batches, keeping input order.
///
/// `batch` bounds how many raw frames are held in memory at once.
pub fn analyze_stream<I>(frames: I, analyzer: &Analyzer, batch: usize) -> Result<Vec<FrameAnalysis>>
where
    I: IntoIterator<Item = Result<SignalFrame>>,
{
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(batch.max(1));
    let mut frames = frames.into_iter();
    loop {
        buf.clear();
        for f in frames.by_ref().take(batch.max(1)) {
            buf.push(f?);
        }
        if buf.is_empty() {
            return Ok(out);
        }
        let done: Vec<FrameAnalysis> = buf
            .par_iter()
            .map(|f| analyzer.analyze_frame(f))
            .collect::<Result<_>>()?;
        out.extend(done);
    }
}

/// Default batch size: a few frames per worker.
pub fn default_batch() -> usize {
    rayon::current_num_threads() * 2
}

/// Fits every cluster scope, then picks and derives the template bank.
pub fn fit_cluster_artifact(
    analyses: &[FrameAnalysis],
    cfg: &PipelineConfig,
) -> Result<ClusterArtifact> {
    let clusters = fit_all_scopes(analyses, cfg)?;
    let template_clusters = match &cfg.template_clusters {
        Some(ids) => ids.clone(),
        None => select_template_clusters(analyses, &clusters.all),
    };
    let templates = derive_templates(analyses, &clusters.all, &template_clusters)?;
    Ok(ClusterArtifact {
        clusters,
        templates,
        template_clusters,
    })
}

/// Feature table for `analyses`; labels are the frame-level fault flags.
pub fn featurize(analyses: &[FrameAnalysis], artifact: &ClusterArtifact) -> Dataset {
    let names = feature_manifest(artifact.clusters.all.k, artifact.clusters.phases[0].k);
    let rows: Vec<Vec<f64>> = analyses
        .par_iter()
        .map(|a| build_features(a, &artifact.clusters, &artifact.templates).values)
        .collect();
    Dataset {
        names,
        ids: analyses.iter().map(|a| a.id.clone()).collect(),
        rows,
        labels: analyses
            .iter()
            .map(|a| a.is_faulty().map(u8::from))
            .collect(),
    }
}
