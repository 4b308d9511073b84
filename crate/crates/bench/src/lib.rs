//! Input fixtures shared by the benchmarks.

use pdfault_core::analysis::Analyzer;
use pdfault_core::io::synth::SynthScenario;
use pdfault_core::io::ClusterArtifact;
use pdfault_core::model::ensemble::train_ensemble;
use pdfault_core::pipeline::{featurize, fit_cluster_artifact};
use pdfault_core::{Dataset, EnsembleModel, FrameAnalysis, PipelineConfig, SignalFrame, Variant};

/// Synthetic frames with the default scenario, half of them faulty.
pub fn frames(n: usize, seed: u64) -> Vec<SignalFrame> {
    let sc = SynthScenario {
        seed,
        n_frames: n,
        faulty_fraction: 0.5,
        ..Default::default()
    };
    sc.frames().map(|(f, _)| f).collect()
}

/// Everything downstream of detection for a small corpus.
pub struct Fitted {
    pub cfg: PipelineConfig,
    pub analyses: Vec<FrameAnalysis>,
    pub artifact: ClusterArtifact,
    pub data: Dataset,
    pub model: EnsembleModel,
}

pub fn fitted(n: usize) -> Fitted {
    let cfg = PipelineConfig {
        n_trees: 50,
        ..Default::default()
    };
    let analyzer = Analyzer::new(&cfg).expect("default config");
    let analyses: Vec<FrameAnalysis> = frames(n, 7)
        .iter()
        .map(|f| analyzer.analyze_frame(f).expect("synthetic frame"))
        .collect();
    let artifact = fit_cluster_artifact(&analyses, &cfg).expect("cluster fit");
    let data = featurize(&analyses, &artifact);
    let (model, _) = train_ensemble(&data, Variant::II, 2, 3, &cfg).expect("ensemble");
    Fitted {
        cfg,
        analyses,
        artifact,
        data,
        model,
    }
}
