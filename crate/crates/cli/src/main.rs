use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use pdfault_core::analysis::{Analyzer, FrameAnalysis};
use pdfault_core::features::build_features;
use pdfault_core::io::artifacts::{read_analyses, write_analyses, ClusterArtifact};
use pdfault_core::io::columnar::open_columnar;
use pdfault_core::io::tables::{
    read_features, read_predictions, write_features, write_importance, write_jsonl,
    write_predictions, write_pulses, write_sweep, Prediction, PreprocessRecord,
};
use pdfault_core::io::{
    load_clusters, load_model, save_clusters, save_model, SigbReader, SigbWriter, SynthScenario,
};
use pdfault_core::metrics::{confusion, mcc, precision_recall, threshold_sweep};
use pdfault_core::model::train_ensemble;
use pdfault_core::pipeline::{analyze_stream, default_batch, featurize, fit_cluster_artifact};
use pdfault_core::preprocess::phase_correct;
use pdfault_core::{Phase, PipelineConfig, SignalFrame, Variant};

#[derive(Parser)]
#[command(
    name = "pdfault",
    version,
    about = "Partial-discharge fault detection for covered-conductor signals"
)]
struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true, env = "PDFAULT_CONFIG")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth pulse log.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines ground truth (default: <out>.truth.jsonl).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Convert a metadata CSV and a column matrix into a signal container.
    Import {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase-correct every frame; writes the corrected container and a noise sidecar.
    Preprocess {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines shifts and noise levels (default: <out>.noise.jsonl).
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Detect pulses and extract their waveforms.
    Detect {
        input: PathBuf,
        /// Sidecar from `preprocess`; when given, the input is taken as already corrected.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional pulse table.
        #[arg(long)]
        pulses: Option<PathBuf>,
    },
    /// Fit or apply the waveform cluster models.
    #[command(subcommand)]
    Cluster(ClusterCommand),
    /// Build the frame feature table.
    Featurize {
        #[arg(long)]
        analyses: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a cross-validated ensemble.
    Train(TrainArgs),
    /// Score a feature table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decision threshold (default: the model's).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Metrics for a labelled prediction table.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Write a threshold sweep to this CSV.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        sweep_lo: f64,
        #[arg(long, default_value_t = 0.8)]
        sweep_hi: f64,
        #[arg(long, default_value_t = 0.005)]
        sweep_step: f64,
    },
    /// Per-feature split gain of a model.
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-threaded per-frame timings and counts for a dataset.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Frames to time.
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClusterCommand {
    Fit {
        #[arg(long)]
        analyses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Assign {
        #[arg(long)]
        analyses: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::upper_case_acronyms)]
enum VariantArg {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "III")]
    III,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value = "II")]
    variant: VariantArg,
    /// Oversampling ratio for variant III.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seeds in the ensemble (default: `ensemble_seeds`).
    #[arg(long)]
    seeds: Option<usize>,
    /// Folds per seed (default: `folds`).
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Cross-validation report (default: <out>.cv.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    for kv in &cli.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!(pdfault_core::Error::Config(format!(
                "--set expects KEY=VALUE, got {kv:?}"
            )));
        };
        cfg.set_kv(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Processes a frame stream in parallel batches and hands results to `sink` in input order.
fn for_each_batch<T: Send>(
    frames: impl Iterator<Item = pdfault_core::Result<SignalFrame>>,
    work: impl Fn(&SignalFrame) -> pdfault_core::Result<T> + Sync,
    mut sink: impl FnMut(SignalFrame, T) -> anyhow::Result<()>,
) -> anyhow::Result<usize> {
    let batch = default_batch();
    let mut frames = frames.peekable();
    let mut n = 0;
    while frames.peek().is_some() {
        let buf: Vec<SignalFrame> = frames
            .by_ref()
            .take(batch)
            .collect::<pdfault_core::Result<_>>()?;
        let out: Vec<T> = buf
            .par_iter()
            .map(&work)
            .collect::<pdfault_core::Result<_>>()?;
        for (f, o) in buf.into_iter().zip(out) {
            sink(f, o)?;
            n += 1;
        }
    }
    Ok(n)
}

fn cmd_synth(cli: &Cli, scenario: &Path, out: &Path, truth: Option<&Path>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(scenario)
        .with_context(|| format!("reading {}", scenario.display()))?;
    let mut sc = SynthScenario::from_json(&text)?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    let truth = truth.map_or_else(|| sibling(out, ".truth.jsonl"), Path::to_path_buf);
    let mask = sc.faulty_mask();
    let mut writer = SigbWriter::create(out)?;
    let mut truth_out = create(&truth)?;
    let mut planted_total = 0;
    let batch = default_batch();
    for start in (0..sc.n_frames).step_by(batch) {
        let end = (start + batch).min(sc.n_frames);
        let done: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| sc.generate_frame(i, mask[i]))
            .collect();
        for (frame, planted) in done {
            writer.write_frame(&frame)?;
            planted_total += planted.len();
            write_jsonl(&mut truth_out, &planted)?;
        }
    }
    writer.finish()?;
    truth_out.flush()?;
    print_json(&json!({
        "frames": sc.n_frames,
        "faulty_frames": sc.faulty_count(),
        "planted_pulses": planted_total,
        "out": out,
        "truth": truth,
    }))
}

fn cmd_import(metadata: &Path, matrix: &Path, out: &Path) -> anyhow::Result<()> {
    let frames = open_columnar(metadata, matrix)?;
    let mut w = SigbWriter::create(out)?;
    let (mut n, mut labels) = (0usize, 0usize);
    for f in frames {
        let f = f?;
        labels += f.labels.iter().filter(|l| l.is_some()).count();
        w.write_frame(&f)?;
        n += 1;
    }
    w.finish()?;
    print_json(&json!({"frames": n, "phase_labels": labels, "out": out}))
}

fn cmd_preprocess(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    sidecar: Option<&Path>,
) -> anyhow::Result<()> {
    let analyzer = Analyzer::new(cfg)?;
    let sidecar = sidecar.map_or_else(|| sibling(out, ".noise.jsonl"), Path::to_path_buf);
    let mut writer = SigbWriter::create(out)?;
    let mut side = create(&sidecar)?;
    let n = for_each_batch(
        SigbReader::open(input)?,
        |f| {
            let (corrected, shifts) = phase_correct(f)?;
            let noise_levels = corrected
                .phases
                .iter()
                .zip(&shifts)
                .map(|(p, &s)| Ok(analyzer.flatten_aligned(p, s)?.noise_level))
                .collect::<pdfault_core::Result<Vec<f64>>>()?;
            Ok((corrected, shifts, noise_levels))
        },
        |_, (corrected, phase_shifts, noise_levels)| {
            writer.write_frame(&corrected)?;
            let rec = PreprocessRecord {
                id: corrected.id,
                phase_shifts,
                noise_levels,
            };
            write_jsonl(&mut side, [rec])?;
            Ok(())
        },
    )?;
    writer.finish()?;
    side.flush()?;
    print_json(&json!({"frames": n, "out": out, "sidecar": sidecar}))
}

fn cmd_detect(
    cfg: &PipelineConfig,
    input: &Path,
    noise: Option<&Path>,
    out: &Path,
    pulses: Option<&Path>,
) -> anyhow::Result<()> {
    let analyzer = Analyzer::new(cfg)?;
    let analyses: Vec<FrameAnalysis> = match noise {
        None => analyze_stream(SigbReader::open(input)?, &analyzer, default_batch())?,
        Some(side) => {
            let records: Vec<PreprocessRecord> = pdfault_core::io::tables::read_jsonl(side)?;
            let mut records = records.into_iter();
            let mut paired = Vec::new();
            for f in SigbReader::open(input)? {
                let f = f?;
                let Some(rec) = records.next() else {
                    bail!(pdfault_core::Error::Parse(format!(
                        "sidecar has no record for frame {}",
                        f.id
                    )));
                };
                if rec.id != f.id || rec.phase_shifts.len() != f.phases.len() {
                    bail!(pdfault_core::Error::Parse(format!(
                        "sidecar record {} does not match frame {}",
                        rec.id, f.id
                    )));
                }
                paired.push((f, rec.phase_shifts));
            }
            paired
                .par_iter()
                .map(|(f, s)| analyzer.analyze_aligned_frame(f, s))
                .collect::<pdfault_core::Result<_>>()?
        }
    };
    write_analyses(out, &analyses)?;
    if let Some(p) = pulses {
        write_pulses(create(p)?, &analyses)?;
    }
    let total: usize = analyses.iter().map(FrameAnalysis::pulse_count).sum();
    print_json(&json!({"frames": analyses.len(), "pulses": total, "out": out}))
}

fn cmd_cluster_fit(cfg: &PipelineConfig, analyses: &Path, out: &Path) -> anyhow::Result<()> {
    let analyses = read_analyses(analyses)?;
    let artifact = fit_cluster_artifact(&analyses, cfg)?;
    save_clusters(out, &artifact)?;
    print_json(&json!({
        "frames": analyses.len(),
        "sse": artifact.clusters.models().map(|m| json!({"scope": m.scope.label(), "k": m.k, "sse": m.sse})).collect::<Vec<_>>(),
        "template_clusters": artifact.template_clusters,
        "out": out,
    }))
}

fn cmd_cluster_assign(analyses: &Path, clusters: &Path, out: &Path) -> anyhow::Result<()> {
    let analyses = read_analyses(analyses)?;
    let art = load_clusters(clusters)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record([
        "frame_id",
        "phase",
        "index",
        "quadrant",
        "phase_cluster",
        "all_cluster",
    ])?;
    let mut n = 0;
    for a in &analyses {
        for p in &a.phases {
            for r in &p.pulses {
                let (pc, ac) = match &r.cluster_window {
                    Some(wf) => (
                        art.clusters.phase(p.phase).assign(&wf.values).to_string(),
                        art.clusters.all.assign(&wf.values).to_string(),
                    ),
                    None => (String::new(), String::new()),
                };
                w.write_record([
                    a.id.clone(),
                    p.phase.name().to_string(),
                    r.pulse.index.to_string(),
                    r.pulse.quadrant.to_string(),
                    pc,
                    ac,
                ])?;
                n += 1;
            }
        }
    }
    w.flush()?;
    print_json(&json!({"pulses": n, "out": out}))
}

fn cmd_featurize(analyses: &Path, clusters: &Path, out: &Path) -> anyhow::Result<()> {
    let analyses = read_analyses(analyses)?;
    let art = load_clusters(clusters)?;
    let data = featurize(&analyses, &art);
    write_features(create(out)?, &data)?;
    print_json(&json!({"frames": data.len(), "features": data.names.len(), "out": out}))
}

fn cmd_train(cfg: &PipelineConfig, a: &TrainArgs) -> anyhow::Result<()> {
    let data = read_features(
        File::open(&a.features).with_context(|| format!("opening {}", a.features.display()))?,
    )?;
    let variant = match a.variant {
        VariantArg::I => Variant::I,
        VariantArg::II => Variant::II,
        VariantArg::III => Variant::III {
            alpha: a.alpha.unwrap_or(cfg.smote_alpha),
        },
    };
    if a.alpha.is_some() && !matches!(variant, Variant::III { .. }) {
        bail!(pdfault_core::Error::Config(
            "--alpha applies to variant III only".into()
        ));
    }
    let seeds = a.seeds.unwrap_or(cfg.ensemble_seeds);
    let folds = a.folds.unwrap_or(cfg.folds);
    let start = Instant::now();
    let (model, report) = train_ensemble(&data, variant, seeds, folds, cfg)?;
    save_model(&a.out, &model)?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".cv.json"));
    serde_json::to_writer_pretty(create(&report_path)?, &report)?;
    print_json(&json!({
        "variant": report.variant,
        "members": report.members,
        "n_features": report.n_features,
        "threshold": report.threshold,
        "oof_mcc": report.oof_mcc,
        "seconds": start.elapsed().as_secs_f64(),
        "model": a.out,
        "report": report_path,
    }))
}

fn cmd_predict(
    model: &Path,
    features: &Path,
    out: &Path,
    threshold: Option<f64>,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let data = read_features(
        File::open(features).with_context(|| format!("opening {}", features.display()))?,
    )?;
    let theta = threshold.unwrap_or(model.threshold);
    let probs = model.predict_dataset(&data)?;
    let preds: Vec<Prediction> = data
        .ids
        .iter()
        .zip(&probs)
        .zip(&data.labels)
        .map(|((id, &p), &label)| Prediction {
            id: id.clone(),
            probability: p,
            decision: u8::from(p >= theta),
            label,
        })
        .collect();
    write_predictions(create(out)?, &preds)?;
    let positives = preds.iter().filter(|p| p.decision == 1).count();
    print_json(
        &json!({"frames": preds.len(), "predicted_faulty": positives, "threshold": theta, "out": out}),
    )
}

fn cmd_evaluate(
    predictions: &Path,
    sweep: Option<&Path>,
    lo: f64,
    hi: f64,
    step: f64,
) -> anyhow::Result<()> {
    let preds = read_predictions(
        File::open(predictions).with_context(|| format!("opening {}", predictions.display()))?,
    )?;
    let labelled: Vec<&Prediction> = preds.iter().filter(|p| p.label.is_some()).collect();
    if labelled.is_empty() {
        bail!(pdfault_core::Error::Parse(
            "no labelled rows to evaluate".into()
        ));
    }
    let truth: Vec<bool> = labelled.iter().map(|p| p.label == Some(1)).collect();
    let decided: Vec<bool> = labelled.iter().map(|p| p.decision == 1).collect();
    let c = confusion(&truth, &decided);
    let (precision, recall) = precision_recall(&c);
    let mut summary = json!({
        "frames": labelled.len(),
        "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn_,
        "mcc": mcc(&c),
        "precision": precision,
        "recall": recall,
    });
    if let Some(path) = sweep {
        if !(step > 0.0 && lo <= hi) {
            bail!(pdfault_core::Error::Config(
                "sweep needs step > 0 and lo <= hi".into()
            ));
        }
        let probs: Vec<f64> = labelled.iter().map(|p| p.probability).collect();
        let s = threshold_sweep(&probs, &truth, lo, hi, step);
        write_sweep(create(path)?, &s.rows)?;
        summary["sweep"] =
            json!({"out": path, "best_threshold": s.best_threshold, "best_mcc": s.best_mcc});
    }
    print_json(&summary)
}

fn cmd_importance(model: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let gains = model.feature_importance();
    match out {
        Some(p) => write_importance(create(p)?, &gains)?,
        None => write_importance(std::io::stdout().lock(), &gains)?,
    }
    Ok(())
}

fn cmd_report(
    cfg: &PipelineConfig,
    data: &Path,
    clusters: &Path,
    model: &Path,
    frames: usize,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let analyzer = Analyzer::new(cfg)?;
    let art: ClusterArtifact = load_clusters(clusters)?;
    let model = load_model(model)?;
    let names =
        pdfault_core::features::feature_manifest(art.clusters.all.k, art.clusters.phases[0].k);
    let mut stage = [0.0f64; 4];
    let (mut n, mut pulses) = (0usize, 0usize);
    for f in SigbReader::open(data)?.take(frames) {
        let f = f?;
        let t = Instant::now();
        let flats = f
            .phases
            .iter()
            .map(|p| analyzer.flatten_phase(p))
            .collect::<pdfault_core::Result<Vec<_>>>()?;
        stage[0] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let analysis = FrameAnalysis {
            id: f.id.clone(),
            labels: f.labels,
            phases: flats
                .iter()
                .zip(Phase::ALL)
                .map(|(s, ph)| analyzer.analyze_flat(s, ph))
                .collect(),
        };
        stage[1] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let fv = build_features(&analysis, &art.clusters, &art.templates);
        stage[2] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        model.predict(&names, &fv.values)?;
        stage[3] += t.elapsed().as_secs_f64();
        n += 1;
        pulses += analysis.pulse_count();
    }
    if n == 0 {
        bail!(pdfault_core::Error::Parse("no frames to time".into()));
    }
    let per = |s: f64| s / n as f64;
    let report = json!({
        "frames": n,
        "pulses": pulses,
        "features": names.len(),
        "members": model.models.len(),
        "seconds_per_frame": {
            "preprocess": per(stage[0]),
            "detect": per(stage[1]),
            "features": per(stage[2]),
            "featurize_total": per(stage[0] + stage[1] + stage[2]),
            "predict": per(stage[3]),
        },
    });
    if let Some(p) = out {
        serde_json::to_writer_pretty(create(p)?, &report)?;
    }
    print_json(&report)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if matches!(cli.command, Command::Report { .. }) {
        pool = pool.num_threads(1);
    } else if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    pool.build_global().context("starting worker pool")?;
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth {
            scenario,
            out,
            truth,
        } => cmd_synth(cli, scenario, out, truth.as_deref()),
        Command::Import {
            metadata,
            matrix,
            out,
        } => cmd_import(metadata, matrix, out),
        Command::Preprocess {
            input,
            out,
            sidecar,
        } => cmd_preprocess(&cfg, input, out, sidecar.as_deref()),
        Command::Detect {
            input,
            noise,
            out,
            pulses,
        } => cmd_detect(&cfg, input, noise.as_deref(), out, pulses.as_deref()),
        Command::Cluster(ClusterCommand::Fit { analyses, out }) => {
            cmd_cluster_fit(&cfg, analyses, out)
        }
        Command::Cluster(ClusterCommand::Assign {
            analyses,
            clusters,
            out,
        }) => cmd_cluster_assign(analyses, clusters, out),
        Command::Featurize {
            analyses,
            clusters,
            out,
        } => cmd_featurize(analyses, clusters, out),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Predict {
            model,
            features,
            out,
            threshold,
        } => cmd_predict(model, features, out, *threshold),
        Command::Evaluate {
            predictions,
            sweep,
            sweep_lo,
            sweep_hi,
            sweep_step,
        } => cmd_evaluate(
            predictions,
            sweep.as_deref(),
            *sweep_lo,
            *sweep_hi,
            *sweep_step,
        ),
        Command::Importance { model, out } => cmd_importance(model, out.as_deref()),
        Command::Report {
            data,
            clusters,
            model,
            frames,
            out,
        } => cmd_report(&cfg, data, clusters, model, *frames, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<pdfault_core::Error>())
                .map_or("Io", pdfault_core::Error::kind);
            let msg = format!("{e:#}");
            eprintln!("{}", json!({"error": kind, "message": msg}));
            ExitCode::FAILURE
        }
    }
}
