use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Precision, RunConfig};
use super::dataset::{ingest, Dataset, VideoData};
use super::manifest::{hash_dir, write_file, RunManifest};
use super::stages::{prepare_videos, sha256_hex, stage_hashes, ChunkData, PrepareOptions, StageContext};
use crate::dgcn::{
    cast_matrix_f32, load_checkpoint, predict, save_checkpoint, train, Checkpoint, ModelParams, Real, TrainSample,
    TrainedModel,
};
use crate::error::{Error, Result, StageExt};
use crate::graph::{adjacency, FrameSequence};
use crate::metrics::{frame_accuracy, full_report, MetricsReport, VideoResult};

/// File stem shared by every per-chunk artifact.
pub fn chunk_stem(video: &str, chunk: usize) -> String {
    format!("{video}.{chunk}")
}

pub fn to_samples<F: Real>(chunks: &[ChunkData]) -> Vec<TrainSample<F>> {
    chunks
        .par_iter()
        .map(|c| TrainSample {
            id: chunk_stem(&c.video_id, c.chunk),
            graph: crate::dgcn::PreparedGraph::new(&adjacency(&c.graph)),
            features: cast_matrix_f32(&c.fused),
            labels: c.gt.clone(),
        })
        .collect()
}

/// Disk-backed commands always cache structural embeddings.
fn with_disk_cache(cfg: &RunConfig) -> RunConfig {
    RunConfig {
        cache_dir: Some(cfg.cache_root()),
        ..cfg.clone()
    }
}

fn context<'a>(ds: &'a Dataset, cfg: &'a RunConfig) -> Result<StageContext<'a>> {
    let cache = cfg.cache_dir.clone();
    StageContext::new(cfg, &ds.map, cache)
}

pub struct TrainOutcome<F> {
    pub model: TrainedModel<F>,
    pub chunks: Vec<ChunkData>,
    /// Eval-mode frame accuracy on the training chunks, in percent.
    pub train_accuracy: f64,
    pub prepare_seconds: f64,
    pub train_seconds: f64,
}

/// Builds training graphs and features, then fits the classifier.
pub fn train_dataset<F: Real>(ds: &Dataset, cfg: &RunConfig) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let videos: Vec<&VideoData> = ds.train_videos().collect();
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ctx = context(ds, cfg)?;
    let t0 = Instant::now();
    let chunks = prepare_videos(
        &videos,
        &ctx,
        PrepareOptions {
            source: cfg.switches.train_labels,
            strip_semantic: false,
        },
    )?;
    let prepare_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let samples = to_samples::<F>(&chunks);
    let hyper = cfg.hyper_params();
    let model = train(&samples, ds.map.num_classes(), &hyper).stage("train")?;
    let train_seconds = t1.elapsed().as_secs_f64();

    let fwd = hyper.forward_config();
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for s in &samples {
        pred.extend(predict(&s.graph, &s.features, &model.params, &fwd)?.labels);
        gt.extend_from_slice(&s.labels);
    }
    let train_accuracy = frame_accuracy(&pred, &gt, cfg.metrics.exclude_background)?;
    log::info!("trained on {} chunks: accuracy {train_accuracy:.2}%", chunks.len());
    Ok(TrainOutcome {
        model,
        chunks,
        train_accuracy,
        prepare_seconds,
        train_seconds,
    })
}

pub struct Evaluation {
    pub report: MetricsReport,
    /// Stitched frame predictions per test video, sorted by id.
    pub predictions: BTreeMap<String, Vec<usize>>,
    pub chunks: Vec<ChunkData>,
    pub prepare_seconds: f64,
}

/// Scores the test split with trained parameters.
pub fn evaluate_dataset<F: Real>(ds: &Dataset, cfg: &RunConfig, params: &ModelParams<F>) -> Result<Evaluation> {
    cfg.validate()?;
    let videos: Vec<&VideoData> = ds.test_videos().collect();
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims = params.dims();
    if dims.classes != ds.map.num_classes() {
        return Err(Error::Shape(format!(
            "checkpoint predicts {} classes, label map has {}",
            dims.classes,
            ds.map.num_classes()
        )));
    }
    let ctx = context(ds, cfg)?;
    let t0 = Instant::now();
    let chunks = prepare_videos(
        &videos,
        &ctx,
        PrepareOptions {
            source: cfg.switches.test_labels,
            strip_semantic: !cfg.switches.test_semantic,
        },
    )?;
    let prepare_seconds = t0.elapsed().as_secs_f64();
    if let Some(c) = chunks.iter().find(|c| c.fused.ncols() != dims.input) {
        return Err(Error::Shape(format!(
            "{}: {} feature columns, checkpoint expects {}",
            chunk_stem(&c.video_id, c.chunk),
            c.fused.ncols(),
            dims.input
        )));
    }
    let fwd = cfg.hyper_params().forward_config();
    let samples = to_samples::<F>(&chunks);
    let outputs = samples
        .par_iter()
        .map(|s| predict(&s.graph, &s.features, params, &fwd))
        .collect::<Result<Vec<_>>>()
        .stage("eval")?;

    let mut per_video: BTreeMap<&str, (Vec<Array2<f64>>, Vec<usize>)> = BTreeMap::new();
    for (c, out) in chunks.iter().zip(outputs) {
        let entry = per_video.entry(&c.video_id).or_default();
        entry.0.push(out.log_probs.mapv(|v| v.to_f64().unwrap_or(f64::NAN)));
        entry.1.extend(out.labels);
    }
    let mut results = Vec::with_capacity(videos.len());
    for v in &videos {
        let (blocks, pred) = per_video.remove(v.id.as_str()).expect("every video has chunks");
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let scores = concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        results.push(VideoResult {
            video_id: v.id.clone(),
            pred,
            scores,
            gt: v.gt.labels.clone(),
        });
    }
    let report = full_report(&results, cfg.metrics).stage("eval")?;
    let predictions = results.into_iter().map(|r| (r.video_id, r.pred)).collect();
    Ok(Evaluation {
        report,
        predictions,
        chunks,
        prepare_seconds,
    })
}

fn save_graphs(chunks: &[ChunkData], dir: &Path) -> Result<()> {
    chunks.par_iter().try_for_each(|c| {
        let path = dir.join(format!("{}.json", chunk_stem(&c.video_id, c.chunk)));
        write_file(&path, c.graph.to_json().as_bytes())
    })
}

fn loss_csv<F>(model: &TrainedModel<F>) -> String {
    let mut out = String::from("epoch,batch,loss_cls,loss_edge,loss_total\n");
    for r in &model.losses {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.batch, r.cls, r.edge, r.total).expect("string write");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub chunks: usize,
    pub train_accuracy: f64,
    pub final_epoch_loss: f64,
}

/// Trains and writes graphs, checkpoint, loss log and run manifest under `out_dir`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let ds = ingest(&cfg.data)?;
    let cfg = &with_disk_cache(cfg);
    match cfg.precision {
        Precision::F32 => train_to_disk::<f32>(&ds, cfg),
        Precision::F64 => train_to_disk::<f64>(&ds, cfg),
    }
}

fn train_to_disk<F: Real>(ds: &Dataset, cfg: &RunConfig) -> Result<TrainSummary> {
    let out = &cfg.out_dir;
    let outcome = train_dataset::<F>(ds, cfg)?;
    save_graphs(&outcome.chunks, &out.join("graphs").join("train"))?;
    let ckpt_dir = out.join("checkpoint");
    save_checkpoint(
        &ckpt_dir,
        &Checkpoint {
            params: outcome.model.params.clone(),
            adam: outcome.model.adam.clone(),
            hyper: cfg.hyper_params(),
            epoch: outcome.model.epochs,
        },
    )?;
    let csv = loss_csv(&outcome.model);
    write_file(&out.join("losses.csv"), csv.as_bytes())?;

    let mut manifest = RunManifest::new("train", cfg);
    for (i, (name, hash)) in stage_hashes(&outcome.chunks).into_iter().enumerate() {
        manifest.push(name, hash, (i == 0).then_some(outcome.prepare_seconds));
    }
    manifest.push("train", hash_dir(&ckpt_dir)?, Some(outcome.train_seconds));
    manifest.push("losses", sha256_hex(csv.as_bytes()), None);
    manifest.save(&out.join("run_manifest.json"))?;
    Ok(TrainSummary {
        chunks: outcome.chunks.len(),
        train_accuracy: outcome.train_accuracy,
        final_epoch_loss: outcome.model.epoch_losses().last().copied().unwrap_or(f64::NAN),
    })
}

/// Evaluates a checkpoint and writes the report, stitched predictions and test graphs.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricsReport> {
    let ds = ingest(&cfg.data)?;
    let cfg = &with_disk_cache(cfg);
    match cfg.precision {
        Precision::F32 => eval_to_disk::<f32>(&ds, cfg, checkpoint),
        Precision::F64 => eval_to_disk::<f64>(&ds, cfg, checkpoint),
    }
}

fn eval_to_disk<F: Real>(ds: &Dataset, cfg: &RunConfig, checkpoint: &Path) -> Result<MetricsReport> {
    let out = &cfg.out_dir;
    let ckpt = load_checkpoint::<F>(checkpoint)?;
    let t0 = Instant::now();
    let ev = evaluate_dataset(ds, cfg, &ckpt.params)?;
    let eval_seconds = t0.elapsed().as_secs_f64() - ev.prepare_seconds;
    save_graphs(&ev.chunks, &out.join("graphs").join("test"))?;
    let pred_dir = out.join("predictions");
    for (id, labels) in &ev.predictions {
        let text = FrameSequence::new(id.clone(), labels.clone())?.to_text(&ds.map)?;
        write_file(&pred_dir.join(format!("{id}.txt")), text.as_bytes())?;
    }
    let report_path = out.join("report.json");
    let text = serde_json::to_string_pretty(&ev.report).map_err(|e| Error::json(&report_path, e))? + "\n";
    write_file(&report_path, text.as_bytes())?;

    let mut manifest = RunManifest::new("eval", cfg);
    for (i, (name, hash)) in stage_hashes(&ev.chunks).into_iter().enumerate() {
        manifest.push(name, hash, (i == 0).then_some(ev.prepare_seconds));
    }
    manifest.push("checkpoint", hash_dir(checkpoint)?, None);
    manifest.push("predictions", hash_dir(&pred_dir)?, Some(eval_seconds));
    manifest.push("eval", sha256_hex(text.as_bytes()), None);
    manifest.save(&out.join("eval_manifest.json"))?;
    Ok(ev.report)
}

/// Which intermediate artifact [`export_stage`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Graphs,
    Structural,
    Semantic,
}

/// Writes one stage's per-chunk outputs for a split into `out_dir/<kind>/<split>/`.
/// Returns the number of files written.
pub fn export_stage(cfg: &RunConfig, kind: ExportKind, test_split: bool) -> Result<usize> {
    cfg.validate()?;
    let ds = ingest(&cfg.data)?;
    let mut cfg = with_disk_cache(cfg);
    match kind {
        ExportKind::Structural => cfg.switches.modalities.structural = true,
        ExportKind::Semantic => cfg.switches.modalities.semantic = true,
        ExportKind::Graphs => {}
    }
    let ctx = context(&ds, &cfg)?;
    let (videos, opts): (Vec<&VideoData>, _) = if test_split {
        (
            ds.test_videos().collect(),
            PrepareOptions {
                source: cfg.switches.test_labels,
                strip_semantic: !cfg.switches.test_semantic,
            },
        )
    } else {
        (
            ds.train_videos().collect(),
            PrepareOptions {
                source: cfg.switches.train_labels,
                strip_semantic: false,
            },
        )
    };
    let chunks = prepare_videos(&videos, &ctx, opts)?;
    let split = if test_split { "test" } else { "train" };
    let (sub, dir) = match kind {
        ExportKind::Graphs => ("graphs", cfg.out_dir.join("graphs").join(split)),
        ExportKind::Structural => ("structural", cfg.out_dir.join("structural").join(split)),
        ExportKind::Semantic => ("semantic", cfg.out_dir.join("semantic").join(split)),
    };
    match kind {
        ExportKind::Graphs => save_graphs(&chunks, &dir)?,
        ExportKind::Structural | ExportKind::Semantic => {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for c in &chunks {
                let m = if kind == ExportKind::Structural {
                    &c.structural
                } else {
                    &c.semantic
                };
                let m = m.as_ref().expect("modality forced on");
                crate::matrix_io::save_f32(&dir.join(format!("{}.bin", chunk_stem(&c.video_id, c.chunk))), m)?;
            }
        }
    }
    log::info!("wrote {} {sub} files to {}", chunks.len(), dir.display());
    Ok(chunks.len())
}
