use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{BackendKind, LabelSource, RunConfig};
use super::dataset::VideoData;
use crate::error::{Error, Result, StageExt};
use crate::graph::{build_graph, chunk_ranges, EdgeSelection, FrameSequence, LabelMap, VideoGraph};
use crate::matrix_io::{encode_f32, load_f32, save_f32};
use crate::node2vec::embed_structure;
use crate::semantic::{concat_columns, embed_semantic, EncoderBackend, SEMANTIC_DIM};

/// One chunk graph with its feature blocks and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkData {
    pub video_id: String,
    pub chunk: usize,
    pub frames: Range<usize>,
    pub graph: VideoGraph,
    pub visual: Option<Array2<f32>>,
    pub structural: Option<Array2<f32>>,
    pub semantic: Option<Array2<f32>>,
    /// Enabled blocks concatenated in the order visual, structural, semantic.
    pub fused: Array2<f32>,
    pub gt: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareOptions {
    pub source: LabelSource,
    /// Removes semantic edges and zeroes semantic features.
    pub strip_semantic: bool,
}

pub fn make_backend(cfg: &RunConfig) -> Result<EncoderBackend> {
    match cfg.prompt.backend {
        BackendKind::Stub => Ok(EncoderBackend::Stub {
            seed: cfg.seed,
            dim: SEMANTIC_DIM,
        }),
        BackendKind::Table => {
            let path = cfg
                .data
                .embedding_table
                .as_ref()
                .ok_or_else(|| Error::Config("table backend needs data.embedding_table".into()))?;
            EncoderBackend::load_table(path)
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Edge-drop generator for one chunk: the run seed plus a stream derived from the chunk name.
fn chunk_rng(seed: u64, video: &str, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(xxhash_rust::xxh64::xxh64(format!("{video}/{chunk}").as_bytes(), 0));
    rng
}

/// The graph a run uses for one chunk, after edge switches and random dropping.
pub fn chunk_graph(seq: &FrameSequence, chunk: usize, cfg: &RunConfig, strip_semantic: bool) -> Result<VideoGraph> {
    let sw = &cfg.switches;
    let mut g = build_graph(seq, cfg.graph.gamma)?.with_chunk(chunk).select(sw.edges);
    if let Some(p) = sw.random_edge_drop {
        let mut rng = chunk_rng(cfg.seed, &seq.video_id, chunk);
        g = g.drop_random(sw.random_edge_kinds.kinds(), 1.0 - p, &mut rng);
    }
    if strip_semantic {
        g = g.select(EdgeSelection {
            positive: false,
            negative: false,
            ..sw.edges
        });
    }
    Ok(g)
}

/// node2vec features, cached on disk by a hash of the graph and walk settings.
fn structural_features(graph: &VideoGraph, cfg: &RunConfig, cache: Option<&Path>) -> Result<Array2<f32>> {
    let walk = cfg.walk_config();
    let key_src = format!(
        "{}\n{}",
        graph.to_json(),
        serde_json::to_string(&walk).expect("walk config serializes")
    );
    let path: Option<PathBuf> = cache.map(|dir| {
        dir.join("structural")
            .join(format!("{}.bin", sha256_hex(key_src.as_bytes())))
    });
    if let Some(p) = path.as_ref().filter(|p| p.is_file()) {
        if let Ok(m) = load_f32(p) {
            if m.nrows() == graph.node_count() && m.ncols() == walk.dimension {
                return Ok(m);
            }
        }
        log::warn!("ignoring unreadable cache entry {}", p.display());
    }
    let m = embed_structure(graph, &walk)?.matrix;
    if let Some(p) = path {
        let dir = p.parent().expect("cache entries live in a directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // write under a unique name first so concurrent writers never expose partial files
        let tmp = p.with_extension(format!("{}.tmp.bin", std::process::id()));
        save_f32(&tmp, &m)?;
        let side_tmp = crate::matrix_io::manifest_path(&tmp);
        let side = crate::matrix_io::manifest_path(&p);
        fs::rename(&side_tmp, &side).map_err(|e| Error::io(&side, e))?;
        fs::rename(&tmp, &p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(m)
}

fn prepare_chunk(
    video: &VideoData,
    source: &FrameSequence,
    chunk: usize,
    range: Range<usize>,
    ctx: &StageContext<'_>,
    opts: PrepareOptions,
) -> Result<ChunkData> {
    let cfg = ctx.cfg;
    let mods = cfg.switches.modalities;
    let seq = FrameSequence::new(video.id.clone(), source.labels[range.clone()].to_vec())?.pseudo(source.is_pseudo);
    let graph = chunk_graph(&seq, chunk, cfg, opts.strip_semantic).stage("build_graph")?;
    let visual = mods
        .visual
        .then(|| video.visual.slice(s![range.clone(), ..]).to_owned());
    let structural = if mods.structural {
        Some(structural_features(&graph, cfg, ctx.cache.as_deref()).stage("embed_structure")?)
    } else {
        None
    };
    let semantic = if mods.semantic {
        let m = embed_semantic(&seq, ctx.map, cfg.prompt.template, &ctx.backend)
            .stage("embed_semantic")?
            .matrix;
        Some(if opts.strip_semantic { Array2::zeros(m.dim()) } else { m })
    } else {
        None
    };
    let blocks: Vec<&Array2<f32>> = [&visual, &structural, &semantic]
        .into_iter()
        .filter_map(Option::as_ref)
        .collect();
    let fused = concat_columns(&blocks).stage("fuse")?;
    Ok(ChunkData {
        video_id: video.id.clone(),
        chunk,
        gt: video.gt.labels[range.clone()].to_vec(),
        frames: range,
        graph,
        visual,
        structural,
        semantic,
        fused,
    })
}

/// Shared inputs for feature preparation.
pub struct StageContext<'a> {
    pub cfg: &'a RunConfig,
    pub map: &'a LabelMap,
    pub backend: EncoderBackend,
    pub cache: Option<PathBuf>,
}

impl<'a> StageContext<'a> {
    pub fn new(cfg: &'a RunConfig, map: &'a LabelMap, cache: Option<PathBuf>) -> Result<Self> {
        Ok(Self {
            cfg,
            map,
            backend: make_backend(cfg)?,
            cache,
        })
    }
}

/// Chunks every video, builds graphs from the chosen labels and assembles features.
/// Output order follows the input videos, then chunk index.
pub fn prepare_videos(videos: &[&VideoData], ctx: &StageContext<'_>, opts: PrepareOptions) -> Result<Vec<ChunkData>> {
    let mut jobs = Vec::new();
    for v in videos {
        let source = match opts.source {
            LabelSource::GroundTruth => &v.gt,
            LabelSource::Pseudo => v.pseudo.as_ref().ok_or_else(|| Error::MissingFile {
                what: "pseudo-labels",
                video: v.id.clone(),
                path: ctx
                    .cfg
                    .data
                    .pseudo_labels_dir
                    .clone()
                    .unwrap_or_default()
                    .join(format!("{}.txt", v.id)),
            })?,
        };
        for (k, r) in chunk_ranges(v.len(), ctx.cfg.graph.chunk_size)?.into_iter().enumerate() {
            jobs.push((*v, source, k, r));
        }
    }
    jobs.into_par_iter()
        .map(|(v, src, k, r)| prepare_chunk(v, src, k, r, ctx, opts))
        .collect()
}

/// Content hashes of the graph and feature stages, for run manifests.
pub fn stage_hashes(chunks: &[ChunkData]) -> Vec<(&'static str, String)> {
    let mut graphs = Sha256::new();
    let mut structural = Sha256::new();
    let mut semantic = Sha256::new();
    let mut fused = Sha256::new();
    for c in chunks {
        graphs.update(c.graph.to_json().as_bytes());
        if let Some(m) = &c.structural {
            structural.update(encode_f32(m));
        }
        if let Some(m) = &c.semantic {
            semantic.update(encode_f32(m));
        }
        fused.update(encode_f32(&c.fused));
    }
    vec![
        ("build_graph", hex::encode(graphs.finalize())),
        ("embed_structure", hex::encode(structural.finalize())),
        ("embed_semantic", hex::encode(semantic.finalize())),
        ("fuse", hex::encode(fused.finalize())),
    ]
}
