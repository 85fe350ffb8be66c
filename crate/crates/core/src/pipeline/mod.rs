//! End-to-end runs: ingest, graph construction, feature fusion, training, evaluation.

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod run;
pub mod stages;
pub mod synthetic;
pub mod visualize;

pub use ablation::{ablation_csv, grid_rows, run_ablation, run_grid, write_ablation, AblationRow, Grid};
pub use config::{
    BackendKind, DataConfig, GraphSettings, LabelSource, Modalities, Precision, PromptSettings, RandomEdgeKinds,
    RunConfig, Switches,
};
pub use dataset::{ingest, Dataset, VideoData};
pub use manifest::{hash_dir, RunManifest, StageRecord};
pub use run::{
    chunk_stem, evaluate_dataset, export_stage, run_eval, run_train, to_samples, train_dataset, Evaluation, ExportKind,
    TrainOutcome, TrainSummary,
};
pub use stages::{chunk_graph, prepare_videos, ChunkData, PrepareOptions, StageContext};
pub use synthetic::{generate, write_dataset, PseudoLabelNoise, SyntheticConfig};
pub use visualize::{class_color, render_svg, segment_rects, SegmentRect};
