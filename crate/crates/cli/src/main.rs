use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vidgraph::graph::{FrameSequence, LabelMap};
use vidgraph::pipeline::{
    export_stage, generate, render_svg, run_ablation, run_eval, run_train, write_dataset, DataConfig, ExportKind, Grid,
    LabelSource, Precision, RunConfig, SyntheticConfig,
};

#[derive(Parser)]
#[command(name = "vidgraph", version, about = "Graph-based temporal action segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline command. Each one overrides a config key.
#[derive(Args, Clone)]
struct Common {
    /// JSON run config; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (`seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset root with labels/, features/, pseudo/, splits/ and label_map.txt (`data`).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Weight of negative semantic edges (`graph.gamma`).
    #[arg(long)]
    gamma: Option<f64>,
    /// Training epochs (`hyper.epochs`).
    #[arg(long)]
    epochs: Option<usize>,
    /// Model precision (`precision`).
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Labels used for test graphs (`switches.test_labels`).
    #[arg(long, value_enum)]
    test_labels: Option<LabelArg>,
    /// Remove semantic edges and features from test graphs (`switches.test_semantic = false`).
    #[arg(long)]
    no_test_semantic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Gt,
    Pseudo,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Build chunk graphs and write them as JSON.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Compute node2vec embeddings per chunk graph.
    EmbedStructure {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Compute label-text embeddings per chunk.
    EmbedSemantic {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Train the classifier and write a checkpoint, loss log and manifest.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; defaults to `<out>/checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render ground truth and prediction bars as SVG.
    Visualize {
        /// Ground-truth label file, one token per line.
        #[arg(long)]
        gt: PathBuf,
        /// Predicted label file.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        label_map: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Title; defaults to the ground-truth file stem.
        #[arg(long)]
        title: Option<String>,
    },
    /// Train and evaluate every cell of one or more ablation grids.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Grids to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<String>,
    },
    /// Write a synthetic dataset with known class clusters and noisy pseudo-labels.
    GenSynthetic {
        /// JSON generator config; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset root to create.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(root) = &common.data_root {
        cfg.data = DataConfig::rooted(root);
        // split and pseudo-label files are optional under a data root
        for opt in [
            &mut cfg.data.train_split,
            &mut cfg.data.test_split,
            &mut cfg.data.pseudo_labels_dir,
        ] {
            if opt.as_ref().is_some_and(|p| !p.exists()) {
                *opt = None;
            }
        }
    }
    if let Some(g) = common.gamma {
        cfg.graph.gamma = g;
    }
    if let Some(e) = common.epochs {
        cfg.hyper.epochs = e;
    }
    if let Some(p) = common.precision {
        cfg.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    if let Some(l) = common.test_labels {
        cfg.switches.test_labels = match l {
            LabelArg::Gt => LabelSource::GroundTruth,
            LabelArg::Pseudo => LabelSource::Pseudo,
        };
    }
    if common.no_test_semantic {
        cfg.switches.test_semantic = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn export(common: &Common, kind: ExportKind, split: SplitArg) -> Result<()> {
    let cfg = load_config(common)?;
    let n = export_stage(&cfg, kind, matches!(split, SplitArg::Test))?;
    println!("wrote {n} files under {}", cfg.out_dir.display());
    Ok(())
}

fn read_labels(path: &Path, map: &LabelMap) -> Result<FrameSequence> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .context("label file has no name")?;
    Ok(FrameSequence::load(path, id, map)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildGraph { common, split } => export(&common, ExportKind::Graphs, split),
        Command::EmbedStructure { common, split } => export(&common, ExportKind::Structural, split),
        Command::EmbedSemantic { common, split } => export(&common, ExportKind::Semantic, split),
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let s = run_train(&cfg)?;
            println!(
                "trained on {} chunks: train accuracy {:.2}%, final epoch loss {:.6}",
                s.chunks, s.train_accuracy, s.final_epoch_loss
            );
            Ok(())
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint"));
            let r = run_eval(&cfg, &ckpt)?;
            println!(
                "Acc {:.2}  Edit {:.2}  F1@10 {:.2}  F1@25 {:.2}  F1@50 {:.2}  Top1 {:.2}  Top5 {:.2}",
                r.accuracy, r.edit, r.f1["F1@10"], r.f1["F1@25"], r.f1["F1@50"], r.top1, r.top5
            );
            Ok(())
        }
        Command::Visualize {
            gt,
            pred,
            label_map,
            out,
            title,
        } => {
            let map = LabelMap::load(&label_map)?;
            let g = read_labels(&gt, &map)?;
            let p = read_labels(&pred, &map)?;
            let title = title.unwrap_or_else(|| g.video_id.clone());
            let svg = render_svg(&title, &g.labels, &p.labels, &map)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::Ablate { common, grid } => {
            let cfg = load_config(&common)?;
            let grids = if grid.is_empty() {
                Grid::ALL.to_vec()
            } else {
                grid.iter().map(|g| g.parse()).collect::<Result<Vec<Grid>, _>>()?
            };
            let rows = run_ablation(&cfg, &grids)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} cells, {failed} failed; results in {}",
                rows.len(),
                cfg.out_dir.join("ablation").display()
            );
            if failed == rows.len() {
                bail!("every ablation cell failed");
            }
            Ok(())
        }
        Command::GenSynthetic { config, seed, out } => {
            let mut cfg: SyntheticConfig = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ds = generate(&cfg)?;
            write_dataset(&ds, &cfg, &out)?;
            println!("wrote {} videos to {}", ds.videos.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let level = std::env::var("LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&level).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
