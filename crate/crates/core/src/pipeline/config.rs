use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgcn::HyperParams;
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, EdgeSelection, DEFAULT_CHUNK};
use crate::metrics::MetricOptions;
use crate::node2vec::WalkConfig;
use crate::semantic::PromptTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// `<video>.txt`, one label token per frame.
    pub labels_dir: PathBuf,
    /// `<video>.bin` (+ `.json` sidecar) or `<video>.tsv`.
    pub features_dir: PathBuf,
    pub label_map: PathBuf,
    /// Frame-level predictions used to build test graphs.
    pub pseudo_labels_dir: Option<PathBuf>,
    /// JSON `{token: [floats]}` for the table encoder backend.
    pub embedding_table: Option<PathBuf>,
    /// Video ids, one per line. Without a split file every video is used.
    pub train_split: Option<PathBuf>,
    pub test_split: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            labels_dir: "data/labels".into(),
            features_dir: "data/features".into(),
            label_map: "data/label_map.txt".into(),
            pseudo_labels_dir: None,
            embedding_table: None,
            train_split: None,
            test_split: None,
        }
    }
}

impl DataConfig {
    /// All paths relative to `root`.
    pub fn rooted(root: &Path) -> Self {
        Self {
            labels_dir: root.join("labels"),
            features_dir: root.join("features"),
            label_map: root.join("label_map.txt"),
            pseudo_labels_dir: Some(root.join("pseudo")),
            embedding_table: None,
            train_split: Some(root.join("splits").join("train.txt")),
            test_split: Some(root.join("splits").join("test.txt")),
        }
    }

    pub fn check_paths(&self) -> Result<()> {
        let required = [
            (&self.labels_dir, "labels_dir"),
            (&self.features_dir, "features_dir"),
            (&self.label_map, "label_map"),
        ];
        let optional = [
            (&self.pseudo_labels_dir, "pseudo_labels_dir"),
            (&self.embedding_table, "embedding_table"),
            (&self.train_split, "train_split"),
            (&self.test_split, "test_split"),
        ];
        let missing = required
            .into_iter()
            .map(|(p, k)| (Some(p), k))
            .chain(optional.into_iter().map(|(p, k)| (p.as_ref(), k)))
            .filter_map(|(p, k)| p.filter(|p| !p.exists()).map(|p| (p, k)))
            .map(|(p, k)| format!("{k} = {}", p.display()))
            .collect::<Vec<_>>();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("paths do not exist: {}", missing.join(", "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSettings {
    pub gamma: f64,
    pub chunk_size: usize,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            chunk_size: DEFAULT_CHUNK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSettings {
    pub template: PromptTemplate,
    pub backend: BackendKind,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            template: PromptTemplate::Ensemble,
            backend: BackendKind::Stub,
        }
    }
}

/// Feature blocks fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Modalities {
    pub visual: bool,
    pub structural: bool,
    pub semantic: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Self {
            visual: true,
            structural: true,
            semantic: true,
        }
    }
}

impl Modalities {
    pub fn any(&self) -> bool {
        self.visual || self.structural || self.semantic
    }

    pub fn name(&self) -> String {
        let parts: Vec<&str> = [(self.visual, "vis"), (self.structural, "str"), (self.semantic, "sem")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        parts.join("+")
    }
}

/// Edge kinds affected by random dropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomEdgeKinds {
    /// Positive and negative semantic edges.
    #[default]
    Semantic,
    /// Every kind except temporal edges.
    AllOptional,
}

impl RandomEdgeKinds {
    pub fn kinds(self) -> &'static [EdgeKind] {
        match self {
            RandomEdgeKinds::Semantic => &[EdgeKind::PositiveSemantic, EdgeKind::NegativeSemantic],
            RandomEdgeKinds::AllOptional => &[
                EdgeKind::PositiveSemantic,
                EdgeKind::NegativeSemantic,
                EdgeKind::SelfLoop,
            ],
        }
    }
}

/// Labels that define a graph and its semantic features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GroundTruth,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Switches {
    pub edges: EdgeSelection,
    /// Probability of dropping each edge of `random_edge_kinds`, applied after construction.
    pub random_edge_drop: Option<f64>,
    pub random_edge_kinds: RandomEdgeKinds,
    pub modalities: Modalities,
    /// When false, test graphs lose their semantic edges and semantic features are zeroed.
    pub test_semantic: bool,
    pub train_labels: LabelSource,
    pub test_labels: LabelSource,
}

impl Default for Switches {
    fn default() -> Self {
        Self {
            edges: EdgeSelection::ALL,
            random_edge_drop: None,
            random_edge_kinds: RandomEdgeKinds::Semantic,
            modalities: Modalities::default(),
            test_semantic: true,
            train_labels: LabelSource::GroundTruth,
            test_labels: LabelSource::Pseudo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Everything a run needs. Serialized as one JSON file; CLI flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub graph: GraphSettings,
    pub walk: WalkConfig,
    pub prompt: PromptSettings,
    pub hyper: HyperParams,
    /// Master seed. Overrides the walk and training seeds and drives random edge dropping.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub precision: Precision,
    pub switches: Switches,
    pub metrics: MetricOptions,
    /// Reuse structural embeddings across runs, keyed by graph and walk settings.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            graph: GraphSettings::default(),
            walk: WalkConfig::default(),
            prompt: PromptSettings::default(),
            hyper: HyperParams::default(),
            seed: 0,
            out_dir: "runs/default".into(),
            precision: Precision::F64,
            switches: Switches::default(),
            metrics: MetricOptions::default(),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            seed: self.seed,
            ..self.walk.clone()
        }
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            seed: self.seed,
            ..self.hyper.clone()
        }
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Checks values only; [`DataConfig::check_paths`] covers the file system.
    pub fn validate(&self) -> Result<()> {
        self.walk_config().validate()?;
        self.hyper_params().validate()?;
        if !(0.0..1.0).contains(&self.graph.gamma) {
            return Err(Error::GammaOutOfRange(self.graph.gamma));
        }
        if self.graph.chunk_size < 2 {
            return Err(Error::Config("chunk size must be >= 2".into()));
        }
        if !self.switches.modalities.any() {
            return Err(Error::Config("at least one modality must be enabled".into()));
        }
        if let Some(p) = self.switches.random_edge_drop {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("edge drop probability {p} outside [0, 1]")));
            }
        }
        if self.prompt.backend == BackendKind::Table && self.data.embedding_table.is_none() {
            return Err(Error::Config("table backend needs data.embedding_table".into()));
        }
        Ok(())
    }
}
