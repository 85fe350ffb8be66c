//! Prompt-based label embeddings and multi-modal feature fusion.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::error::{Error, Result};
use crate::graph::{FrameSequence, LabelMap};

pub const VISUAL_DIM: usize = 2048;
pub const STRUCTURAL_DIM: usize = 128;
pub const SEMANTIC_DIM: usize = 512;

/// Hash probes per token in the stub encoder.
const STUB_PROBES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTemplate {
    /// `"{label}, a video of action"`
    Prefix,
    /// `"this is {label}, a video of action"`
    Cloze,
    /// `"human action of {label}"`
    Suffix,
    /// Prefix, cloze and suffix, averaged after encoding.
    Ensemble,
    /// The bare label token.
    Raw,
}

impl FromStr for PromptTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(Self::Prefix),
            "cloze" => Ok(Self::Cloze),
            "suffix" => Ok(Self::Suffix),
            "ensemble" => Ok(Self::Ensemble),
            "raw" => Ok(Self::Raw),
            other => Err(Error::Config(format!("unknown prompt template {other:?}"))),
        }
    }
}

/// Expands a label token into its prompt sentence(s).
pub fn prompt_fill(token: &str, template: PromptTemplate) -> Result<Vec<String>> {
    if token.is_empty() {
        return Err(Error::Config("empty label token".into()));
    }
    Ok(match template {
        PromptTemplate::Prefix => vec![format!("{token}, a video of action")],
        PromptTemplate::Cloze => vec![format!("this is {token}, a video of action")],
        PromptTemplate::Suffix => vec![format!("human action of {token}")],
        PromptTemplate::Raw => vec![token.to_string()],
        PromptTemplate::Ensemble => [PromptTemplate::Prefix, PromptTemplate::Cloze, PromptTemplate::Suffix]
            .into_iter()
            .flat_map(|t| prompt_fill(token, t).expect("token is non-empty"))
            .collect(),
    })
}

/// Word tokens: maximal runs of alphanumerics and underscores, lowercased.
fn tokenize(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

/// Deterministic hashed bag-of-words encoder. Every token adds `±1` to several seeded
/// buckets; the sum is scaled to unit length.
pub fn stub_encode(sentence: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    for token in tokenize(sentence) {
        for probe in 0..STUB_PROBES {
            let h = xxh64(
                token.as_bytes(),
                seed.wrapping_add(probe.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let bucket = (h >> 1) as usize % dim;
            v[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
        }
    }
    normalize(&mut v);
    v
}

/// Text encoder behind the semantic features.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderBackend {
    Stub {
        seed: u64,
        dim: usize,
    },
    /// Precomputed vectors keyed by label token. Templates do not apply.
    Table {
        vectors: BTreeMap<String, Vec<f32>>,
    },
}

impl EncoderBackend {
    pub fn stub(seed: u64) -> Self {
        EncoderBackend::Stub {
            seed,
            dim: SEMANTIC_DIM,
        }
    }

    /// Reads a JSON object `{token: [floats]}`. All vectors must share one length.
    pub fn load_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vectors: BTreeMap<String, Vec<f32>> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let mut lens = vectors.values().map(Vec::len);
        if let Some(first) = lens.next() {
            if lens.any(|l| l != first) {
                return Err(Error::Shape(format!(
                    "{}: embedding vectors differ in length",
                    path.display()
                )));
            }
        }
        Ok(EncoderBackend::Table { vectors })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            EncoderBackend::Stub { dim, .. } => Some(*dim),
            EncoderBackend::Table { vectors } => vectors.values().next().map(Vec::len),
        }
    }

    /// Encodes sentences; several sentences are averaged and renormalized.
    pub fn encode(&self, sentences: &[String]) -> Result<Vec<f32>> {
        match self {
            EncoderBackend::Stub { seed, dim } => {
                let mut acc = vec![0.0f32; *dim];
                for s in sentences {
                    for (a, x) in acc.iter_mut().zip(stub_encode(s, *seed, *dim)) {
                        *a += x;
                    }
                }
                if sentences.len() > 1 {
                    let n = sentences.len() as f32;
                    acc.iter_mut().for_each(|a| *a /= n);
                    normalize(&mut acc);
                }
                Ok(acc)
            }
            EncoderBackend::Table { .. } => Err(Error::Config(
                "the table backend looks up label tokens and cannot encode sentences".into(),
            )),
        }
    }

    /// Semantic vector for one label token.
    pub fn encode_label(&self, token: &str, template: PromptTemplate) -> Result<Vec<f32>> {
        match self {
            EncoderBackend::Stub { .. } => self.encode(&prompt_fill(token, template)?),
            EncoderBackend::Table { vectors } => vectors
                .get(token)
                .cloned()
                .ok_or_else(|| Error::MissingEmbedding(token.to_string())),
        }
    }
}

/// One row per node, determined by the node's label.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    pub matrix: Array2<f32>,
}

pub fn embed_semantic(
    seq: &FrameSequence,
    map: &LabelMap,
    template: PromptTemplate,
    backend: &EncoderBackend,
) -> Result<SemanticEmbedding> {
    seq.validate(map)?;
    let mut cache: HashMap<usize, Vec<f32>> = HashMap::new();
    for &l in &seq.labels {
        if let Entry::Vacant(slot) = cache.entry(l) {
            slot.insert(backend.encode_label(map.token(l)?, template)?);
        }
    }
    let dim = cache.values().next().map_or(0, Vec::len);
    let matrix = Array2::from_shape_fn((seq.len(), dim), |(t, j)| cache[&seq.labels[t]][j]);
    Ok(SemanticEmbedding { matrix })
}

/// Per-node visual, structural and semantic blocks plus their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub visual: Array2<f32>,
    pub structural: Array2<f32>,
    pub semantic: Array2<f32>,
    pub fused: Array2<f32>,
}

impl FeatureBundle {
    pub fn rows(&self) -> usize {
        self.fused.nrows()
    }
}

/// Column-wise concatenation in the fixed order visual, structural, semantic.
pub fn fuse_features(visual: Array2<f32>, structural: Array2<f32>, semantic: Array2<f32>) -> Result<FeatureBundle> {
    let fused = concat_columns(&[&visual, &structural, &semantic])?;
    Ok(FeatureBundle {
        visual,
        structural,
        semantic,
        fused,
    })
}

/// Concatenates blocks with equal row counts along columns.
pub fn concat_columns(blocks: &[&Array2<f32>]) -> Result<Array2<f32>> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if let Some(b) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(Error::Shape(format!(
            "feature blocks have {} and {} rows",
            rows,
            b.nrows()
        )));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))
}
