//! Structural node features: node2vec over a video graph.
//!
//! Biased second-order random walks follow out-edges only, then skip-gram with
//! negative sampling turns walk co-occurrence into one vector per node.

mod skipgram;
mod walk;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VideoGraph;

pub use skipgram::{context_pairs, train_skipgram};
pub use walk::{generate_walks, walk_transition_probs, TransitionTables};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub dimension: usize,
    /// Skip-gram context radius in walk steps.
    pub hops: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            dimension: 128,
            hops: 4,
            p: 1.0,
            q: 1.0,
            walks_per_node: 10,
            walk_length: 20,
            negative_samples: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("walk config: {m}")));
        if self.dimension == 0 || self.hops == 0 || self.walks_per_node == 0 || self.epochs == 0 {
            return bad("dimension, hops, walks per node and epochs must be >= 1");
        }
        if self.negative_samples == 0 {
            return bad("negative samples must be >= 1");
        }
        if self.walk_length < 2 {
            return bad("walk length must be >= 2");
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return bad("p and q must be positive");
        }
        if !(self.learning_rate > 0.0 && self.min_learning_rate >= 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// One row per graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralEmbedding {
    pub matrix: Array2<f32>,
}

/// Walks plus skip-gram for one graph.
pub fn embed_structure(graph: &VideoGraph, config: &WalkConfig) -> Result<StructuralEmbedding> {
    config.validate()?;
    graph.validate()?;
    let tables = walk_transition_probs(graph);
    let walks = generate_walks(&tables, config);
    Ok(train_skipgram(&walks, graph.node_count(), config))
}
