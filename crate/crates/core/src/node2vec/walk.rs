use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::WalkConfig;
use crate::graph::{EdgeKind, VideoGraph};

/// First-order transition probabilities over walkable out-edges, per node.
///
/// Self-loops are not walkable. Edges with zero weight (negative semantic edges at
/// `gamma = 0`) are walkable with unit pseudo-weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTables {
    /// `out[v]` lists `(neighbor, probability)` sorted by neighbor.
    out: Vec<Vec<(usize, f64)>>,
}

pub fn walk_transition_probs(graph: &VideoGraph) -> TransitionTables {
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); graph.node_count()];
    for e in &graph.edges {
        if e.kind == EdgeKind::SelfLoop {
            continue;
        }
        let w = if e.weight > 0.0 { e.weight } else { 1.0 };
        out[e.src].push((e.dst, w));
    }
    for row in &mut out {
        row.sort_by_key(|&(dst, _)| dst);
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        for entry in row.iter_mut() {
            entry.1 /= total;
        }
    }
    TransitionTables { out }
}

impl TransitionTables {
    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.out[v]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out[src].binary_search_by_key(&dst, |&(d, _)| d).is_ok()
    }

    /// Step distribution out of `cur` given the previous node, with the return (`1/p`),
    /// distance-preserving (`1`) and outward (`1/q`) biases applied and renormalized.
    pub fn step_probs(&self, prev: Option<usize>, cur: usize, p: f64, q: f64) -> Vec<f64> {
        let row = &self.out[cur];
        let Some(prev) = prev else {
            return row.iter().map(|&(_, pr)| pr).collect();
        };
        let mut probs: Vec<f64> = row
            .iter()
            .map(|&(x, pr)| {
                let bias = if x == prev {
                    1.0 / p
                } else if self.has_edge(prev, x) {
                    1.0
                } else {
                    1.0 / q
                };
                pr * bias
            })
            .collect();
        let total: f64 = probs.iter().sum();
        for v in &mut probs {
            *v /= total;
        }
        probs
    }
}

fn sample(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Random generator for walk number `index`. Each walk gets its own ChaCha stream so walks
/// can be generated in any order.
pub(crate) fn walk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn one_walk(tables: &TransitionTables, start: usize, config: &WalkConfig, index: u64) -> Vec<usize> {
    let mut rng = walk_rng(config.seed, index);
    let mut walk = Vec::with_capacity(config.walk_length);
    walk.push(start);
    let mut prev = None;
    let mut cur = start;
    while walk.len() < config.walk_length {
        let row = tables.neighbors(cur);
        if row.is_empty() {
            break;
        }
        let probs = tables.step_probs(prev, cur, config.p, config.q);
        let next = row[sample(&probs, &mut rng)].0;
        walk.push(next);
        prev = Some(cur);
        cur = next;
    }
    walk
}

/// `walks_per_node` rounds over all nodes; walk `r * T + v` starts at node `v`.
pub fn generate_walks(tables: &TransitionTables, config: &WalkConfig) -> Vec<Vec<usize>> {
    let t = tables.node_count();
    (0..config.walks_per_node * t)
        .into_par_iter()
        .map(|index| one_walk(tables, index % t, config, index as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Edge, FrameSequence};

    fn graph(labels: &[usize]) -> VideoGraph {
        build_graph(&FrameSequence::new("v", labels.to_vec()).unwrap(), 0.0).unwrap()
    }

    fn custom(t: usize, edges: &[(usize, usize, f64)]) -> VideoGraph {
        VideoGraph {
            video_id: "c".into(),
            chunk: 0,
            labels: vec![0; t],
            gamma: 0.0,
            edges: edges
                .iter()
                .map(|&(src, dst, weight)| Edge {
                    src,
                    dst,
                    kind: if dst == src + 1 {
                        EdgeKind::Temporal
                    } else {
                        EdgeKind::PositiveSemantic
                    },
                    weight,
                })
                .collect(),
        }
    }

    #[test]
    fn uniform_and_weighted_rows() {
        let tables = walk_transition_probs(&custom(3, &[(0, 1, 1.0), (0, 2, 1.0)]));
        assert_eq!(tables.step_probs(None, 0, 1.0, 1.0), vec![0.5, 0.5]);

        let tables = walk_transition_probs(&custom(3, &[(0, 1, 1.0), (0, 2, 3.0)]));
        assert_eq!(tables.step_probs(None, 0, 1.0, 1.0), vec![0.25, 0.75]);
    }

    #[test]
    fn zero_weight_negative_edge_is_walkable() {
        // node 1: temporal (1,2), positive (1,3), zero-weight negative (1,4)
        let g = graph(&[0, 0, 0, 0, 1, 1, 2]);
        let tables = walk_transition_probs(&g);
        assert_eq!(
            tables.neighbors(1).iter().map(|&(d, _)| d).collect::<Vec<_>>(),
            vec![2, 3, 4]
        );
        // node 4: temporal (4,5) and negative (4,6) only
        assert_eq!(tables.step_probs(None, 4, 1.0, 1.0), vec![0.5, 0.5]);
        // last node has nothing walkable; its self-loop is ignored
        assert!(tables.neighbors(6).is_empty());
    }

    #[test]
    fn bias_prefers_close_nodes_when_q_is_large() {
        // 0 -> 1, 0 -> 2, 1 -> 2, 1 -> 3: from 1 after 0, node 2 is a neighbor of 0, node 3 is not
        let tables = walk_transition_probs(&custom(4, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (1, 3, 1.0)]));
        let probs = tables.step_probs(Some(0), 1, 1.0, 4.0);
        assert!((probs[0] - 0.8).abs() < 1e-12);
        assert!((probs[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn forced_walks() {
        let config = WalkConfig {
            walks_per_node: 3,
            ..WalkConfig::default()
        };
        let walks = generate_walks(&walk_transition_probs(&graph(&[2])), &config);
        assert_eq!(walks, vec![vec![0]; 3]);

        let path = custom(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let walks = generate_walks(&walk_transition_probs(&path), &config);
        assert_eq!(walks.len(), 9);
        for w in walks.iter().step_by(3) {
            assert_eq!(w, &vec![0, 1, 2]);
        }
    }

    #[test]
    fn walks_are_valid_and_deterministic() {
        let g = graph(&[0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 0]);
        let tables = walk_transition_probs(&g);
        let config = WalkConfig {
            seed: 11,
            ..WalkConfig::default()
        };
        let a = generate_walks(&tables, &config);
        let b = generate_walks(&tables, &config);
        assert_eq!(a, b);
        assert_eq!(a.len(), config.walks_per_node * g.node_count());
        for (k, w) in a.iter().enumerate() {
            assert_eq!(w[0], k % g.node_count());
            assert!(w.len() <= config.walk_length);
            for pair in w.windows(2) {
                assert!(tables.has_edge(pair[0], pair[1]));
            }
        }
        let other = generate_walks(&tables, &WalkConfig { seed: 12, ..config });
        assert_ne!(a, other);
    }
}
