//! Frame-level directed video graphs.
//!
//! Every frame becomes a node. Four edge kinds connect them:
//!
//! * temporal `(i, i+1)`, weight 1;
//! * positive semantic `(i, j)` for non-adjacent frames `i < j` in the same label run, weight 1;
//! * negative semantic `(i, b)` from every non-adjacent frame of a run to the first frame `b`
//!   of the following run, weight `gamma`;
//! * self-loop `(i, i)`, weight 1.
//!
//! Edges are stored once and always point forward in time.

mod labels;

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labels::{FrameSequence, LabelMap};

/// Default chunk length in frames.
pub const DEFAULT_CHUNK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Temporal,
    PositiveSemantic,
    NegativeSemantic,
    SelfLoop,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::Temporal,
        EdgeKind::PositiveSemantic,
        EdgeKind::NegativeSemantic,
        EdgeKind::SelfLoop,
    ];

    /// Integer code used in graph files.
    pub fn code(self) -> u8 {
        match self {
            EdgeKind::Temporal => 0,
            EdgeKind::PositiveSemantic => 1,
            EdgeKind::NegativeSemantic => 2,
            EdgeKind::SelfLoop => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_semantic(self) -> bool {
        matches!(self, EdgeKind::PositiveSemantic | EdgeKind::NegativeSemantic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub weight: f64,
}

impl Edge {
    fn sort_key(&self) -> (usize, usize, u8) {
        (self.src, self.dst, self.kind.code())
    }
}

/// Maximal run of identical labels, `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Run {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Splits a label sequence into maximal same-label runs.
pub fn segment_runs(labels: &[usize]) -> Result<Vec<Run>> {
    let (&first, rest) = labels.split_first().ok_or(Error::EmptySequence)?;
    let mut runs = Vec::new();
    let mut current = Run {
        label: first,
        start: 0,
        end: 0,
    };
    for (offset, &label) in rest.iter().enumerate() {
        let t = offset + 1;
        if label == current.label {
            current.end = t;
        } else {
            runs.push(current);
            current = Run {
                label,
                start: t,
                end: t,
            };
        }
    }
    runs.push(current);
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoGraph {
    pub video_id: String,
    pub chunk: usize,
    pub labels: Vec<usize>,
    pub gamma: f64,
    /// Sorted by `(src, dst, kind code)`.
    pub edges: Vec<Edge>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::GammaOutOfRange(gamma))
    }
}

/// Converts a label sequence into its directed graph.
pub fn build_graph(seq: &FrameSequence, gamma: f64) -> Result<VideoGraph> {
    check_gamma(gamma)?;
    let runs = segment_runs(&seq.labels)?;
    let t = seq.labels.len();
    let mut edges = Vec::with_capacity(3 * t);

    for i in 0..t {
        edges.push(Edge {
            src: i,
            dst: i,
            kind: EdgeKind::SelfLoop,
            weight: 1.0,
        });
        if i + 1 < t {
            edges.push(Edge {
                src: i,
                dst: i + 1,
                kind: EdgeKind::Temporal,
                weight: 1.0,
            });
        }
    }

    for run in &runs {
        for i in run.start..=run.end {
            for j in (i + 2)..=run.end {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    kind: EdgeKind::PositiveSemantic,
                    weight: 1.0,
                });
            }
        }
    }

    for pair in runs.windows(2) {
        let boundary = pair[1].start;
        for i in pair[0].start..boundary.saturating_sub(1) {
            edges.push(Edge {
                src: i,
                dst: boundary,
                kind: EdgeKind::NegativeSemantic,
                weight: gamma,
            });
        }
    }

    edges.sort_by_key(Edge::sort_key);
    Ok(VideoGraph {
        video_id: seq.video_id.clone(),
        chunk: 0,
        labels: seq.labels.clone(),
        gamma,
        edges,
    })
}

/// Chunk boundaries for a sequence of `len` frames.
pub fn chunk_ranges(len: usize, size: usize) -> Result<Vec<Range<usize>>> {
    if size < 2 {
        return Err(Error::Config(format!("chunk size {size} must be at least 2")));
    }
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    Ok((0..len)
        .step_by(size)
        .map(|start| start..(start + size).min(len))
        .collect())
}

/// Splits a sequence and its row-aligned features into consecutive chunks of `size` frames.
/// The last chunk may be shorter.
pub fn chunk<F: Clone>(
    seq: &FrameSequence,
    features: &Array2<F>,
    size: usize,
) -> Result<Vec<(FrameSequence, Array2<F>)>> {
    if features.nrows() != seq.len() {
        return Err(Error::RowMismatch {
            video: seq.video_id.clone(),
            rows: features.nrows(),
            frames: seq.len(),
        });
    }
    Ok(chunk_ranges(seq.len(), size)?
        .into_iter()
        .map(|r| {
            let part = FrameSequence {
                video_id: seq.video_id.clone(),
                labels: seq.labels[r.clone()].to_vec(),
                is_pseudo: seq.is_pseudo,
            };
            (part, features.slice(s![r, ..]).to_owned())
        })
        .collect())
}

/// Dense weighted adjacency of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub a: Array2<f64>,
    pub gamma: f64,
}

impl AdjacencyMatrix {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }
}

pub fn adjacency(graph: &VideoGraph) -> AdjacencyMatrix {
    let t = graph.node_count();
    let mut a = Array2::<f64>::zeros((t, t));
    for e in &graph.edges {
        a[[e.src, e.dst]] = e.weight;
    }
    AdjacencyMatrix { a, gamma: graph.gamma }
}

/// Which optional edge kinds a graph keeps. Temporal edges are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeSelection {
    pub self_loop: bool,
    pub positive: bool,
    pub negative: bool,
}

impl Default for EdgeSelection {
    fn default() -> Self {
        Self::ALL
    }
}

impl EdgeSelection {
    pub const ALL: EdgeSelection = EdgeSelection {
        self_loop: true,
        positive: true,
        negative: true,
    };
    pub const TEMPORAL_ONLY: EdgeSelection = EdgeSelection {
        self_loop: false,
        positive: false,
        negative: false,
    };

    pub fn keeps(&self, kind: EdgeKind) -> bool {
        match kind {
            EdgeKind::Temporal => true,
            EdgeKind::SelfLoop => self.self_loop,
            EdgeKind::PositiveSemantic => self.positive,
            EdgeKind::NegativeSemantic => self.negative,
        }
    }
}

impl VideoGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn edges_of(&self, kind: EdgeKind) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk;
        self
    }

    /// Copy with only the selected edge kinds.
    pub fn select(&self, selection: EdgeSelection) -> VideoGraph {
        let mut g = self.clone();
        g.edges.retain(|e| selection.keeps(e.kind));
        g
    }

    /// Copy where each edge whose kind is in `kinds` survives independently with probability `keep`.
    pub fn drop_random<R: Rng>(&self, kinds: &[EdgeKind], keep: f64, rng: &mut R) -> VideoGraph {
        let mut g = self.clone();
        g.edges
            .retain(|e| !kinds.contains(&e.kind) || rng.random::<f64>() < keep);
        g
    }

    /// Structural checks that hold for every graph, including ablated ones.
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        let t = self.node_count();
        if t == 0 {
            return Err(Error::EmptySequence);
        }
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        let mut pairs = BTreeSet::new();
        for (n, e) in self.edges.iter().enumerate() {
            if e.src >= t || e.dst >= t {
                return bad(format!("edge {n} references a node outside 0..{t}"));
            }
            if n > 0 && self.edges[n - 1].sort_key() >= e.sort_key() {
                return bad(format!("edges not strictly sorted at {n}"));
            }
            let ok = match e.kind {
                EdgeKind::Temporal => e.dst == e.src + 1 && e.weight == 1.0,
                EdgeKind::PositiveSemantic => e.dst >= e.src + 2 && e.weight == 1.0,
                EdgeKind::NegativeSemantic => e.dst >= e.src + 2 && e.weight == self.gamma,
                EdgeKind::SelfLoop => e.dst == e.src && e.weight == 1.0,
            };
            if !ok {
                return bad(format!("edge {n} {e:?} violates its kind's rule"));
            }
            if e.kind != EdgeKind::SelfLoop && !pairs.insert((e.src, e.dst)) {
                return bad(format!("two edges share the pair ({}, {})", e.src, e.dst));
            }
        }
        Ok(())
    }

    /// Checks the invariants of an unablated graph: one self-loop per node and a full temporal chain.
    pub fn validate_complete(&self) -> Result<()> {
        self.validate()?;
        let t = self.node_count();
        if self.count(EdgeKind::SelfLoop) != t || self.count(EdgeKind::Temporal) != t - 1 {
            return Err(Error::InvalidGraph(
                "expected T self-loops and T-1 temporal edges".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            video_id: self.video_id.clone(),
            chunk: self.chunk,
            t: self.node_count(),
            labels: self.labels.clone(),
            gamma: self.gamma,
            edges: self
                .edges
                .iter()
                .map(|e| (e.src, e.dst, e.kind.code(), e.weight))
                .collect(),
        };
        serde_json::to_string(&file).expect("graph serialization is infallible")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        if file.t != file.labels.len() {
            return Err(Error::InvalidGraph(format!(
                "T = {} but {} labels",
                file.t,
                file.labels.len()
            )));
        }
        let mut edges = Vec::with_capacity(file.edges.len());
        for (src, dst, code, weight) in file.edges {
            let kind = EdgeKind::from_code(code)
                .ok_or_else(|| Error::InvalidGraph(format!("unknown edge kind code {code}")))?;
            edges.push(Edge { src, dst, kind, weight });
        }
        let g = VideoGraph {
            video_id: file.video_id,
            chunk: file.chunk,
            labels: file.labels,
            gamma: file.gamma,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    video_id: String,
    chunk: usize,
    #[serde(rename = "T")]
    t: usize,
    labels: Vec<usize>,
    gamma: f64,
    edges: Vec<(usize, usize, u8, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(labels: &[usize]) -> FrameSequence {
        FrameSequence::new("v", labels.to_vec()).unwrap()
    }

    fn pairs(g: &VideoGraph, kind: EdgeKind) -> Vec<(usize, usize)> {
        g.edges_of(kind).map(|e| (e.src, e.dst)).collect()
    }

    /// Pair rule applied to every ordered node pair, using the run partition.
    fn brute_force(labels: &[usize], gamma: f64) -> Vec<(usize, usize, EdgeKind, f64)> {
        let runs = segment_runs(labels).unwrap();
        let run_of: Vec<usize> = (0..labels.len())
            .map(|t| runs.iter().position(|r| r.start <= t && t <= r.end).unwrap())
            .collect();
        let mut out = Vec::new();
        for i in 0..labels.len() {
            for j in i..labels.len() {
                if i == j {
                    out.push((i, j, EdgeKind::SelfLoop, 1.0));
                } else if j == i + 1 {
                    out.push((i, j, EdgeKind::Temporal, 1.0));
                } else if run_of[i] == run_of[j] {
                    out.push((i, j, EdgeKind::PositiveSemantic, 1.0));
                } else if run_of[j] == run_of[i] + 1 && runs[run_of[j]].start == j {
                    out.push((i, j, EdgeKind::NegativeSemantic, gamma));
                }
            }
        }
        out.sort_by_key(|&(s, d, k, _)| (s, d, k.code()));
        out
    }

    #[test]
    fn runs_of_figure_sequence() {
        let runs = segment_runs(&[0, 0, 0, 0, 1, 1, 2]).unwrap();
        let triples: Vec<_> = runs.iter().map(|r| (r.label, r.start, r.end)).collect();
        assert_eq!(triples, vec![(0, 0, 3), (1, 4, 5), (2, 6, 6)]);
        assert_eq!(
            segment_runs(&[5]).unwrap(),
            vec![Run {
                label: 5,
                start: 0,
                end: 0
            }]
        );
        assert!(matches!(segment_runs(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn runs_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
        let runs = segment_runs(&labels).unwrap();
        // scan: a new run starts wherever a label differs from its predecessor
        let starts: Vec<usize> = (0..labels.len())
            .filter(|&t| t == 0 || labels[t] != labels[t - 1])
            .collect();
        assert_eq!(runs.iter().map(|r| r.start).collect::<Vec<_>>(), starts);
        let rebuilt: Vec<usize> = runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.label, r.len()))
            .collect();
        assert_eq!(rebuilt, labels);
    }

    #[test]
    fn figure_two_edges() {
        let g = build_graph(&seq(&[0, 0, 0, 0, 1, 1, 2]), 0.0).unwrap();
        assert_eq!(pairs(&g, EdgeKind::PositiveSemantic), vec![(0, 2), (0, 3), (1, 3)]);
        assert_eq!(
            pairs(&g, EdgeKind::NegativeSemantic),
            vec![(0, 4), (1, 4), (2, 4), (4, 6)]
        );
        assert_eq!(g.count(EdgeKind::Temporal), 6);
        assert_eq!(g.count(EdgeKind::SelfLoop), 7);
        g.validate_complete().unwrap();
    }

    #[test]
    fn tiny_graphs() {
        let g = build_graph(&seq(&[4]), 0.0).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::SelfLoop);

        let g = build_graph(&seq(&[1, 1, 1]), 0.0).unwrap();
        assert_eq!(pairs(&g, EdgeKind::Temporal), vec![(0, 1), (1, 2)]);
        assert_eq!(pairs(&g, EdgeKind::PositiveSemantic), vec![(0, 2)]);
        assert_eq!(g.count(EdgeKind::SelfLoop), 3);
        assert_eq!(g.count(EdgeKind::NegativeSemantic), 0);
    }

    #[test]
    fn gamma_range() {
        assert!(matches!(
            build_graph(&seq(&[0, 1]), 1.0),
            Err(Error::GammaOutOfRange(_))
        ));
        assert!(build_graph(&seq(&[0, 1]), -0.1).is_err());
        assert!(build_graph(&seq(&[0, 1]), 0.99).is_ok());
    }

    #[test]
    fn adjacency_examples() {
        let a = adjacency(&build_graph(&seq(&[2, 2]), 0.0).unwrap()).a;
        assert_eq!(a, ndarray::arr2(&[[1.0, 1.0], [0.0, 1.0]]));

        for gamma in [0.0, 0.1] {
            let g = build_graph(&seq(&[0, 0, 0, 0, 1, 1, 2]), gamma).unwrap();
            let a = adjacency(&g).a;
            let mut expected = Array2::<f64>::zeros((7, 7));
            for i in 0..7 {
                expected[[i, i]] = 1.0;
                if i < 6 {
                    expected[[i, i + 1]] = 1.0;
                }
            }
            for (i, j) in [(0, 2), (0, 3), (1, 3)] {
                expected[[i, j]] = 1.0;
            }
            for (i, j) in [(0, 4), (1, 4), (2, 4), (4, 6)] {
                expected[[i, j]] = gamma;
            }
            assert_eq!(a, expected);
        }
    }

    #[test]
    fn chunk_sizes() {
        let sizes =
            |t: usize, c: usize| -> Vec<usize> { chunk_ranges(t, c).unwrap().iter().map(|r| r.len()).collect() };
        assert_eq!(sizes(1321, 500), vec![500, 500, 321]);
        assert_eq!(sizes(500, 500), vec![500]);
        // direct arithmetic: full chunks then remainder
        let (t, c) = (7, 3);
        let mut expected = vec![c; t / c];
        if t % c > 0 {
            expected.push(t % c);
        }
        assert_eq!(sizes(t, c), expected);
        assert!(chunk_ranges(10, 1).is_err());
    }

    #[test]
    fn chunk_checks_rows_and_concatenates() {
        let s = seq(&[0, 0, 1, 1, 1, 2, 2]);
        let feats = Array2::from_shape_fn((7, 2), |(i, j)| (i * 10 + j) as f32);
        let parts = chunk(&s, &feats, 3).unwrap();
        assert_eq!(parts.len(), 3);
        let labels: Vec<usize> = parts.iter().flat_map(|(p, _)| p.labels.clone()).collect();
        assert_eq!(labels, s.labels);
        let views: Vec<_> = parts.iter().map(|(_, f)| f.view()).collect();
        assert_eq!(ndarray::concatenate(ndarray::Axis(0), &views).unwrap(), feats);

        let short = Array2::<f32>::zeros((6, 2));
        assert!(matches!(
            chunk(&s, &short, 3),
            Err(Error::RowMismatch { rows: 6, frames: 7, .. })
        ));
    }

    #[test]
    fn selection_and_random_drop() {
        let g = build_graph(&seq(&[0, 0, 0, 0, 1, 1, 2]), 0.0).unwrap();
        let t = g.select(EdgeSelection::TEMPORAL_ONLY);
        assert!(t.edges.iter().all(|e| e.kind == EdgeKind::Temporal));
        assert_eq!(t.count(EdgeKind::Temporal), 6);
        t.validate().unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = g.drop_random(&[EdgeKind::PositiveSemantic, EdgeKind::NegativeSemantic], 0.5, &mut rng);
        assert_eq!(d.count(EdgeKind::Temporal), 6);
        assert_eq!(d.count(EdgeKind::SelfLoop), 7);
        assert!(d.count(EdgeKind::PositiveSemantic) <= 3);
    }

    #[test]
    fn json_round_trip_and_rejects_bad_edges() {
        let g = build_graph(&seq(&[0, 0, 0, 1, 1]), 0.1).unwrap().with_chunk(2);
        let json = g.to_json();
        assert!(json.starts_with("{\"video_id\":\"v\",\"chunk\":2,\"T\":5"));
        let back = VideoGraph::from_json(&json, Path::new("g.json")).unwrap();
        assert_eq!(back, g);

        let bad = json.replacen("[0,1,0,1.0]", "[1,0,0,1.0]", 1);
        assert!(VideoGraph::from_json(&bad, Path::new("g.json")).is_err());
    }

    proptest! {
        #[test]
        fn build_matches_brute_force(labels in prop::collection::vec(0usize..4, 1..60),
                                     gamma in prop_oneof![Just(0.0), Just(0.1), 0.0f64..0.99]) {
            let g = build_graph(&seq(&labels), gamma).unwrap();
            let got: Vec<_> = g.edges.iter().map(|e| (e.src, e.dst, e.kind, e.weight)).collect();
            prop_assert_eq!(got, brute_force(&labels, gamma));
            g.validate_complete().unwrap();
        }

        #[test]
        fn edge_counts_follow_run_lengths(labels in prop::collection::vec(0usize..3, 1..80)) {
            let g = build_graph(&seq(&labels), 0.0).unwrap();
            let runs = segment_runs(&labels).unwrap();
            let pos: usize = runs.iter().map(|r| (r.len() - 1) * r.len().saturating_sub(2) / 2).sum();
            let neg: usize = runs[..runs.len() - 1].iter().map(|r| r.len() - 1).sum();
            prop_assert_eq!(g.count(EdgeKind::PositiveSemantic), pos);
            prop_assert_eq!(g.count(EdgeKind::NegativeSemantic), neg);
        }

        #[test]
        fn adjacency_is_upper_triangular(labels in prop::collection::vec(0usize..3, 1..40),
                                         gamma in 0.0f64..0.99) {
            let a = adjacency(&build_graph(&seq(&labels), gamma).unwrap()).a;
            for ((i, j), &v) in a.indexed_iter() {
                if i == j {
                    prop_assert_eq!(v, 1.0);
                } else if j < i {
                    prop_assert_eq!(v, 0.0);
                } else {
                    prop_assert!(v == 0.0 || v == 1.0 || v == gamma);
                }
            }
        }

        #[test]
        fn chunked_graphs_stay_inside_their_chunk(labels in prop::collection::vec(0usize..3, 2..120),
                                                  size in 2usize..40) {
            let s = seq(&labels);
            let feats = Array2::<f32>::zeros((labels.len(), 1));
            for (k, (part, _)) in chunk(&s, &feats, size).unwrap().into_iter().enumerate() {
                let g = build_graph(&part, 0.0).unwrap().with_chunk(k);
                prop_assert!(g.edges.iter().all(|e| e.dst < part.len()));
                prop_assert!(part.len() <= size);
            }
        }

        #[test]
        fn serialization_is_deterministic(labels in prop::collection::vec(0usize..3, 1..40)) {
            let a = build_graph(&seq(&labels), 0.0).unwrap().to_json();
            let b = build_graph(&seq(&labels), 0.0).unwrap().to_json();
            prop_assert_eq!(a, b);
        }
    }
}
