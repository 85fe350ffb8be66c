use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use super::{cast_matrix, Real};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Symmetrized convolution operators for one graph, with `Ã = A + I`, `S = Ã + Ãᵀ`:
///
/// * `m_out = D_out^{-1/2} S D_out^{-1/2} / 2`, `D_out(i,i) = Σ_j Ã_ij`
/// * `m_in  = D_in^{-1/2}  S D_in^{-1/2}  / 2`, `D_in(j,j)  = Σ_i Ã_ij`
#[derive(Debug, Clone, PartialEq)]
pub struct DgcOperators {
    pub m_out: Array2<f64>,
    pub m_in: Array2<f64>,
}

pub fn dgc_operators(adj: &AdjacencyMatrix) -> DgcOperators {
    let t = adj.len();
    let a_tilde = &adj.a + &Array2::<f64>::eye(t);
    let sym = &a_tilde + &a_tilde.t();
    let d_out = a_tilde.sum_axis(Axis(1));
    let d_in = a_tilde.sum_axis(Axis(0));
    // sqrt(d_i d_j) keeps the diagonal exact: a lone node with a self-loop maps to 1.0
    let normalized =
        |deg: &Array1<f64>| Array2::from_shape_fn((t, t), |(i, j)| sym[[i, j]] / (2.0 * (deg[i] * deg[j]).sqrt()));
    DgcOperators {
        m_out: normalized(&d_out),
        m_in: normalized(&d_in),
    }
}

/// Edge-loss target: rows of `A + I` scaled to sum to one.
pub fn edge_target(adj: &AdjacencyMatrix) -> Array2<f64> {
    let mut p = &adj.a + &Array2::<f64>::eye(adj.len());
    for mut row in p.rows_mut() {
        let total = row.sum();
        row /= total;
    }
    p
}

/// Above this fraction of nonzeros a dense product beats the row-wise sparse one.
const SPARSE_MAX_DENSITY: f64 = 0.25;

/// A convolution operator, stored row-compressed when sparse enough. Operators of graphs
/// with short action runs are mostly zeros, so propagation cost follows the edge count.
#[derive(Debug, Clone)]
enum Operator<F> {
    Dense(Array2<F>),
    Sparse {
        indptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<F>,
    },
}

impl<F: Real> Operator<F> {
    fn new(m: &Array2<f64>) -> Self {
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if nnz as f64 > SPARSE_MAX_DENSITY * m.len() as f64 {
            return Self::Dense(cast_matrix(m));
        }
        let mut indptr = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(F::from(v).expect("operator entries are finite"));
                }
            }
            indptr.push(cols.len());
        }
        Self::Sparse { indptr, cols, vals }
    }

    /// `dst += scale · (self · y)`.
    fn apply_add(&self, y: ArrayView2<F>, mut dst: ArrayViewMut2<F>, scale: F) {
        match self {
            Self::Dense(m) => dst.scaled_add(scale, &m.dot(&y)),
            Self::Sparse { indptr, cols, vals } => {
                for (i, mut out) in dst.rows_mut().into_iter().enumerate() {
                    for k in indptr[i]..indptr[i + 1] {
                        out.scaled_add(scale * vals[k], &y.row(cols[k]));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Block<F> {
    rows: Range<usize>,
    m_out: Operator<F>,
    m_in: Operator<F>,
    target: Array2<F>,
}

/// Several graphs stacked into one block-diagonal system. Operators never mix nodes of
/// different graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch<F> {
    blocks: Vec<Block<F>>,
    nodes: usize,
}

/// Precomputed operators and edge target for one graph.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub ops: DgcOperators,
    pub target: Array2<f64>,
}

impl PreparedGraph {
    pub fn new(adj: &AdjacencyMatrix) -> Self {
        Self {
            ops: dgc_operators(adj),
            target: edge_target(adj),
        }
    }

    pub fn len(&self) -> usize {
        self.target.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.target.nrows() == 0
    }
}

impl<F: Real> GraphBatch<F> {
    pub fn new(graphs: &[&PreparedGraph]) -> Self {
        let mut start = 0;
        let blocks = graphs
            .iter()
            .map(|g| {
                let t = g.len();
                let b = Block {
                    rows: start..start + t,
                    m_out: Operator::new(&g.ops.m_out),
                    m_in: Operator::new(&g.ops.m_in),
                    target: cast_matrix(&g.target),
                };
                start += t;
                b
            })
            .collect();
        Self { blocks, nodes: start }
    }

    pub fn single(adj: &AdjacencyMatrix) -> Self {
        Self::new(&[&PreparedGraph::new(adj)])
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn graph_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.blocks.iter().map(|b| b.rows.clone())
    }

    pub(crate) fn targets(&self) -> impl Iterator<Item = (Range<usize>, &Array2<F>)> {
        self.blocks.iter().map(|b| (b.rows.clone(), &b.target))
    }

    /// `(m_out · y_out + m_in · y_in) * scale`, blockwise. Operators are symmetric, so the
    /// same call also serves the backward pass.
    pub fn propagate(&self, y_out: &Array2<F>, y_in: &Array2<F>, scale: F) -> Result<Array2<F>> {
        if y_out.nrows() != self.nodes || y_in.dim() != y_out.dim() {
            return Err(Error::Shape(format!(
                "operands {:?}/{:?} for a batch of {} nodes",
                y_out.dim(),
                y_in.dim(),
                self.nodes
            )));
        }
        let mut out = Array2::<F>::zeros(y_out.dim());
        for b in &self.blocks {
            let r = b.rows.clone();
            b.m_out
                .apply_add(y_out.slice(s![r.clone(), ..]), out.slice_mut(s![r.clone(), ..]), scale);
            b.m_in
                .apply_add(y_in.slice(s![r.clone(), ..]), out.slice_mut(s![r, ..]), scale);
        }
        Ok(out)
    }

    /// `(m_out · y, m_in · y)`, blockwise.
    pub(crate) fn apply_each(&self, y: &Array2<F>) -> Result<(Array2<F>, Array2<F>)> {
        if y.nrows() != self.nodes {
            return Err(Error::Shape(format!(
                "operand {:?} for a batch of {} nodes",
                y.dim(),
                self.nodes
            )));
        }
        let mut out = Array2::<F>::zeros(y.dim());
        let mut inn = Array2::<F>::zeros(y.dim());
        for b in &self.blocks {
            let r = b.rows.clone();
            let src = y.slice(s![r.clone(), ..]);
            b.m_out.apply_add(src, out.slice_mut(s![r.clone(), ..]), F::one());
            b.m_in.apply_add(src, inn.slice_mut(s![r, ..]), F::one());
        }
        Ok((out, inn))
    }
}
