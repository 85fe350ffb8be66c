use ndarray::{s, Array2, ArrayView2, Axis};

use super::ops::{edge_target, GraphBatch};
use super::{lit, Real};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Added to every predicted co-label probability so `Q` never has zero entries.
const EDGE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses<F> {
    pub cls: F,
    pub edge: F,
    pub total: F,
}

/// Mean negative log-likelihood of the true class over all nodes.
pub fn loss_cls<F: Real>(log_probs: &Array2<F>, labels: &[usize]) -> Result<F> {
    check_labels(log_probs, labels)?;
    let sum = labels
        .iter()
        .enumerate()
        .fold(F::zero(), |acc, (i, &y)| acc - log_probs[[i, y]]);
    Ok(sum / lit(labels.len() as f64))
}

/// `(1 / 2T) Σ_i KL(P_i ‖ Q_i)` for one graph, with `P` the row-normalized `A + I` and `Q` the
/// row-normalized co-label probability `S_ij = Σ_c p_i(c) p_j(c) + 1e-8`.
pub fn loss_edge<F: Real>(log_probs: &Array2<F>, adj: &AdjacencyMatrix) -> Result<F> {
    if log_probs.nrows() != adj.len() {
        return Err(Error::Shape(format!(
            "{} log-prob rows for a {}-node graph",
            log_probs.nrows(),
            adj.len()
        )));
    }
    let target = edge_target(adj).mapv(lit::<F>);
    let (kl, _) = edge_terms(log_probs.view(), &target, false);
    Ok(kl / lit(2.0 * adj.len() as f64))
}

pub fn loss_total<F: Real>(cls: F, edge: F, lambda: F) -> F {
    cls + lambda * edge
}

fn check_labels<F: Real>(log_probs: &Array2<F>, labels: &[usize]) -> Result<()> {
    if labels.len() != log_probs.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            log_probs.nrows()
        )));
    }
    let classes = log_probs.ncols();
    match labels.iter().find(|&&y| y >= classes) {
        Some(&id) => Err(Error::InvalidLabel { id, classes }),
        None => Ok(()),
    }
}

/// Summed KL over the rows of one block and, when requested, `d(Σ KL)/dp`.
fn edge_terms<F: Real>(log_probs: ArrayView2<F>, target: &Array2<F>, with_grad: bool) -> (F, Option<Array2<F>>) {
    let p = log_probs.mapv(|v| v.exp());
    let eps = lit::<F>(EDGE_EPS);
    let s = p.dot(&p.t()).mapv(|v| v + eps);
    let row_sum = s.sum_axis(Axis(1));
    let mut kl = F::zero();
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let pij = target[[i, j]];
            if pij > F::zero() {
                kl += pij * (pij.ln() - (s[[i, j]] / row_sum[i]).ln());
            }
        }
    }
    let grad = with_grad.then(|| {
        // Σ_j P_ij = 1, so KL_i = const - Σ_j P_ij ln S_ij + ln R_i.
        let g = Array2::from_shape_fn(s.dim(), |(i, j)| F::one() / row_sum[i] - target[[i, j]] / s[[i, j]]);
        (&g + &g.t()).dot(&p)
    });
    (kl, grad)
}

/// Batch losses and the gradient of the total loss with respect to the logits.
///
/// The edge term is summed over every graph of the batch and divided by `2N`, where `N` is the
/// batch node count, so a batch of one graph reproduces [`loss_edge`].
pub(crate) fn losses_and_logit_grad<F: Real>(
    log_probs: &Array2<F>,
    labels: &[usize],
    batch: &GraphBatch<F>,
    lambda: F,
) -> Result<(Losses<F>, Array2<F>)> {
    let cls = loss_cls(log_probs, labels)?;
    let n = log_probs.nrows();
    let inv_n = F::one() / lit(n as f64);
    let edge_scale = inv_n * lit(0.5);

    // gradient with respect to log-probabilities
    let mut g = Array2::<F>::zeros(log_probs.dim());
    for (i, &y) in labels.iter().enumerate() {
        g[[i, y]] = -inv_n;
    }
    let mut edge = F::zero();
    let need_edge_grad = lambda != F::zero();
    for (rows, target) in batch.targets() {
        let lp = log_probs.slice(s![rows.clone(), ..]);
        let (kl, dp) = edge_terms(lp, target, need_edge_grad);
        edge += kl;
        if let Some(dp) = dp {
            let p = lp.mapv(|v| v.exp());
            let mut dst = g.slice_mut(s![rows, ..]);
            dst.scaled_add(lambda * edge_scale, &(&dp * &p));
        }
    }
    let edge = edge * edge_scale;

    // through log-softmax: dℓ = g - softmax · Σ_c g
    let probs = log_probs.mapv(|v| v.exp());
    let g_sum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    let dlogits = &g - &(&probs * &g_sum);
    Ok((
        Losses {
            cls,
            edge,
            total: loss_total(cls, edge, lambda),
        },
        dlogits,
    ))
}
