use ndarray::{Array2, Axis, Zip};

use super::loss::{losses_and_logit_grad, Losses};
use super::model::{ForwardCache, Mode, ModelParams, Tensors};
use super::ops::GraphBatch;
use super::{lit, Real};
use crate::error::{Error, Result};

/// Gradients of `loss_cls + lambda * loss_edge` with respect to every trainable tensor.
///
/// `cache` must come from [`super::forward`] on the same `batch`, `x` and unchanged `params`.
/// Dropout masks recorded in the cache are reused.
pub fn backward<F: Real>(
    batch: &GraphBatch<F>,
    x: &Array2<F>,
    params: &ModelParams<F>,
    cache: &ForwardCache<F>,
    labels: &[usize],
    lambda: F,
) -> Result<(Losses<F>, Tensors<F>)> {
    if cache.version != params.version {
        return Err(Error::StaleCache {
            cache: cache.version,
            params: params.version,
        });
    }
    if x.nrows() != cache.nodes || batch.nodes() != cache.nodes {
        return Err(Error::Shape(format!(
            "cache holds {} nodes, got features {:?} and a batch of {}",
            cache.nodes,
            x.dim(),
            batch.nodes()
        )));
    }
    let t = &params.tensors;
    let half = lit::<F>(0.5);
    let (losses, dlogits) = losses_and_logit_grad(&cache.log_probs, labels, batch, lambda)?;
    let mut g = t.zeros_like();

    // MLP
    g.mlp_w2 = cache.mlp_hidden.t().dot(&dlogits);
    g.mlp_b2 = dlogits.sum_axis(Axis(0));
    let mut d_pre = dlogits.dot(&t.mlp_w2.t());
    if let Some(m) = &cache.mask1 {
        d_pre *= m;
    }
    g.mlp_w1 = cache.conv1.t().dot(&d_pre);
    g.mlp_b1 = d_pre.sum_axis(Axis(0));
    let d_conv1 = d_pre.dot(&t.mlp_w1.t());

    // second convolution
    let (u_out, u_in) = batch.apply_each(&d_conv1)?;
    g.conv_out1 = cache.hidden.t().dot(&u_out) * half;
    g.conv_in1 = cache.hidden.t().dot(&u_in) * half;
    let mut d_act = (u_out.dot(&t.conv_out1.t()) + u_in.dot(&t.conv_in1.t())) * half;
    if let Some(m) = &cache.mask0 {
        d_act *= m;
    }

    // leaky ReLU
    let slope = cache.slope;
    let mut d_bn = d_act;
    Zip::from(&mut d_bn).and(&cache.bn_out).for_each(|d, &z| {
        if z <= F::zero() {
            *d *= slope
        }
    });

    // batch norm
    g.bn_shift = d_bn.sum_axis(Axis(0));
    g.bn_scale = (&d_bn * &cache.xhat).sum_axis(Axis(0));
    let d_xhat = &d_bn * &t.bn_scale;
    let d_conv0 = match cache.mode {
        Mode::Train => {
            // batch statistics depend on every row
            let n = lit::<F>(cache.nodes as f64);
            let mean_d = d_xhat.sum_axis(Axis(0)) / n;
            let mean_dx = (&d_xhat * &cache.xhat).sum_axis(Axis(0)) / n;
            (&d_xhat - &mean_d - &(&cache.xhat * &mean_dx)) * &cache.inv_std
        }
        Mode::Eval => &d_xhat * &cache.inv_std,
    };

    // first convolution
    let (u_out, u_in) = batch.apply_each(&d_conv0)?;
    g.conv_out0 = x.t().dot(&u_out) * half;
    g.conv_in0 = x.t().dot(&u_in) * half;
    Ok((losses, g))
}
