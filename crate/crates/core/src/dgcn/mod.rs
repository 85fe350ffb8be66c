//! Two-layer directed graph convolutional classifier with hand-written gradients.

mod adam;
mod backward;
mod checkpoint;
mod loss;
mod model;
mod ops;
mod train;

use std::fmt::{Debug, Display};

use ndarray::{Array2, ArrayBase, Data, Ix2, NdFloat};
use num_traits::FromPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use loss::{loss_cls, loss_edge, loss_total, Losses};
pub use model::{
    forward, log_softmax, BatchStats, ForwardCache, ForwardConfig, Mode, ModelDims, ModelParams, Param, Tensors,
};
pub use ops::{dgc_operators, edge_target, DgcOperators, GraphBatch, PreparedGraph};
pub use train::{argmax_rows, predict, train, LossRecord, Prediction, TrainSample, TrainedModel};

/// Float types the model can run in.
pub trait Real: NdFloat + FromPrimitive + Debug + Display {}

impl<T: NdFloat + FromPrimitive + Debug + Display> Real for T {}

/// Converts an `f64` constant into `F`.
pub(crate) fn lit<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("finite literal")
}

/// Dense `a · b` through the `gemm` kernels, which use AVX-512 where available. Single-threaded,
/// so results do not depend on the thread count.
pub(crate) fn matmul<F: Real, A, B>(a: &ArrayBase<A, Ix2>, b: &ArrayBase<B, Ix2>) -> Array2<F>
where
    A: Data<Elem = F>,
    B: Data<Elem = F>,
{
    let ((m, k), (k2, n)) = (a.dim(), b.dim());
    assert_eq!(k, k2, "matmul inner dimensions differ");
    let mut out = Array2::<F>::zeros((m, n));
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let (a, b) = (a.as_standard_layout(), b.as_standard_layout());
    // SAFETY: all three buffers are row-major with the stated shapes, `out` is freshly allocated
    // and exclusively borrowed, and `F` is f32 or f64, both supported by `gemm`.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            out.as_mut_ptr(),
            1,
            n as isize,
            false,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            1,
            n as isize,
            F::zero(),
            F::one(),
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
    out
}

pub(crate) fn cast_matrix<F: Real>(m: &Array2<f64>) -> Array2<F> {
    m.mapv(lit)
}

/// Widens stored `f32` features to the model precision.
pub fn cast_matrix_f32<F: Real>(m: &Array2<f32>) -> Array2<F> {
    m.mapv(|v| lit(f64::from(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Graphs per batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the edge loss.
    pub lambda: f64,
    pub leaky_slope: f64,
    pub hidden: usize,
    /// MLP width; `None` means the hidden width.
    pub mlp_hidden: Option<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.004,
            weight_decay: 5e-4,
            dropout: 0.5,
            batch_size: 8,
            epochs: 30,
            lambda: 0.1,
            leaky_slope: 0.01,
            hidden: 512,
            mlp_hidden: None,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            seed: 0,
        }
    }
}

impl HyperParams {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("hyperparameters: {m}")));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_momentum == 0.0 {
            return bad("batch-norm momentum must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.bn_eps > 0.0) {
            return bad("learning rate and batch-norm eps must be positive");
        }
        if !(self.weight_decay >= 0.0) || !(self.lambda >= 0.0) || !(self.leaky_slope >= 0.0) {
            return bad("weight decay, lambda and slope must be non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 || self.mlp_hidden == Some(0) {
            return bad("batch size, epochs and widths must be >= 1");
        }
        Ok(())
    }

    pub fn dims(&self, input: usize, classes: usize) -> ModelDims {
        ModelDims {
            input,
            hidden: self.hidden,
            mlp_hidden: self.mlp_hidden.unwrap_or(self.hidden),
            classes,
        }
    }

    pub fn forward_config(&self) -> ForwardConfig {
        ForwardConfig {
            dropout: self.dropout,
            leaky_slope: self.leaky_slope,
            bn_eps: self.bn_eps,
        }
    }
}
