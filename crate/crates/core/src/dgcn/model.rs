use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::GraphBatch;
use super::{lit, matmul, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    /// MLP width defaults to the hidden width.
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden,
            mlp_hidden: hidden,
            classes,
        }
    }
}

/// Trainable tensors, in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    ConvOut0,
    ConvIn0,
    BnScale,
    BnShift,
    ConvOut1,
    ConvIn1,
    MlpWeight1,
    MlpBias1,
    MlpWeight2,
    MlpBias2,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::ConvOut0,
        Param::ConvIn0,
        Param::BnScale,
        Param::BnShift,
        Param::ConvOut1,
        Param::ConvIn1,
        Param::MlpWeight1,
        Param::MlpBias1,
        Param::MlpWeight2,
        Param::MlpBias2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::ConvOut0 => "conv0_out",
            Param::ConvIn0 => "conv0_in",
            Param::BnScale => "bn_scale",
            Param::BnShift => "bn_shift",
            Param::ConvOut1 => "conv1_out",
            Param::ConvIn1 => "conv1_in",
            Param::MlpWeight1 => "mlp_w1",
            Param::MlpBias1 => "mlp_b1",
            Param::MlpWeight2 => "mlp_w2",
            Param::MlpBias2 => "mlp_b2",
        }
    }

    /// Weight matrices receive weight decay; biases and batch-norm parameters do not.
    pub fn is_weight(self) -> bool {
        matches!(
            self,
            Param::ConvOut0 | Param::ConvIn0 | Param::ConvOut1 | Param::ConvIn1 | Param::MlpWeight1 | Param::MlpWeight2
        )
    }
}

/// One value per trainable tensor. Used for parameters, gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors<F> {
    pub conv_out0: Array2<F>,
    pub conv_in0: Array2<F>,
    pub bn_scale: Array1<F>,
    pub bn_shift: Array1<F>,
    pub conv_out1: Array2<F>,
    pub conv_in1: Array2<F>,
    pub mlp_w1: Array2<F>,
    pub mlp_b1: Array1<F>,
    pub mlp_w2: Array2<F>,
    pub mlp_b2: Array1<F>,
}

impl<F: Real> Tensors<F> {
    pub fn zeros(d: ModelDims) -> Self {
        Self {
            conv_out0: Array2::zeros((d.input, d.hidden)),
            conv_in0: Array2::zeros((d.input, d.hidden)),
            bn_scale: Array1::zeros(d.hidden),
            bn_shift: Array1::zeros(d.hidden),
            conv_out1: Array2::zeros((d.hidden, d.hidden)),
            conv_in1: Array2::zeros((d.hidden, d.hidden)),
            mlp_w1: Array2::zeros((d.hidden, d.mlp_hidden)),
            mlp_b1: Array1::zeros(d.mlp_hidden),
            mlp_w2: Array2::zeros((d.mlp_hidden, d.classes)),
            mlp_b2: Array1::zeros(d.classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.conv_out0.nrows(),
            hidden: self.conv_out0.ncols(),
            mlp_hidden: self.mlp_w1.ncols(),
            classes: self.mlp_w2.ncols(),
        }
    }

    pub fn view(&self, p: Param) -> ArrayViewD<'_, F> {
        match p {
            Param::ConvOut0 => self.conv_out0.view().into_dyn(),
            Param::ConvIn0 => self.conv_in0.view().into_dyn(),
            Param::BnScale => self.bn_scale.view().into_dyn(),
            Param::BnShift => self.bn_shift.view().into_dyn(),
            Param::ConvOut1 => self.conv_out1.view().into_dyn(),
            Param::ConvIn1 => self.conv_in1.view().into_dyn(),
            Param::MlpWeight1 => self.mlp_w1.view().into_dyn(),
            Param::MlpBias1 => self.mlp_b1.view().into_dyn(),
            Param::MlpWeight2 => self.mlp_w2.view().into_dyn(),
            Param::MlpBias2 => self.mlp_b2.view().into_dyn(),
        }
    }

    pub fn view_mut(&mut self, p: Param) -> ArrayViewMutD<'_, F> {
        match p {
            Param::ConvOut0 => self.conv_out0.view_mut().into_dyn(),
            Param::ConvIn0 => self.conv_in0.view_mut().into_dyn(),
            Param::BnScale => self.bn_scale.view_mut().into_dyn(),
            Param::BnShift => self.bn_shift.view_mut().into_dyn(),
            Param::ConvOut1 => self.conv_out1.view_mut().into_dyn(),
            Param::ConvIn1 => self.conv_in1.view_mut().into_dyn(),
            Param::MlpWeight1 => self.mlp_w1.view_mut().into_dyn(),
            Param::MlpBias1 => self.mlp_b1.view_mut().into_dyn(),
            Param::MlpWeight2 => self.mlp_w2.view_mut().into_dyn(),
            Param::MlpBias2 => self.mlp_b2.view_mut().into_dyn(),
        }
    }

    pub fn all_finite(&self) -> bool {
        Param::ALL.iter().all(|&p| self.view(p).iter().all(|v| v.is_finite()))
    }
}

/// Model weights plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub tensors: Tensors<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    /// Bumped on every in-place update so stale forward caches can be detected.
    pub(crate) version: u64,
}

impl<F: Real> ModelParams<F> {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases, unit batch-norm scale.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let mut t = Tensors::zeros(dims);
        for p in Param::ALL {
            if p.is_weight() {
                let mut v = t.view_mut(p);
                let (fan_in, fan_out) = (v.shape()[0], v.shape()[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                v.iter_mut().for_each(|w| *w = lit(rng.random_range(-bound..bound)));
            }
        }
        t.bn_scale.fill(F::one());
        Self {
            tensors: t,
            running_mean: Array1::zeros(dims.hidden),
            running_var: Array1::ones(dims.hidden),
            version: 0,
        }
    }

    pub fn from_parts(tensors: Tensors<F>, running_mean: Array1<F>, running_var: Array1<F>) -> Self {
        Self {
            tensors,
            running_mean,
            running_var,
            version: 0,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.tensors.dims()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    /// Exponential moving update of the running statistics from one training batch.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<F>, momentum: f64) {
        if let Some(stats) = &cache.batch_stats {
            let m = lit::<F>(momentum);
            let keep = F::one() - m;
            let n = cache.nodes as f64;
            let unbias = if n > 1.0 { lit::<F>(n / (n - 1.0)) } else { F::one() };
            Zip::from(&mut self.running_mean)
                .and(&stats.mean)
                .for_each(|r, &b| *r = *r * keep + b * m);
            Zip::from(&mut self.running_var)
                .and(&stats.var)
                .for_each(|r, &b| *r = *r * keep + b * unbias * m);
            self.touch();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub dropout: f64,
    pub leaky_slope: f64,
    pub bn_eps: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            dropout: 0.5,
            leaky_slope: 0.01,
            bn_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchStats<F> {
    pub mean: Array1<F>,
    pub var: Array1<F>,
}

/// Intermediates kept by [`forward`] for [`super::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub(crate) mode: Mode,
    pub(crate) version: u64,
    pub(crate) nodes: usize,
    pub(crate) slope: F,
    /// Normalized first-layer pre-activations.
    pub(crate) xhat: Array2<F>,
    pub(crate) inv_std: Array1<F>,
    /// Batch-norm output, input of the leaky ReLU.
    pub(crate) bn_out: Array2<F>,
    /// Scaled keep-masks (`0` or `1/(1-p)`), absent when dropout is inactive.
    pub(crate) mask0: Option<Array2<F>>,
    pub(crate) hidden: Array2<F>,
    pub(crate) conv1: Array2<F>,
    pub(crate) mask1: Option<Array2<F>>,
    pub(crate) mlp_hidden: Array2<F>,
    pub log_probs: Array2<F>,
    pub batch_stats: Option<BatchStats<F>>,
}

fn dropout_mask<F: Real, R: Rng + ?Sized>(dim: (usize, usize), p: f64, rng: &mut R) -> Array2<F> {
    let scale = lit::<F>(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < p { F::zero() } else { scale })
}

/// Row-wise log-softmax.
pub fn log_softmax<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        let lse = row.fold(F::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Runs the two-layer model over a batch. Returns per-node log-probabilities and the cache.
///
/// `H0 = LeakyReLU(BN((M_out X W_out0 + M_in X W_in0) / 2))`, `H1 = dropout(H0)`,
/// `out = LogSoftmax(MLP((M_out H1 W_out1 + M_in H1 W_in1) / 2))`, where the MLP is
/// linear, dropout, linear.
pub fn forward<F: Real, R: Rng + ?Sized>(
    batch: &GraphBatch<F>,
    x: &Array2<F>,
    params: &ModelParams<F>,
    mode: Mode,
    cfg: &ForwardConfig,
    rng: &mut R,
) -> Result<(Array2<F>, ForwardCache<F>)> {
    let t = &params.tensors;
    let dims = t.dims();
    if x.ncols() != dims.input || x.nrows() != batch.nodes() {
        return Err(Error::Shape(format!(
            "features {:?}, expected ({}, {})",
            x.dim(),
            batch.nodes(),
            dims.input
        )));
    }
    let half = lit::<F>(0.5);
    let eps = lit::<F>(cfg.bn_eps);
    let slope = lit::<F>(cfg.leaky_slope);
    let n = x.nrows();
    let drop = mode == Mode::Train && cfg.dropout > 0.0;

    let conv0 = batch.propagate(&matmul(x, &t.conv_out0), &matmul(x, &t.conv_in0), half)?;

    let (mean, var, batch_stats) = match mode {
        Mode::Train => {
            let mean = conv0.mean_axis(Axis(0)).expect("batch is non-empty");
            let var = conv0.var_axis(Axis(0), F::zero());
            (mean.clone(), var.clone(), Some(BatchStats { mean, var }))
        }
        Mode::Eval => (params.running_mean.clone(), params.running_var.clone(), None),
    };
    let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
    let xhat = (&conv0 - &mean) * &inv_std;
    let bn_out = &xhat * &t.bn_scale + &t.bn_shift;
    let act = bn_out.mapv(|v| if v > F::zero() { v } else { v * slope });

    let mask0 = drop.then(|| dropout_mask::<F, R>(act.dim(), cfg.dropout, rng));
    let hidden = match &mask0 {
        Some(m) => &act * m,
        None => act,
    };

    let conv1 = batch.propagate(&matmul(&hidden, &t.conv_out1), &matmul(&hidden, &t.conv_in1), half)?;
    let mlp_pre = matmul(&conv1, &t.mlp_w1) + &t.mlp_b1;
    let mask1 = drop.then(|| dropout_mask::<F, R>(mlp_pre.dim(), cfg.dropout, rng));
    let mlp_hidden = match &mask1 {
        Some(m) => &mlp_pre * m,
        None => mlp_pre,
    };
    let logits = matmul(&mlp_hidden, &t.mlp_w2) + &t.mlp_b2;
    let log_probs = log_softmax(&logits);

    let cache = ForwardCache {
        mode,
        version: params.version,
        nodes: n,
        slope,
        xhat,
        inv_std,
        bn_out,
        mask0,
        hidden,
        conv1,
        mask1,
        mlp_hidden,
        log_probs: log_probs.clone(),
        batch_stats,
    };
    Ok((log_probs, cache))
}
