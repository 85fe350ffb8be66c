use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::backward::backward;
use super::model::{forward, ForwardConfig, Mode, ModelParams};
use super::ops::{GraphBatch, PreparedGraph};
use super::{lit, HyperParams, Real};
use crate::error::{Error, Result};

/// One graph with row-aligned node features and node labels.
#[derive(Debug, Clone)]
pub struct TrainSample<F> {
    pub id: String,
    pub graph: PreparedGraph,
    pub features: Array2<F>,
    pub labels: Vec<usize>,
}

impl<F: Real> TrainSample<F> {
    fn validate(&self, classes: usize) -> Result<()> {
        let t = self.graph.len();
        if self.features.nrows() != t || self.labels.len() != t {
            return Err(Error::RowMismatch {
                video: self.id.clone(),
                rows: self.features.nrows(),
                frames: t,
            });
        }
        match self.labels.iter().find(|&&y| y >= classes) {
            Some(&id) => Err(Error::InvalidLabel { id, classes }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub cls: f64,
    pub edge: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<F> {
    pub params: ModelParams<F>,
    pub adam: AdamState<F>,
    pub losses: Vec<LossRecord>,
    pub epochs: usize,
}

impl<F> TrainedModel<F> {
    /// Mean total loss per epoch, in epoch order.
    pub fn epoch_losses(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = vec![(0.0, 0); self.epochs];
        for r in &self.losses {
            out[r.epoch].0 += r.total;
            out[r.epoch].1 += 1;
        }
        out.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }
}

/// Trains from a seeded initialization. Graphs are shuffled every epoch and grouped
/// `batch_size` at a time into one block-diagonal system.
pub fn train<F: Real>(samples: &[TrainSample<F>], classes: usize, hyper: &HyperParams) -> Result<TrainedModel<F>> {
    hyper.validate()?;
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    if classes == 0 {
        return Err(Error::Config("at least one class is required".into()));
    }
    let input = first.features.ncols();
    for s in samples {
        s.validate(classes)?;
        if s.features.ncols() != input {
            return Err(Error::Shape(format!(
                "{}: {} feature columns, expected {input}",
                s.id,
                s.features.ncols()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = ModelParams::init(hyper.dims(input, classes), &mut rng);
    let mut adam = AdamState::new(&params);
    let fwd = hyper.forward_config();
    let lambda = lit::<F>(hyper.lambda);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::new();

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(hyper.batch_size).enumerate() {
            let members: Vec<&TrainSample<F>> = idx.iter().map(|&i| &samples[i]).collect();
            let graphs: Vec<&PreparedGraph> = members.iter().map(|s| &s.graph).collect();
            let batch = GraphBatch::<F>::new(&graphs);
            let views: Vec<_> = members.iter().map(|s| s.features.view()).collect();
            let x = concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
            let labels: Vec<usize> = members.iter().flat_map(|s| s.labels.iter().copied()).collect();

            let (_, cache) = forward(&batch, &x, &params, Mode::Train, &fwd, &mut rng)?;
            let (l, grads) = backward(&batch, &x, &params, &cache, &labels, lambda)?;
            let record = LossRecord {
                epoch,
                batch: b,
                cls: l.cls.to_f64().unwrap_or(f64::NAN),
                edge: l.edge.to_f64().unwrap_or(f64::NAN),
                total: l.total.to_f64().unwrap_or(f64::NAN),
            };
            if !record.total.is_finite() {
                return Err(Error::Config(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            losses.push(record);
            params.update_running_stats(&cache, hyper.bn_momentum);
            adam_step(&mut params, &grads, &mut adam, hyper.learning_rate, hyper.weight_decay);
        }
        log::debug!(
            "epoch {epoch}: mean loss {:.6}",
            losses.iter().filter(|r| r.epoch == epoch).map(|r| r.total).sum::<f64>()
                / order.len().div_ceil(hyper.batch_size) as f64
        );
    }
    Ok(TrainedModel {
        params,
        adam,
        losses,
        epochs: hyper.epochs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub log_probs: Array2<F>,
    pub labels: Vec<usize>,
}

/// Eval-mode forward pass on one graph.
pub fn predict<F: Real>(
    graph: &PreparedGraph,
    features: &Array2<F>,
    params: &ModelParams<F>,
    fwd: &ForwardConfig,
) -> Result<Prediction<F>> {
    let batch = GraphBatch::<F>::new(&[graph]);
    // eval mode draws no random numbers
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (log_probs, _) = forward(&batch, features, params, Mode::Eval, fwd, &mut rng)?;
    let labels = argmax_rows(&log_probs);
    Ok(Prediction { log_probs, labels })
}

/// Row-wise argmax; ties go to the smaller column index.
pub fn argmax_rows<F: Real>(m: &Array2<F>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
