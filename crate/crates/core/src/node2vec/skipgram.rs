use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{walk::walk_rng, StructuralEmbedding, WalkConfig};

/// Position pairs `(center, context)` with `0 < |center - context| <= hops`.
pub fn context_pairs(len: usize, hops: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |i| {
        let lo = i.saturating_sub(hops);
        let hi = (i + hops).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&j| j != i).map(move |j| (i, j))
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Skip-gram with negative sampling over node walks. Returns the input vectors.
///
/// Negatives are drawn from walk-occurrence counts raised to 0.75. The learning rate
/// decays linearly from `learning_rate` to `min_learning_rate` over all training pairs.
pub fn train_skipgram(walks: &[Vec<usize>], node_count: usize, config: &WalkConfig) -> StructuralEmbedding {
    let dim = config.dimension;
    // walk streams use indices < walks_per_node * T; this one sits at the far end
    let mut rng = walk_rng(config.seed, u64::MAX);

    let mut input: Vec<f64> = (0..node_count * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; node_count * dim];

    let mut counts = vec![0.0f64; node_count];
    for w in walks {
        for &v in w {
            counts[v] += 1.0;
        }
    }
    let noise_weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let noise = match WeightedIndex::new(&noise_weights) {
        Ok(d) => d,
        Err(_) => return StructuralEmbedding::from_f64(node_count, dim, &input),
    };

    let pairs_per_epoch: usize = walks.iter().map(|w| context_pairs(w.len(), config.hops).count()).sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;

    let mut grad = vec![0.0f64; dim];
    for _ in 0..config.epochs {
        for walk in walks {
            for (i, j) in context_pairs(walk.len(), config.hops) {
                let progress = processed as f64 / total;
                let alpha = config.learning_rate - (config.learning_rate - config.min_learning_rate) * progress;
                processed += 1;

                let center = walk[i];
                let target = walk[j];
                grad.iter_mut().for_each(|g| *g = 0.0);
                let c_row = center * dim..(center + 1) * dim;

                for k in 0..=config.negative_samples {
                    let (node, label) = if k == 0 {
                        (target, 1.0)
                    } else {
                        let n = noise.sample(&mut rng);
                        if n == target {
                            continue;
                        }
                        (n, 0.0)
                    };
                    let o_row = node * dim..(node + 1) * dim;
                    let f = sigmoid(dot(&input[c_row.clone()], &output[o_row.clone()]));
                    let g = (label - f) * alpha;
                    for d in 0..dim {
                        grad[d] += g * output[o_row.start + d];
                        output[o_row.start + d] += g * input[c_row.start + d];
                    }
                }
                for d in 0..dim {
                    input[c_row.start + d] += grad[d];
                }
            }
        }
    }
    StructuralEmbedding::from_f64(node_count, dim, &input)
}

impl StructuralEmbedding {
    fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        StructuralEmbedding {
            matrix: Array2::from_shape_fn((rows, cols), |(i, j)| data[i * cols + j] as f32),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_pairs_respect_window() {
        let pairs: Vec<_> = context_pairs(4, 1).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)]);
        assert_eq!(context_pairs(1, 4).count(), 0);
        for hops in 1..6 {
            for (i, j) in context_pairs(12, hops) {
                assert!(i != j && i.abs_diff(j) <= hops && j < 12);
            }
            // every in-window pair appears exactly once
            let expected = (0..12usize)
                .flat_map(|i| (0..12usize).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && i.abs_diff(j) <= hops)
                .count();
            assert_eq!(context_pairs(12, hops).count(), expected);
        }
    }

    #[test]
    fn shape_and_determinism() {
        let walks = vec![vec![0, 1, 2, 3], vec![1, 2, 3], vec![2, 3], vec![3]];
        let config = WalkConfig {
            dimension: 8,
            ..WalkConfig::default()
        };
        let a = train_skipgram(&walks, 4, &config);
        let b = train_skipgram(&walks, 4, &config);
        assert_eq!(a.matrix.dim(), (4, 8));
        assert_eq!(a, b);
        assert!(a.matrix.iter().all(|v| v.is_finite()));
    }
}
