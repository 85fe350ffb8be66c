use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::DataConfig;
use super::dataset::{Dataset, VideoData};
use crate::error::{Error, Result};
use crate::graph::{segment_runs, FrameSequence, LabelMap};
use crate::matrix_io::save_f32;

const VOCAB: [&str; 19] = [
    "take", "open", "pour", "close", "shake", "scoop", "stir", "put", "fold", "spread", "cut", "peel", "mix", "wash",
    "dry", "place", "serve", "crack", "season",
];

/// Corruption applied to ground truth to imitate a frame-level classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoLabelNoise {
    /// Each internal boundary moves by up to this many frames.
    pub boundary_jitter: usize,
    /// Probability that a whole segment takes a different class.
    pub segment_relabel_prob: f64,
    /// Per-frame probability of starting a burst of a wrong class.
    pub burst_prob: f64,
    /// Bursts last between 1 and this many frames.
    pub max_burst: usize,
}

impl Default for PseudoLabelNoise {
    fn default() -> Self {
        Self {
            boundary_jitter: 2,
            segment_relabel_prob: 0.0,
            burst_prob: 0.02,
            max_burst: 3,
        }
    }
}

/// Videos made of class runs with Gaussian visual clusters around per-class centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train_videos: usize,
    pub test_videos: usize,
    pub frames: usize,
    pub classes: usize,
    pub visual_dim: usize,
    pub min_run: usize,
    pub max_run: usize,
    /// Standard deviation of class centers.
    pub center_scale: f64,
    /// Standard deviation of per-frame noise around the center.
    pub visual_noise: f64,
    pub pseudo: PseudoLabelNoise,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_videos: 8,
            test_videos: 4,
            frames: 100,
            classes: 3,
            visual_dim: 32,
            min_run: 8,
            max_run: 30,
            center_scale: 1.0,
            visual_noise: 0.5,
            pseudo: PseudoLabelNoise::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic data: {m}")));
        if self.train_videos + self.test_videos == 0 || self.frames == 0 || self.visual_dim == 0 {
            return bad("videos, frames and visual dim must be >= 1");
        }
        if self.classes < 2 {
            return bad("at least two classes are needed");
        }
        if self.min_run == 0 || self.min_run > self.max_run {
            return bad("run lengths need 1 <= min_run <= max_run");
        }
        let p = &self.pseudo;
        if !(0.0..=1.0).contains(&p.segment_relabel_prob) || !(0.0..=1.0).contains(&p.burst_prob) {
            return bad("noise probabilities must lie in [0, 1]");
        }
        if p.burst_prob > 0.0 && p.max_burst == 0 {
            return bad("max_burst must be >= 1 when bursts are enabled");
        }
        if !(self.visual_noise >= 0.0 && self.center_scale > 0.0) {
            return bad("noise must be non-negative and center scale positive");
        }
        Ok(())
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        let tokens: Vec<String> = (0..self.classes)
            .map(|c| VOCAB.get(c).map_or_else(|| format!("action{c}"), |t| t.to_string()))
            .collect();
        LabelMap::from_tokens(&tokens)
    }
}

fn other_class<R: Rng>(rng: &mut R, classes: usize, not: usize) -> usize {
    let c = rng.random_range(0..classes - 1);
    if c >= not {
        c + 1
    } else {
        c
    }
}

fn label_sequence<R: Rng>(cfg: &SyntheticConfig, rng: &mut R) -> Vec<usize> {
    let mut labels = Vec::with_capacity(cfg.frames);
    let mut prev: Option<usize> = None;
    while labels.len() < cfg.frames {
        let c = match prev {
            Some(p) => other_class(rng, cfg.classes, p),
            None => rng.random_range(0..cfg.classes),
        };
        let len = rng
            .random_range(cfg.min_run..=cfg.max_run)
            .min(cfg.frames - labels.len());
        labels.extend(std::iter::repeat_n(c, len));
        prev = Some(c);
    }
    labels
}

/// Applies boundary jitter, segment relabeling and wrong-class bursts, in that order.
pub fn corrupt_labels<R: Rng>(gt: &[usize], classes: usize, noise: &PseudoLabelNoise, rng: &mut R) -> Vec<usize> {
    let mut out = gt.to_vec();
    let runs = segment_runs(gt).expect("generated sequences are non-empty");

    if noise.boundary_jitter > 0 {
        for pair in runs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let j = noise.boundary_jitter as i64;
            let shift = rng.random_range(-j..=j);
            // keep at least one frame of each neighbour
            let lo = a.start as i64 + 1;
            let hi = b.end as i64;
            let boundary = (b.start as i64 + shift).clamp(lo, hi) as usize;
            for (t, slot) in out.iter_mut().enumerate().take(b.end + 1).skip(a.start) {
                *slot = if t < boundary { a.label } else { b.label };
            }
        }
    }
    if noise.segment_relabel_prob > 0.0 {
        for r in segment_runs(&out.clone()).expect("non-empty") {
            if rng.random::<f64>() < noise.segment_relabel_prob {
                let c = other_class(rng, classes, r.label);
                out[r.start..=r.end].iter_mut().for_each(|l| *l = c);
            }
        }
    }
    if noise.burst_prob > 0.0 {
        let mut t = 0;
        while t < out.len() {
            if rng.random::<f64>() < noise.burst_prob {
                let len = rng.random_range(1..=noise.max_burst).min(out.len() - t);
                let c = other_class(rng, classes, out[t]);
                out[t..t + len].iter_mut().for_each(|l| *l = c);
                t += len;
            } else {
                t += 1;
            }
        }
    }
    out
}

/// Builds the whole dataset in memory. Videos are named `train_XX` and `test_XX`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let map = cfg.label_map()?;
    let mut center_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    center_rng.set_stream(1);
    let centers_dist = Normal::new(0.0, cfg.center_scale).map_err(|e| Error::Config(e.to_string()))?;
    let centers = Array2::from_shape_simple_fn((cfg.classes, cfg.visual_dim), || {
        centers_dist.sample(&mut center_rng) as f32
    });
    let noise = Normal::new(0.0, cfg.visual_noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;

    let total = cfg.train_videos + cfg.test_videos;
    let mut videos = Vec::with_capacity(total);
    for v in 0..total {
        let id = if v < cfg.train_videos {
            format!("train_{v:02}")
        } else {
            format!("test_{:02}", v - cfg.train_videos)
        };
        // one stream per video keeps videos independent of each other's size
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(100 + v as u64);
        let labels = label_sequence(cfg, &mut rng);
        let visual = Array2::from_shape_fn((cfg.frames, cfg.visual_dim), |(t, j)| {
            let n = if cfg.visual_noise > 0.0 {
                noise.sample(&mut rng) as f32
            } else {
                0.0
            };
            centers[[labels[t], j]] + n
        });
        let pseudo = corrupt_labels(&labels, cfg.classes, &cfg.pseudo, &mut rng);
        let gt = FrameSequence::new(id.clone(), labels)?;
        let pseudo = FrameSequence::new(id.clone(), pseudo)?.pseudo(true);
        videos.push(VideoData::new(id, gt, Some(pseudo), visual)?);
    }
    // ids sort as train_* after test_*, matching ingest's sorted order
    videos.sort_by(|a, b| a.id.cmp(&b.id));
    let train = (0..total).filter(|&i| videos[i].id.starts_with("train_")).collect();
    let test = (0..total).filter(|&i| videos[i].id.starts_with("test_")).collect();
    Ok(Dataset {
        map,
        videos,
        train,
        test,
    })
}

/// Writes the dataset in the on-disk layout read by `ingest`, plus `synthetic.json`.
pub fn write_dataset(ds: &Dataset, cfg: &SyntheticConfig, root: &Path) -> Result<DataConfig> {
    let data = DataConfig::rooted(root);
    let dirs = [
        &data.labels_dir,
        &data.features_dir,
        data.pseudo_labels_dir.as_ref().expect("rooted layout"),
    ];
    for d in dirs {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let splits = root.join("splits");
    fs::create_dir_all(&splits).map_err(|e| Error::io(&splits, e))?;
    let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));

    write(&data.label_map, ds.map.to_text())?;
    for v in &ds.videos {
        write(&data.labels_dir.join(format!("{}.txt", v.id)), v.gt.to_text(&ds.map)?)?;
        save_f32(&data.features_dir.join(format!("{}.bin", v.id)), &v.visual)?;
        if let Some(p) = &v.pseudo {
            let dir = data.pseudo_labels_dir.as_ref().expect("rooted layout");
            write(&dir.join(format!("{}.txt", v.id)), p.to_text(&ds.map)?)?;
        }
    }
    let ids = |idx: &[usize]| {
        idx.iter()
            .map(|&i| format!("{}\n", ds.videos[i].id))
            .collect::<String>()
    };
    write(data.train_split.as_ref().expect("rooted layout"), ids(&ds.train))?;
    write(data.test_split.as_ref().expect("rooted layout"), ids(&ds.test))?;
    let manifest = root.join("synthetic.json");
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Error::json(&manifest, e))?;
    write(&manifest, text + "\n")?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::ingest;

    #[test]
    fn generator_is_deterministic_and_shaped() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.videos.len(), 12);
        assert_eq!(a.train.len(), 8);
        assert_eq!(a.test.len(), 4);
        for v in &a.videos {
            assert_eq!(v.visual.dim(), (100, 32));
            assert!(v.gt.labels.iter().all(|&l| l < 3));
        }
        let b = generate(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.videos[0].gt, b.videos[0].gt);
    }

    #[test]
    fn clusters_are_recoverable() {
        // nearest class mean classifies nearly every frame when noise is small
        let cfg = SyntheticConfig {
            visual_noise: 0.2,
            ..SyntheticConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let mut sums = Array2::<f64>::zeros((3, 32));
        let mut counts = [0usize; 3];
        for v in &ds.videos {
            for (t, &l) in v.gt.labels.iter().enumerate() {
                counts[l] += 1;
                for j in 0..32 {
                    sums[[l, j]] += v.visual[[t, j]] as f64;
                }
            }
        }
        let (mut hit, mut total) = (0, 0);
        for v in &ds.videos {
            for (t, &l) in v.gt.labels.iter().enumerate() {
                let best = (0..3)
                    .min_by(|&a, &b| {
                        let d = |c: usize| {
                            (0..32)
                                .map(|j| (v.visual[[t, j]] as f64 - sums[[c, j]] / counts[c] as f64).powi(2))
                                .sum::<f64>()
                        };
                        d(a).partial_cmp(&d(b)).unwrap()
                    })
                    .unwrap();
                hit += usize::from(best == l);
                total += 1;
            }
        }
        assert!(hit as f64 / total as f64 > 0.99);
    }

    #[test]
    fn noise_free_pseudo_labels_equal_truth() {
        let cfg = SyntheticConfig {
            pseudo: PseudoLabelNoise {
                boundary_jitter: 0,
                segment_relabel_prob: 0.0,
                burst_prob: 0.0,
                max_burst: 1,
            },
            ..SyntheticConfig::default()
        };
        for v in generate(&cfg).unwrap().videos {
            assert_eq!(v.pseudo.unwrap().labels, v.gt.labels);
        }
    }

    #[test]
    fn corruption_keeps_length_and_changes_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt: Vec<usize> = [vec![0; 20], vec![1; 20], vec![2; 20]].concat();
        let noise = PseudoLabelNoise {
            boundary_jitter: 3,
            segment_relabel_prob: 0.5,
            burst_prob: 0.1,
            max_burst: 2,
        };
        let p = corrupt_labels(&gt, 3, &noise, &mut rng);
        assert_eq!(p.len(), 60);
        assert!(p.iter().all(|&l| l < 3));
        assert_ne!(p, gt);
    }

    #[test]
    fn written_dataset_round_trips_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            train_videos: 2,
            test_videos: 1,
            frames: 40,
            ..SyntheticConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let data = write_dataset(&ds, &cfg, dir.path()).unwrap();
        let back = ingest(&data).unwrap();
        assert_eq!(back, ds);
        assert!(dir.path().join("synthetic.json").is_file());
    }
}
