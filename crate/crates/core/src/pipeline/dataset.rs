use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::config::DataConfig;
use crate::error::{Error, Result};
use crate::graph::{FrameSequence, LabelMap};
use crate::matrix_io::{find_matrix, load_f32};

/// One video: ground truth, optional pseudo-labels and row-aligned visual features.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub id: String,
    pub gt: FrameSequence,
    pub pseudo: Option<FrameSequence>,
    pub visual: Array2<f32>,
}

impl VideoData {
    pub fn new(
        id: impl Into<String>,
        gt: FrameSequence,
        pseudo: Option<FrameSequence>,
        visual: Array2<f32>,
    ) -> Result<Self> {
        let id = id.into();
        let frames = gt.len();
        if visual.nrows() != frames {
            return Err(Error::RowMismatch {
                video: id,
                rows: visual.nrows(),
                frames,
            });
        }
        if let Some(p) = &pseudo {
            if p.len() != frames {
                return Err(Error::RowMismatch {
                    video: id,
                    rows: p.len(),
                    frames,
                });
            }
        }
        Ok(Self { id, gt, pseudo, visual })
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }
}

/// Videos sorted by id, with train and test index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub map: LabelMap,
    pub videos: Vec<VideoData>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn train_videos(&self) -> impl Iterator<Item = &VideoData> {
        self.train.iter().map(|&i| &self.videos[i])
    }

    pub fn test_videos(&self) -> impl Iterator<Item = &VideoData> {
        self.test.iter().map(|&i| &self.videos[i])
    }

    pub fn visual_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.visual.ncols())
    }
}

fn read_split(path: &Path, ids: &[String]) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        let idx = ids.iter().position(|v| v == id).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: format!("unknown video {id:?}"),
        })?;
        out.push(idx);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Loads every `<labels_dir>/<id>.txt` with its feature matrix and optional pseudo-labels.
pub fn ingest(data: &DataConfig) -> Result<Dataset> {
    data.check_paths()?;
    let map = LabelMap::load(&data.label_map)?;
    let entries = fs::read_dir(&data.labels_dir).map_err(|e| Error::io(&data.labels_dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&data.labels_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut videos = Vec::with_capacity(ids.len());
    for id in &ids {
        let gt = FrameSequence::load(&data.labels_dir.join(format!("{id}.txt")), id, &map)?;
        let feat_path = find_matrix(&data.features_dir, id).ok_or_else(|| Error::MissingFile {
            what: "visual features",
            video: id.clone(),
            path: data.features_dir.join(format!("{id}.bin")),
        })?;
        let visual = load_f32(&feat_path)?;
        let pseudo = match &data.pseudo_labels_dir {
            Some(dir) => {
                let p = dir.join(format!("{id}.txt"));
                if p.is_file() {
                    Some(FrameSequence::load(&p, id, &map)?.pseudo(true))
                } else {
                    None
                }
            }
            None => None,
        };
        videos.push(VideoData::new(id.clone(), gt, pseudo, visual)?);
    }
    let dim = videos[0].visual.ncols();
    if let Some(v) = videos.iter().find(|v| v.visual.ncols() != dim) {
        return Err(Error::Shape(format!(
            "video {}: {} feature columns, expected {dim}",
            v.id,
            v.visual.ncols()
        )));
    }

    let all: Vec<usize> = (0..ids.len()).collect();
    let train = match &data.train_split {
        Some(p) => read_split(p, &ids)?,
        None => all.clone(),
    };
    let test = match &data.test_split {
        Some(p) => read_split(p, &ids)?,
        None => all,
    };
    Ok(Dataset {
        map,
        videos,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_io::save_f32;

    fn write_video(root: &Path, id: &str, labels: &[&str], rows: usize) {
        fs::write(root.join("labels").join(format!("{id}.txt")), labels.join("\n") + "\n").unwrap();
        let m = Array2::from_shape_fn((rows, 4), |(i, j)| (i * 4 + j) as f32);
        save_f32(&root.join("features").join(format!("{id}.bin")), &m).unwrap();
    }

    fn layout() -> (tempfile::TempDir, DataConfig) {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["labels", "features", "pseudo", "splits"] {
            fs::create_dir_all(dir.path().join(sub)).unwrap();
        }
        fs::write(dir.path().join("label_map.txt"), "bg\t0\ncut\t1\n").unwrap();
        fs::write(dir.path().join("splits/train.txt"), "").unwrap();
        fs::write(dir.path().join("splits/test.txt"), "").unwrap();
        let cfg = DataConfig::rooted(dir.path());
        (dir, cfg)
    }

    #[test]
    fn matched_pair_loads() {
        let (dir, mut cfg) = layout();
        let labels: Vec<&str> = (0..100).map(|i| if i < 40 { "bg" } else { "cut" }).collect();
        write_video(dir.path(), "v1", &labels, 100);
        cfg.train_split = None;
        cfg.test_split = None;
        let ds = ingest(&cfg).unwrap();
        assert_eq!(ds.videos.len(), 1);
        assert_eq!(ds.videos[0].len(), 100);
        assert_eq!(ds.train, vec![0]);
        assert!(ds.videos[0].pseudo.is_none());
    }

    #[test]
    fn row_mismatch_names_video() {
        let (dir, cfg) = layout();
        let labels = vec!["cut"; 100];
        write_video(dir.path(), "short", &labels, 99);
        let err = ingest(&cfg).unwrap_err();
        assert!(matches!(&err, Error::RowMismatch { video, rows: 99, frames: 100 } if video == "short"));
    }

    #[test]
    fn unknown_token_and_missing_features() {
        let (dir, cfg) = layout();
        fs::write(dir.path().join("labels/x.txt"), "cut\nstir\n").unwrap();
        assert!(ingest(&cfg).unwrap_err().to_string().contains("stir"));

        fs::write(dir.path().join("labels/x.txt"), "cut\ncut\n").unwrap();
        let err = ingest(&cfg).unwrap_err();
        assert!(matches!(err, Error::MissingFile { ref video, .. } if video == "x"));
    }

    #[test]
    fn splits_and_pseudo_labels() {
        let (dir, cfg) = layout();
        write_video(dir.path(), "a", &["cut", "cut"], 2);
        write_video(dir.path(), "b", &["bg", "cut"], 2);
        fs::write(dir.path().join("pseudo/b.txt"), "cut\ncut\n").unwrap();
        fs::write(dir.path().join("splits/train.txt"), "a\n").unwrap();
        fs::write(dir.path().join("splits/test.txt"), "b\n").unwrap();
        let ds = ingest(&cfg).unwrap();
        assert_eq!(ds.train, vec![0]);
        assert_eq!(ds.test, vec![1]);
        let p = ds.videos[1].pseudo.as_ref().unwrap();
        assert!(p.is_pseudo);
        assert_eq!(p.labels, vec![1, 1]);

        fs::write(dir.path().join("splits/test.txt"), "zzz\n").unwrap();
        assert!(ingest(&cfg).is_err());
    }
}
