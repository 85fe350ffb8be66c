//! Label vocabularies and per-frame label sequences.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered mapping between label tokens and dense class ids `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    background: Option<usize>,
}

impl LabelMap {
    /// Builds a map from `(token, id)` pairs. Ids must be exactly `0..C`.
    pub fn new(entries: Vec<(String, usize)>, background: Option<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLabelMap("no entries".into()));
        }
        let classes = entries.len();
        let mut tokens = vec![None; classes];
        let mut index = HashMap::with_capacity(classes);
        for (token, id) in entries {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::InvalidLabelMap(format!("bad token {token:?}")));
            }
            if id >= classes {
                return Err(Error::InvalidLabelMap(format!("id {id} leaves a gap in 0..{classes}")));
            }
            if tokens[id].is_some() {
                return Err(Error::InvalidLabelMap(format!("duplicate id {id}")));
            }
            if index.insert(token.clone(), id).is_some() {
                return Err(Error::InvalidLabelMap(format!("duplicate token {token:?}")));
            }
            tokens[id] = Some(token);
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap).collect();
        if let Some(bg) = background {
            if bg >= classes {
                return Err(Error::InvalidLabel { id: bg, classes });
            }
        }
        Ok(Self {
            tokens,
            index,
            background,
        })
    }

    /// Map whose ids follow the order of `tokens`.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        Self::new(
            tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.as_ref().to_string(), i))
                .collect(),
            None,
        )
    }

    pub fn with_background(mut self, background: Option<usize>) -> Result<Self> {
        if let Some(bg) = background {
            if bg >= self.num_classes() {
                return Err(Error::InvalidLabel {
                    id: bg,
                    classes: self.num_classes(),
                });
            }
        }
        self.background = background;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.tokens.len()
    }

    pub fn background(&self) -> Option<usize> {
        self.background
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens.get(id).map(String::as_str).ok_or(Error::InvalidLabel {
            id,
            classes: self.tokens.len(),
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Parses `token<TAB>id` lines. Blank lines are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: msg.to_string(),
            };
            let (token, id) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>id"))?;
            let id = id
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_err("class id is not a non-negative integer"))?;
            entries.push((token.trim().to_string(), id));
        }
        Self::new(entries, None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, token) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{token}\t{id}");
        }
        out
    }
}

/// Frame-level class ids for one video (or one chunk of it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    pub video_id: String,
    pub labels: Vec<usize>,
    pub is_pseudo: bool,
}

impl FrameSequence {
    pub fn new(video_id: impl Into<String>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(Self {
            video_id: video_id.into(),
            labels,
            is_pseudo: false,
        })
    }

    pub fn pseudo(mut self, is_pseudo: bool) -> Self {
        self.is_pseudo = is_pseudo;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, map: &LabelMap) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::EmptySequence);
        }
        let classes = map.num_classes();
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&id) => Err(Error::InvalidLabel { id, classes }),
            None => Ok(()),
        }
    }

    /// Reads a label file: one token per line, line n is frame n. Blank lines are rejected.
    pub fn load(path: &Path, video_id: &str, map: &LabelMap) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labels = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let token = line.trim_end_matches('\r');
            if token.trim().is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    msg: "blank line in label file".into(),
                });
            }
            labels.push(map.id(token.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })?);
        }
        Self::new(video_id, labels).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "label file has no frames".into(),
        })
    }

    pub fn to_text(&self, map: &LabelMap) -> Result<String> {
        let mut out = String::with_capacity(self.labels.len() * 8);
        for &l in &self.labels {
            out.push_str(map.token(l)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps_and_duplicates() {
        assert!(LabelMap::new(vec![("a".into(), 0), ("b".into(), 2)], None).is_err());
        assert!(LabelMap::new(vec![("a".into(), 0), ("a".into(), 1)], None).is_err());
        assert!(LabelMap::new(vec![("a".into(), 0), ("b".into(), 0)], None).is_err());
        assert!(LabelMap::new(vec![("a".into(), 0)], Some(1)).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let map = LabelMap::from_tokens(&["pour", "stir", "background"]).unwrap();
        let back = LabelMap::parse(&map.to_text(), Path::new("m.txt")).unwrap();
        assert_eq!(map, back);
        assert_eq!(back.id("stir").unwrap(), 1);
        assert!(matches!(back.id("cut"), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn label_file_rejects_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let map = LabelMap::from_tokens(&["a", "b"]).unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "a\n\nb\n").unwrap();
        let err = FrameSequence::load(&path, "v", &map).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        std::fs::write(&path, "a\na\nb\n").unwrap();
        assert_eq!(FrameSequence::load(&path, "v", &map).unwrap().labels, vec![0, 0, 1]);
    }
}
