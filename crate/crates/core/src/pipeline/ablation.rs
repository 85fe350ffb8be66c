use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{Modalities, Precision, RandomEdgeKinds, RunConfig};
use super::dataset::{ingest, Dataset};
use super::manifest::write_file;
use super::run::{evaluate_dataset, train_dataset};
use crate::dgcn::Real;
use crate::error::{Error, Result};
use crate::graph::EdgeSelection;
use crate::metrics::MetricsReport;
use crate::semantic::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Edges,
    Modalities,
    Hops,
    SemanticFeatures,
    TestSemantic,
}

impl Grid {
    pub const ALL: [Grid; 5] = [
        Grid::Edges,
        Grid::Modalities,
        Grid::Hops,
        Grid::SemanticFeatures,
        Grid::TestSemantic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Grid::Edges => "edges",
            Grid::Modalities => "modalities",
            Grid::Hops => "hops",
            Grid::SemanticFeatures => "semantic_features",
            Grid::TestSemantic => "test_semantic",
        }
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grid::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation grid {s:?}")))
    }
}

/// Row names and configs of one grid, derived from `base`.
pub fn grid_rows(grid: Grid, base: &RunConfig) -> Vec<(String, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let edges = |sel: EdgeSelection| with(&|c: &mut RunConfig| c.switches.edges = sel);
    let none = EdgeSelection::TEMPORAL_ONLY;
    match grid {
        Grid::Edges => vec![
            ("temporal".into(), edges(none)),
            (
                "+self_loop".into(),
                edges(EdgeSelection {
                    self_loop: true,
                    ..none
                }),
            ),
            ("+positive".into(), edges(EdgeSelection { positive: true, ..none })),
            ("+negative".into(), edges(EdgeSelection { negative: true, ..none })),
            (
                "+semantic".into(),
                edges(EdgeSelection {
                    positive: true,
                    negative: true,
                    ..none
                }),
            ),
            ("all".into(), edges(EdgeSelection::ALL)),
            (
                "all, semantic 50% random".into(),
                with(&|c: &mut RunConfig| {
                    c.switches.edges = EdgeSelection::ALL;
                    c.switches.random_edge_drop = Some(0.5);
                    c.switches.random_edge_kinds = RandomEdgeKinds::Semantic;
                }),
            ),
            (
                "all, optional 50% random".into(),
                with(&|c: &mut RunConfig| {
                    c.switches.edges = EdgeSelection::ALL;
                    c.switches.random_edge_drop = Some(0.5);
                    c.switches.random_edge_kinds = RandomEdgeKinds::AllOptional;
                }),
            ),
        ],
        Grid::Modalities => (1..8u8)
            .map(|bits| {
                let m = Modalities {
                    visual: bits & 1 != 0,
                    structural: bits & 2 != 0,
                    semantic: bits & 4 != 0,
                };
                (m.name(), with(&|c: &mut RunConfig| c.switches.modalities = m))
            })
            .collect(),
        Grid::Hops => (2..=5)
            .map(|h| (format!("hops={h}"), with(&|c: &mut RunConfig| c.walk.hops = h)))
            .collect(),
        Grid::SemanticFeatures => vec![
            (
                "none".into(),
                with(&|c: &mut RunConfig| c.switches.modalities.semantic = false),
            ),
            (
                "raw".into(),
                with(&|c: &mut RunConfig| {
                    c.switches.modalities.semantic = true;
                    c.prompt.template = PromptTemplate::Raw;
                }),
            ),
            (
                "ensemble".into(),
                with(&|c: &mut RunConfig| {
                    c.switches.modalities.semantic = true;
                    c.prompt.template = PromptTemplate::Ensemble;
                }),
            ),
        ],
        Grid::TestSemantic => vec![
            (
                "with".into(),
                with(&|c: &mut RunConfig| c.switches.test_semantic = true),
            ),
            (
                "without".into(),
                with(&|c: &mut RunConfig| c.switches.test_semantic = false),
            ),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub grid: Grid,
    pub row: String,
    /// `None` when the cell failed; `error` then says why.
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Trains and evaluates every row. A failing cell is recorded and the rest still run.
pub fn run_grid(ds: &Dataset, base: &RunConfig, grid: Grid) -> Vec<AblationRow> {
    grid_rows(grid, base)
        .into_iter()
        .map(|(row, cfg)| {
            log::info!("ablation {}: {row}", grid.name());
            let result = match cfg.precision {
                Precision::F32 => cell::<f32>(ds, &cfg),
                Precision::F64 => cell::<f64>(ds, &cfg),
            };
            match result {
                Ok(report) => AblationRow {
                    grid,
                    row,
                    report: Some(report),
                    error: None,
                },
                Err(e) => {
                    log::warn!("ablation {} / {row} failed: {e}", grid.name());
                    AblationRow {
                        grid,
                        row,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

fn cell<F: Real>(ds: &Dataset, cfg: &RunConfig) -> Result<MetricsReport> {
    let trained = train_dataset::<F>(ds, cfg)?;
    Ok(evaluate_dataset(ds, cfg, &trained.model.params)?.report)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("grid,row,acc,edit,f1_10,f1_25,f1_50,top1,top5,error\n");
    for r in rows {
        let metrics = match &r.report {
            Some(m) => [
                m.accuracy,
                m.edit,
                m.f1["F1@10"],
                m.f1["F1@25"],
                m.f1["F1@50"],
                m.top1,
                m.top5,
            ]
            .map(|v| format!("{v:.4}"))
            .join(","),
            None => ",,,,,,".into(),
        };
        writeln!(
            out,
            "{},{},{metrics},{}",
            r.grid.name(),
            csv_field(&r.row),
            csv_field(r.error.as_deref().unwrap_or(""))
        )
        .expect("string write");
    }
    out
}

/// Writes `ablation.csv` and `ablation.json` into `dir`.
pub fn write_ablation(rows: &[AblationRow], dir: &Path) -> Result<()> {
    write_file(&dir.join("ablation.csv"), ablation_csv(rows).as_bytes())?;
    let path = dir.join("ablation.json");
    let json = serde_json::to_string_pretty(rows).map_err(|e| Error::json(&path, e))?;
    write_file(&path, (json + "\n").as_bytes())
}

/// Runs the given grids on the configured dataset and writes results under `out_dir/ablation`.
pub fn run_ablation(cfg: &RunConfig, grids: &[Grid]) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let ds = ingest(&cfg.data)?;
    let mut all = Vec::new();
    for &g in grids {
        let rows = run_grid(&ds, cfg, g);
        write_ablation(&rows, &cfg.out_dir.join("ablation").join(g.name()))?;
        all.extend(rows);
    }
    write_ablation(&all, &cfg.out_dir.join("ablation"))?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node2vec::WalkConfig;
    use crate::pipeline::synthetic::{generate, SyntheticConfig};

    #[test]
    fn grid_shapes() {
        let base = RunConfig::default();
        let counts: Vec<usize> = Grid::ALL.iter().map(|&g| grid_rows(g, &base).len()).collect();
        assert_eq!(counts, vec![8, 7, 4, 3, 2]);
        let mods: Vec<String> = grid_rows(Grid::Modalities, &base).into_iter().map(|r| r.0).collect();
        assert!(mods.contains(&"vis+str+sem".to_string()) && mods.contains(&"sem".to_string()));
        for g in Grid::ALL {
            assert_eq!(g.name().parse::<Grid>().unwrap(), g);
            for (_, c) in grid_rows(g, &base) {
                c.validate().unwrap();
            }
        }
    }

    #[test]
    fn failed_cells_are_recorded() {
        let ds = generate(&SyntheticConfig {
            train_videos: 2,
            test_videos: 1,
            frames: 40,
            visual_dim: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let mut base = RunConfig {
            walk: WalkConfig {
                dimension: 4,
                epochs: 1,
                walks_per_node: 1,
                walk_length: 5,
                ..WalkConfig::default()
            },
            ..RunConfig::default()
        };
        base.hyper.hidden = 8;
        base.hyper.epochs = 2;
        // the pseudo-label source is missing for every test video
        let mut broken = ds.clone();
        for v in &mut broken.videos {
            v.pseudo = None;
        }
        let rows = run_grid(&broken, &base, Grid::TestSemantic);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.report.is_none() && r.error.is_some()));
        let ok = run_grid(&ds, &base, Grid::TestSemantic);
        assert!(ok.iter().all(|r| r.report.is_some()));
        let csv = ablation_csv(&[rows, ok].concat());
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("pseudo-labels"));
    }
}
