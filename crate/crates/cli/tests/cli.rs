use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vidgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidgraph"))
        .args(args)
        .env("LOG_LEVEL", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vidgraph(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup(root: &Path) -> (String, String) {
    let gen = root.join("gen.json");
    fs::write(
        &gen,
        r#"{"train_videos": 3, "test_videos": 2, "frames": 60, "visual_dim": 6}"#,
    )
    .unwrap();
    let data = root.join("data");
    ok(&[
        "gen-synthetic",
        "--config",
        gen.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    let cfg = root.join("run.json");
    fs::write(
        &cfg,
        r#"{
  "graph": {"chunk_size": 40},
  "walk": {"dimension": 8, "walks_per_node": 2, "walk_length": 10, "epochs": 1},
  "hyper": {"hidden": 16, "epochs": 4, "batch_size": 2}
}"#,
    )
    .unwrap();
    (cfg.to_str().unwrap().into(), data.to_str().unwrap().into())
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn train_eval_visualize_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(run);
        let out_s = out.to_str().unwrap();
        let train = ok(&[
            "train",
            "--config",
            &cfg,
            "--data-root",
            &data,
            "--out",
            out_s,
            "--seed",
            "3",
        ]);
        assert!(train.contains("trained on 6 chunks"), "{train}");
        let eval = ok(&[
            "eval",
            "--config",
            &cfg,
            "--data-root",
            &data,
            "--out",
            out_s,
            "--seed",
            "3",
        ]);
        assert!(eval.contains("Edit"), "{eval}");
        for f in [
            "losses.csv",
            "run_manifest.json",
            "eval_manifest.json",
            "report.json",
            "predictions/test_00.txt",
        ] {
            assert!(out.join(f).is_file(), "{f}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 3);
        assert_eq!(manifest["config"]["hyper"]["epochs"], 4);
        checkpoints.push((
            file_bytes(&out.join("checkpoint")),
            fs::read(out.join("report.json")).unwrap(),
        ));
    }
    assert_eq!(checkpoints[0], checkpoints[1]);

    let svg = root.path().join("viz/test_00.svg");
    let out = root.path().join("a");
    ok(&[
        "visualize",
        "--gt",
        &format!("{data}/labels/test_00.txt"),
        "--pred",
        out.join("predictions/test_00.txt").to_str().unwrap(),
        "--label-map",
        &format!("{data}/label_map.txt"),
        "--out",
        svg.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("ground truth"));
}

#[test]
fn stage_commands_write_per_chunk_files() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let out = root.path().join("stages");
    let out_s = out.to_str().unwrap();
    ok(&[
        "build-graph",
        "--config",
        &cfg,
        "--data-root",
        &data,
        "--out",
        out_s,
        "--split",
        "test",
    ]);
    ok(&[
        "embed-structure",
        "--config",
        &cfg,
        "--data-root",
        &data,
        "--out",
        out_s,
    ]);
    ok(&["embed-semantic", "--config", &cfg, "--data-root", &data, "--out", out_s]);
    assert_eq!(fs::read_dir(out.join("graphs/test")).unwrap().count(), 4);
    // one binary plus one sidecar per chunk
    assert_eq!(fs::read_dir(out.join("structural/train")).unwrap().count(), 12);
    assert_eq!(fs::read_dir(out.join("semantic/train")).unwrap().count(), 12);
}

#[test]
fn ablation_writes_tables() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let out = root.path().join("abl");
    let stdout = ok(&[
        "ablate",
        "--config",
        &cfg,
        "--data-root",
        &data,
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "test_semantic",
    ]);
    assert!(stdout.contains("2 cells, 0 failed"), "{stdout}");
    let csv = fs::read_to_string(out.join("ablation/test_semantic/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("ablation/ablation.json").is_file());
}

#[test]
fn errors_exit_nonzero_with_context() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nowhere");
    let out = vidgraph(&[
        "train",
        "--data-root",
        missing.to_str().unwrap(),
        "--out",
        root.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("labels_dir"), "{err}");

    let out = vidgraph(&["ablate", "--grid", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let a = root.path().join("a.txt");
    let b = root.path().join("b.txt");
    let map = root.path().join("map.txt");
    fs::write(&a, "x\nx\n").unwrap();
    fs::write(&b, "x\n").unwrap();
    fs::write(&map, "x\t0\n").unwrap();
    let svg = root.path().join("o.svg");
    let out = vidgraph(&[
        "visualize",
        "--gt",
        a.to_str().unwrap(),
        "--pred",
        b.to_str().unwrap(),
        "--label-map",
        map.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(!svg.exists());
}
