//! Command-line behavior: exit codes, outputs and cleanup.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&forge(&["--help"], tmp.path())), 0);
    assert_eq!(code(&forge(&["--version"], tmp.path())), 0);
    assert_eq!(code(&forge(&["no-such-command"], tmp.path())), 1);
    assert_eq!(code(&forge(&["eval", "--truth", "t.csv"], tmp.path())), 1);
}

#[test]
fn eval_scores_and_rejects_mismatched_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("truth.csv"),
        "x,y,z,category\n0,0,0,terrain\n0,0,1,trunk\n0,0,2,canopy\n0,0,3,understorey\n",
    )
    .unwrap();
    fs::write(d.join("pred.txt"), "terrain\ntrunk\ncanopy\nterrain\n").unwrap();
    let o = forge(
        &[
            "eval",
            "--truth",
            "truth.csv",
            "--pred",
            "pred.txt",
            "--collapse",
            "tree",
            "--json",
            "r.json",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["overall_accuracy"], 0.75);
    assert_eq!(report["collapsed"]["overall_accuracy"], 1.0);

    fs::write(d.join("short.txt"), "0\n1\n2\n").unwrap();
    let o = forge(
        &[
            "eval",
            "--truth",
            "truth.csv",
            "--pred",
            "short.txt",
            "--json",
            "s.json",
        ],
        d,
    );
    assert_eq!(code(&o), 1);
    assert!(!d.join("s.json").exists());

    fs::write(d.join("bad.txt"), "0\n1\nbark\n3\n").unwrap();
    let o = forge(&["eval", "--truth", "truth.csv", "--pred", "bad.txt"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = forge(
        &["occlude", "--in", "absent.csv", "--out", "o.csv"],
        tmp.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("o.csv").exists());
}

#[test]
fn pipeline_validate_and_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("cycle.json"),
        r#"{"nodes": [
            {"id": "a", "kind": "logic", "params": {"op": "invert"}, "inputs": ["b"]},
            {"id": "b", "kind": "logic", "params": {"op": "invert"}, "inputs": ["a"]}
        ]}"#,
    )
    .unwrap();
    let o = forge(&["pipeline", "validate", "--pipeline", "cycle.json"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle"));

    fs::write(
        d.join("p.json"),
        r#"{"nodes": [
            {"id": "d", "kind": "source", "params": {"type": "constant", "value": 1.0}},
            {"id": "s", "kind": "sampling", "params": {"mode": "bridson", "r": 8.0}, "inputs": ["d"]},
            {"id": "p", "kind": "placement", "params": {"prefab": "oak"}, "inputs": ["s"]}
        ]}"#,
    )
    .unwrap();
    assert_eq!(
        code(&forge(&["pipeline", "validate", "--pipeline", "p.json"], d)),
        0
    );
    let o = forge(
        &[
            "--seed",
            "7",
            "pipeline",
            "run",
            "--pipeline",
            "p.json",
            "--out",
            "pl.csv",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("pl.csv")).unwrap();
    assert!(csv.starts_with("node,prefab,x,y,z,"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("p,oak,")));
    assert!(csv.lines().count() > 2);
}

#[test]
fn terrain_texture_grass_scene_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("t.json"),
        r#"{"width": 32, "depth": 32, "grid_resolution": 33}"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let o = forge(args, d);
        assert_eq!(
            code(&o),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    run(&[
        "--seed", "3", "terrain", "--config", "t.json", "--out", "t.hm", "--points", "g.csv",
    ]);
    run(&[
        "--seed", "3", "texture", "noise", "--width", "16", "--height", "16", "--out", "n.pgm",
    ]);
    run(&[
        "--seed", "3", "texture", "voronoi", "--mode", "cellular", "--out", "v.pgm",
    ]);
    run(&[
        "texture", "apply", "--op", "invert", "--a", "n.pgm", "--out", "i.pgm",
    ]);
    run(&[
        "texture", "apply", "--op", "multiply", "--a", "n.pgm", "--b", "i.pgm", "--out", "m.pgm",
    ]);
    assert_eq!(
        code(&forge(
            &[
                "texture",
                "apply",
                "--op",
                "threshold",
                "--a",
                "n.pgm",
                "--out",
                "x.pgm"
            ],
            d
        )),
        1
    );
    run(&[
        "grass",
        "--terrain",
        "t.hm",
        "--density",
        "n.pgm",
        "--max-per-tile",
        "4",
        "--out",
        "grass.csv",
    ]);
    let grass = fs::read_to_string(d.join("grass.csv")).unwrap();
    assert_eq!((grass.lines().count() - 1) % 9, 0);
    run(&[
        "occlude", "--in", "g.csv", "--grid", "8,8", "--out", "o.csv",
    ]);
    run(&[
        "--seed", "3", "occlude", "--in", "g.csv", "--noise", "0.01", "--out", "on.csv",
    ]);

    fs::write(
        d.join("scene.json"),
        r#"{"terrain": {"width": 32, "depth": 32, "grid_resolution": 33},
            "prefabs": {"oak": {"type": "tree", "budget": 50}},
            "pipeline": {"nodes": [
                {"id": "d", "kind": "source", "params": {"type": "constant", "value": 1.0}},
                {"id": "s", "kind": "sampling", "params": {"mode": "bridson", "r": 6.0}, "inputs": ["d"]},
                {"id": "p", "kind": "placement", "params": {"prefab": "oak"}, "inputs": ["s"]}
            ]}}"#,
    )
    .unwrap();
    run(&[
        "--seed",
        "5",
        "scene",
        "build",
        "--config",
        "scene.json",
        "--out",
        "sc",
        "--ply",
    ]);
    for f in [
        "terrain.hm",
        "placements.csv",
        "scene.csv",
        "scene.ply",
        "manifest.json",
    ] {
        assert!(d.join("sc").join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(d.join("sc/manifest.json")).unwrap();
    assert!(manifest.contains("\"pipeline_document\""));
    assert!(!manifest.contains(&d.display().to_string()));
    run(&[
        "--seed",
        "5",
        "dataset",
        "build",
        "--scenes",
        "sc/scene.csv",
        "--mode",
        "camera",
        "--target-size",
        "512",
        "--out",
        "ds",
    ]);
    assert!(d.join("ds/manifest.json").exists());
}

#[test]
fn failed_scene_build_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), r#"{"pipeline": "missing.json"}"#).unwrap();
    let o = forge(
        &["scene", "build", "--config", "bad.json", "--out", "sc"],
        d,
    );
    assert_eq!(code(&o), 2);
    assert!(!d.join("sc").exists());
    fs::write(d.join("bad2.json"), r#"{"terrain": {"width": -1}}"#).unwrap();
    assert_eq!(
        code(&forge(
            &["scene", "build", "--config", "bad2.json", "--out", "sc"],
            d
        )),
        1
    );
}
