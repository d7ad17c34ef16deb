use std::path::Path;
use std::process::{Command, Output};

use cadritz::geometry::{Edge, EdgeTag, EdgeTags, MultiPatchDomain, Patch, PatchFile};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadritz"))
        .args(args)
        .output()
        .expect("run cadritz")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path, problem: &str, preset: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{problem}-{preset}.json"));
    let out = dir.join(format!("{problem}-{preset}"));
    let text = serde_json::json!({
        "problem": problem,
        "preset": preset,
        "out": out,
        "seed": 5,
        "log_every": 0,
        "eval_samples": 256,
        "line_points": 21,
        "budgets": {
            "interior": 120, "dirichlet": 40, "neumann": 40,
            "interface": 40, "antiperiodic": 40, "min_per_set": 2
        },
        "schedule": [{ "epochs": 3, "lr": 1e-3 }]
    });
    std::fs::write(&path, text.to_string()).unwrap();
    path
}

#[test]
fn info_reports_counts() {
    let o = run(&["--problem", "cylinder", "--preset", "dg", "info"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("interfaces: 16 (coupled: 4)"), "{s}");
    assert!(s.contains("total |theta|: 1798"), "{s}");

    let o = run(&["--problem", "pmsm", "--preset", "single", "info"]);
    assert!(stdout(&o).contains("total |theta|: 36025"));
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "cylinder", "dg");
    let cfg = cfg.to_str().unwrap();
    assert!(run(&["--config", cfg, "train"]).status.success());
    let out = dir.path().join("cylinder-dg");

    let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("epoch,total_loss,term_0"));

    assert!(run(&["--config", cfg, "evaluate"]).status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for key in ["rel_l2", "max_abs", "mean_abs", "flux", "consistency", "parameters"] {
        assert!(!m[key].is_null(), "missing {key}");
    }
    assert_eq!(m["parameters"], 1798);
    let field = std::fs::read_to_string(out.join("field.csv")).unwrap();
    assert!(field.starts_with("x,y,subdomain,u,ux,uy,u_ref,abs_err"));
    assert_eq!(field.lines().count(), 257);
    let scan = std::fs::read_to_string(out.join("line_scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 22);

    let o = run(&["compare", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("cylinder-dg"));
}

#[test]
fn training_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = tiny_config(d.path(), "pmsm", "coupling");
        assert!(run(&["--config", cfg.to_str().unwrap(), "train"]).status.success());
    }
    for file in ["loss.csv", "checkpoint.json"] {
        let x = std::fs::read(a.path().join("pmsm-coupling").join(file)).unwrap();
        let y = std::fs::read(b.path().join("pmsm-coupling").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn oracle_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle");
    let o = run(&["--problem", "cylinder", "--out", out.to_str().unwrap(), "evaluate", "--oracle"]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["rel_l2"], 0.0);
    assert!(m["flux"]["max_normalized"].as_f64().unwrap() < 1e-12);
}

#[test]
fn sample_writes_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&["--problem", "cylinder", "--desk-scale", "--out", out.to_str().unwrap(), "sample"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        rows.headers().unwrap(),
        vec!["patch", "k", "y1", "y2", "x1", "x2", "weight"]
    );
    let weights: Vec<f64> = rows
        .records()
        .map(|r| r.unwrap()[6].parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 2000);
    assert!(weights.iter().all(|&w| w > 0.0));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"problem": "cylinder", "epochs": 3}"#).unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "info"]).status.code(), Some(2));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    std::fs::write(empty.join("config.json"), r#"{"problem": "cylinder"}"#).unwrap();
    assert_eq!(run(&["compare", empty.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(run(&["--problem", "imported", "info"]).status.code(), Some(2));
}

#[test]
fn imported_geometry() {
    let tags = EdgeTags::all(EdgeTag::Dirichlet);
    let a = Patch::bilinear(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        "left",
        tags.with(Edge::East, EdgeTag::Interface),
    );
    let b = Patch::bilinear(
        [[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]],
        "right",
        tags.with(Edge::West, EdgeTag::Interface),
    );
    let d = MultiPatchDomain::new(vec![a, b]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("squares.json"),
        PatchFile::from_domain(&d).to_json().unwrap(),
    )
    .unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"problem": "imported", "preset": "dg", "geometry": "squares.json",
            "poisson": {"coefficients": {"right": 4.0}}}"#,
    )
    .unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "info"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("interfaces: 1 (coupled: 1)"), "{s}");
    assert!(s.contains("subdomains: left, right"), "{s}");
}
