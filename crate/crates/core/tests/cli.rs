use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn svmllab(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svmllab"))
        .args(args)
        .env("SVMLLAB_CACHE", cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(svmllab(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(svmllab(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(
        svmllab(dir.path(), &["train", "--dataset", "haber"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        svmllab(dir.path(), &["fetch", "no-such-id"]).status.code(),
        Some(2)
    );
    let out = svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            "haber",
            "--shape",
            "rect:9",
            "--out",
            &p(&dir, "m.json"),
        ],
    );
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("one.csv");
    std::fs::write(&csv, "a,b,y\n1,2,1\n3,4,1\n").unwrap();
    let out = svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            csv.to_str().unwrap(),
            "--out",
            &p(&dir, "m.json"),
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let out = svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            "haber",
            "--out",
            "/nonexistent-dir/m.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fetch_reports_cached_copies() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let first = svmllab(&cache, &["fetch", "haber", "credit"]);
    assert_eq!(first.status.code(), Some(0));
    assert!(!stdout(&first).contains("(cached)"));
    let second = svmllab(&cache, &["fetch", "haber"]);
    assert!(stdout(&second).contains("(cached)"));
    let json = svmllab(&cache, &["fetch", "haber", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert!(v.is_array() || v.is_object());
}

#[test]
fn training_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = svmllab(
            dir.path(),
            &[
                "train",
                "--dataset",
                "haber",
                "--shape",
                "diag",
                "--seed",
                "7",
                "--out",
                &p(&dir, name),
            ],
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(dir.path().join(format!("{name}.trace.csv"))).unwrap(),
        )
    };
    assert_eq!(run("a.json"), run("b.json"));
    let model: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    assert!(model.is_object());
}

#[test]
fn train_json_summary_parses() {
    let dir = TempDir::new().unwrap();
    let out = svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            "haber",
            "--method",
            "euclid-cv",
            "--folds",
            "2",
            "--out",
            &p(&dir, "m.json"),
            "--format",
            "json",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["method"], "euclid-cv");
    assert!(v["train_error"].as_f64().unwrap() < 0.5);
}

#[test]
fn benchmark_resumes_from_journal() {
    let dir = TempDir::new().unwrap();
    let journal = p(&dir, "j.jsonl");
    let args = [
        "benchmark",
        "--datasets",
        "haber",
        "--methods",
        "euclid-cv,svml",
        "--repeats",
        "2",
        "--journal",
        &journal,
        "--format",
        "json",
    ];
    let first = svmllab(dir.path(), &args);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let lines = std::fs::read_to_string(&journal).unwrap().lines().count();
    assert_eq!(lines, 4);
    let second = svmllab(dir.path(), &args);
    assert_eq!(
        std::fs::read_to_string(&journal).unwrap().lines().count(),
        lines
    );
    assert_eq!(stdout(&first), stdout(&second));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["repeats"], 2);

    let md = svmllab(
        dir.path(),
        &[
            "benchmark",
            "--datasets",
            "haber",
            "--methods",
            "euclid-cv",
            "--repeats",
            "2",
            "--journal",
            &journal,
        ],
    );
    assert!(stdout(&md).contains('|'));
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let dir = TempDir::new().unwrap();
    let ok = svmllab(dir.path(), &["gradcheck"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(
        stdout(&ok)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        4
    );
    let bad = svmllab(dir.path(), &["gradcheck", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn surface_needs_two_dimensional_model() {
    let dir = TempDir::new().unwrap();
    let model = p(&dir, "rect.json");
    let out = svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            "haber",
            "--shape",
            "rect:2",
            "--out",
            &model,
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = p(&dir, "grid.csv");
    let out = svmllab(
        dir.path(),
        &[
            "surface",
            "--model",
            &model,
            "--resolution",
            "2",
            "--out",
            &grid,
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&grid).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with(|c: char| c == '-' || c.is_ascii_digit()))
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(Path::new(&format!("{grid}.sv.csv")).exists());

    let diag = p(&dir, "diag.json");
    svmllab(
        dir.path(),
        &[
            "train",
            "--dataset",
            "haber",
            "--shape",
            "diag",
            "--out",
            &diag,
        ],
    );
    let out = svmllab(
        dir.path(),
        &["surface", "--model", &diag, "--out", &p(&dir, "x.csv")],
    );
    assert_eq!(out.status.code(), Some(2));
}
