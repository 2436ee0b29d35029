use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diet(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diet"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DIET_VERIFY_CORRUPT_GRADIENT")
        .output()
        .expect("binary runs")
}

const SMALL: &[&str] = &[
    "--n", "12", "--d", "8", "--heads", "2", "--layers", "1", "--d-p", "2",
];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    extra.iter().chain(SMALL).copied().collect()
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = diet(
        &[
            "verify", "--trials", "20", "--n", "12", "--d", "8", "--heads", "2", "--d-p", "2",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["suites"].as_array().unwrap().len(), 6);
}

#[test]
fn corrupted_gradients_fail_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_diet"))
        .args(["verify", "--trials", "5", "--out"])
        .arg(dir.path())
        .env("DIET_VERIFY_CORRUPT_GRADIENT", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL finite-difference-gradients"), "{text}");
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        diet(&["train", "--scheme", "rope"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        diet(&["train", "--sharing", "everything"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(diet(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = diet(&["train", "--n", "0", "--steps", "2"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn training_artifacts_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = with(&[
        "train", "--scheme", "diet-abs", "--steps", "30", "--seed", "3",
    ]);
    assert!(diet(&args, a.path()).status.success());
    assert!(diet(&args, b.path()).status.success());
    for file in ["history.csv", "checkpoint.bin", "train.json"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file} differs"
        );
    }
    let other = tempfile::tempdir().unwrap();
    let args = with(&[
        "train", "--scheme", "diet-abs", "--steps", "30", "--seed", "4",
    ]);
    assert!(diet(&args, other.path()).status.success());
    assert_ne!(
        fs::read(a.path().join("history.csv")).unwrap(),
        fs::read(other.path().join("history.csv")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"n": 10, "d": 8, "heads": 2, "layers": 1, "steps": 5, "scheme": "shaw", "seed": 9}"#,
    )
    .unwrap();
    let out = diet(
        &["train", "--config", cfg.to_str().unwrap(), "--steps", "7"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("train.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["steps"], 7);
    assert_eq!(report["config"]["n"], 10);
    assert_eq!(report["config"]["scheme"], "shaw");
    assert_eq!(
        fs::read_to_string(dir.path().join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        8
    );
}

#[test]
fn viz_writes_heatmaps_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    assert!(diet(
        &with(&["train", "--scheme", "diet-rel", "--steps", "5"]),
        dir.path()
    )
    .status
    .success());
    let out = diet(&["viz"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = fs::read_to_string(dir.path().join("heatmaps/layer0_head1_bias.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let cells = doc
        .descendants()
        .filter(|n| n.has_attribute("data-value"))
        .count();
    assert_eq!(cells, 144);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("viz.json")).unwrap()).unwrap();
    let heads = summary["heads"].as_array().unwrap();
    assert_eq!(heads.len(), 2);
    for h in heads {
        assert!(h["diagonals"]["along_diagonal_mad"].as_f64().unwrap() < 1e-12);
    }
    assert!(dir.path().join("rank.csv").exists());
}

#[test]
fn rank_scan_reports_every_head() {
    let dir = tempfile::tempdir().unwrap();
    let out = diet(
        &with(&["rank-scan", "--scheme", "diet-abs", "--examples", "2"]),
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("rank.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "layer,head,score_rank,token_rank,positional_rank,rel_tol"
    );
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let score: usize = f[2].parse().unwrap();
        let token: usize = f[3].parse().unwrap();
        let pos: usize = f[4].parse().unwrap();
        assert!(score <= token + pos);
    }
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = diet(
        &with(&["bench", "--reps", "10", "--warmup", "3"]),
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "scheme,mode,n,d,h,d_h,reps,mean_ns,stdev_ns,min_ns,rel_slowdown"
    );
    assert_eq!(csv.lines().count(), 17);
}
