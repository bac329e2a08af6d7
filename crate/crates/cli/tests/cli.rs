use std::path::Path;
use std::process::{Command, Output};

fn uavsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavsim")).args(args).env_remove("UAVSIM_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = uavsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(uavsim(&["--help"]).status.code(), Some(0));
    assert_eq!(uavsim(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(uavsim(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(uavsim(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(uavsim(&["--out", s(&out), "coverage", "--altitudes", "30"]).status.code(), Some(1));
    assert_eq!(uavsim(&["--out", s(&out), "eval", "--distances", "100"]).status.code(), Some(1));
    let missing = dir.path().join("nope.json");
    assert_eq!(uavsim(&["--out", s(&out), "coverage", "--scenario", s(&missing)]).status.code(), Some(2));
}

#[test]
fn full_pipeline_writes_manifests_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["--out", s(&d("gen")), "gen-scenario", "--seed", "3", "--area", "500,500", "--buildings", "5", "--gbs", "4"]);
    let scenario = d("gen").join("scenario.json");
    assert!(scenario.exists());

    ok(&["--out", s(&d("cov")), "coverage", "--scenario", s(&scenario), "--altitudes", "30,100", "--cell", "25"]);
    for f in ["coverage_z30.csv", "coverage_z100.csv", "coverage_z30.pgm", "coverage_summary.json", "manifest.json"] {
        assert!(d("cov").join(f).exists(), "{f}");
    }

    let train = ["train", "--scenario", s(&scenario), "--agent", "dupac", "--steps", "1024", "--rollout", "512", "--envs", "2", "--seed", "4", "--endpoints", "random:100:200"];
    let train_dir = d("train");
    let mut args = vec!["--out", s(&train_dir)];
    args.extend(train);
    ok(&args);
    let ckpt = d("train").join("dupac.ckpt");
    assert!(ckpt.exists() && d("train").join("train_log.jsonl").exists());
    assert_eq!(manifest(&d("train"))["seed"], 4);

    ok(&["--out", s(&d("eval")), "eval", "--scenario", s(&scenario), "--checkpoint", s(&ckpt), "--distances", "100,150", "--episodes", "3", "--seed", "5"]);
    ok(&["--out", s(&d("rand")), "eval", "--scenario", s(&scenario), "--agent", "random", "--distances", "100,150", "--episodes", "3", "--seed", "5"]);
    for f in ["results.csv", "results.json", "episodes.csv", "traces.jsonl"] {
        assert!(d("eval").join(f).exists(), "{f}");
    }
    ok(&["--out", s(&d("cmp")), "compare", "--a", s(&d("eval").join("results.csv")), "--b", s(&d("rand").join("results.csv"))]);
    let deltas = std::fs::read_to_string(d("cmp").join("deltas.csv")).unwrap();
    assert_eq!(deltas.lines().count(), 3);

    // Re-running from each manifest reproduces the artifacts byte for byte.
    for (name, again) in [("train", "train2"), ("eval", "eval2"), ("gen", "gen2")] {
        let m = d(name).join("manifest.json");
        let command = manifest(&d(name))["command"].as_str().unwrap().to_string();
        ok(&["--out", s(&d(again)), "--config", s(&m), &command]);
        assert_eq!(hashes(&d(name)), hashes(&d(again)), "{name}");
    }

    // Worker count does not change results.
    let train4 = d("train4");
    let mut args = vec!["--out", s(&train4), "--workers", "4"];
    args.extend(train);
    ok(&args);
    assert_eq!(hashes(&d("train")), hashes(&d("train4")));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, flag: Option<&str>, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_uavsim"));
        cmd.args(["--out", s(out), "gen-scenario", "--area", "400,400", "--buildings", "3", "--gbs", "2"]);
        cmd.env_remove("UAVSIM_SEED");
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        if let Some(e) = env {
            cmd.env("UAVSIM_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        manifest(out)["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&dir.path().join("a"), None, Some("77")), 77);
    assert_eq!(run(&dir.path().join("b"), Some("5"), Some("77")), 5);
    assert_eq!(run(&dir.path().join("c"), None, None), 0);
    let bad = Command::new(env!("CARGO_BIN_EXE_uavsim"))
        .args(["--out", s(&dir.path().join("d")), "gen-scenario"])
        .env("UAVSIM_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn validate_command_reports_all_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    ok(&["--out", s(&out), "validate", "--seed", "1"]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("validate.json")).unwrap()).unwrap();
    let text = report.to_string();
    assert!(text.contains("passed"));
    assert!(!text.contains("\"passed\":false"));
}
