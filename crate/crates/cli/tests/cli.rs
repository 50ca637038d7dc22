//! Subprocess tests of the command-line surface: exit codes, stage chaining,
//! and the resolved-config record.

use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn wellcast() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wellcast"))
}

#[test]
fn help_exits_zero() {
    let out = wellcast().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "preprocess", "augment", "train", "predict", "eval", "pipeline"] {
        assert!(text.contains(sub), "--help does not mention {sub}");
    }
}

#[test]
fn unknown_subcommand_exits_two() {
    let out = wellcast().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_two() {
    let out = wellcast().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_one_and_names_the_stage() {
    let out = wellcast()
        .args(["preprocess", "--manifest", "/nonexistent/manifest.json", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("preprocess"), "stderr should name the stage: {err}");
}

#[test]
fn simulate_writes_manifest_and_run_config() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("raw");
    let status = wellcast()
        .args(["simulate", "--wells", "3", "--seed", "5"])
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("manifest.json").is_file());
    assert!(out_dir.join("run_config.json").is_file());
    assert!(out_dir.join("well_000").join("frame_0000.png").is_file());
    assert!(out_dir.join("well_000").join("truth.json").is_file());

    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(config["subcommand"], "simulate");
    assert_eq!(config["args"]["wells"], 3);
    assert_eq!(config["args"]["seed"], 5);
}

fn run_stage(args: &[&str], extra: &[(&str, &Path)]) {
    let mut cmd = wellcast();
    cmd.args(args);
    for (flag, path) in extra {
        cmd.arg(flag).arg(path);
    }
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stage {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn stages_chain_through_manifests() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw");
    let pre = dir.path().join("pre");
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.wckp");
    let pred = dir.path().join("pred");
    let report = dir.path().join("report.json");

    run_stage(&["simulate", "--wells", "3", "--frames", "14", "--seed", "9"], &[("--out", &raw)]);
    run_stage(
        &["preprocess"],
        &[("--manifest", &raw.join("manifest.json")), ("--out", &pre)],
    );
    run_stage(
        &["augment", "--test-wells", "well_000", "--seed", "9"],
        &[("--manifest", &pre.join("manifest.json")), ("--out", &data)],
    );
    run_stage(
        &[
            "train",
            "--iterations",
            "2",
            "--batch",
            "2",
            "--layers",
            "1",
            "--hidden",
            "4",
            "--kernel",
            "3",
            "--seed",
            "9",
        ],
        &[("--manifest", &data.join("manifest.json")), ("--out", &ckpt)],
    );
    assert!(ckpt.is_file());
    let log = dir.path().join("model.wckp.log.csv");
    assert!(log.is_file());
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("iteration,train_mse,valid_mse\n"));

    // prediction takes exactly the conditioning prefix of the held-out well
    let input = dir.path().join("input");
    let gt = dir.path().join("gt");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    for i in 0..20 {
        let name = format!("frame_{i:04}.png");
        let target = if i < 10 { input.join(&name) } else { gt.join(format!("frame_{:04}.png", i - 10)) };
        std::fs::copy(data.join("well_000").join(&name), target).unwrap();
    }
    run_stage(&["predict"], &[("--ckpt", &ckpt), ("--input", &input), ("--out", &pred)]);
    assert!(pred.join("frame_0009.png").is_file());

    run_stage(
        &["eval", "--threshold", "0.2"],
        &[("--gt", &gt), ("--pred", &pred), ("--out", &report)],
    );
    assert!(report.is_file());
    assert!(report.with_extension("csv").is_file());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["frames"].as_array().unwrap().len(), 10);
}
