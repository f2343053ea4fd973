use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_valleyforge");

fn run_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args).env_remove("VALLEYFORGE_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, data: &str, epochs: u32) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{
  "dataset": {{"path": "{data}", "schema_id": "generic"}},
  "seed": 3,
  "feature_selection": {{"sev_eb": {{"pop_size": 6, "max_iters": 4}}, "surrogate_epochs": 5}},
  "network": {{"epochs": {epochs}}}
}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn gen_synth_train_eval_predict_round_trip() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "gen-synth", "--n", "120", "--informative", "2", "--noise", "2",
            "--delta", "3.0", "--seed", "5", "--out", "synth.csv",
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("synth.csv").is_file());

    write_config(dir.path(), "synth.csv", 5);
    let out = run_in(
        dir.path(),
        &["train", "--config", "config.json", "--out", "run"],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("macro:"), "{stdout}");
    for file in ["model.json", "metrics.json", "scores.csv", "loss_curve.csv", "roc_target.csv"] {
        assert!(dir.path().join("run").join(file).is_file(), "{file} missing");
    }

    let out = run_in(
        dir.path(),
        &["eval", "--model", "run/model.json", "--data", "synth.csv"],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("auc"), "{stdout}");
    assert!(dir.path().join("metrics.json").is_file());
    assert!(dir.path().join("roc_target.csv").is_file());

    let out = run_in(
        dir.path(),
        &[
            "predict", "--model", "run/model.json", "--data", "synth.csv",
            "--out", "preds.csv",
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let preds = fs::read_to_string(dir.path().join("preds.csv")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "p_target");
    assert_eq!(lines.len(), 121);
    for line in &lines[1..] {
        let p: f64 = line.parse().unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
}

#[test]
fn seed_precedence_flag_beats_env_beats_config() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "gen-synth", "--n", "120", "--informative", "2", "--noise", "2",
            "--delta", "3.0", "--seed", "5", "--out", "synth.csv",
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    write_config(dir.path(), "synth.csv", 4);

    let model = |run: &str| fs::read(dir.path().join(run).join("model.json")).unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--config", "config.json", "--out", "a", "--seed", "9"],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let out = run_in(
        dir.path(),
        &["train", "--config", "config.json", "--out", "b"],
        &[("VALLEYFORGE_SEED", "9")],
    );
    assert!(out.status.success(), "{out:?}");
    // flag wins over a contradictory env var
    let out = run_in(
        dir.path(),
        &["train", "--config", "config.json", "--out", "c", "--seed", "9"],
        &[("VALLEYFORGE_SEED", "4")],
    );
    assert!(out.status.success(), "{out:?}");
    // config seed (3) alone gives a different model
    let out = run_in(dir.path(), &["train", "--config", "config.json", "--out", "d"], &[]);
    assert!(out.status.success(), "{out:?}");

    assert_eq!(model("a"), model("b"));
    assert_eq!(model("a"), model("c"));
    assert_ne!(model("a"), model("d"));
}

#[test]
fn failures_emit_one_machine_parseable_error_line() {
    let dir = tempdir().unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["train", "--config", "nope.json"], "ERROR CONFIG: "),
        (vec!["eval", "--model", "nope.json", "--data", "x.csv"], "ERROR "),
        (vec!["frobnicate"], "ERROR USAGE: "),
        (
            vec![
                "gen-synth", "--n", "7", "--informative", "1", "--noise", "1",
                "--delta", "2.0", "--seed", "1", "--out", "x.csv",
            ],
            "ERROR DATA: ",
        ),
    ];
    for (args, prefix) in cases {
        let out = run_in(dir.path(), &args, &[]);
        assert!(!out.status.success(), "{args:?} should fail");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{args:?} stderr: {stderr}");
        assert!(stderr.starts_with(prefix), "{args:?} stderr: {stderr}");
    }

    let bad_env = run_in(
        dir.path(),
        &["train", "--config", "whatever.json"],
        &[("VALLEYFORGE_SEED", "not-a-number")],
    );
    assert!(!bad_env.status.success());
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempdir().unwrap();
    let cfg = r#"{
  "cases": [{"function": "sphere", "dimension": 2}],
  "seeds": [0, 1],
  "pop_size": 8,
  "max_iters": 5
}"#;
    fs::write(dir.path().join("bench.json"), cfg).unwrap();
    let out = run_in(dir.path(), &["bench", "--config", "bench.json"], &[]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("sphere d=2 sev_eb"), "{stdout}");
    let bench = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 5, "{bench}");
    assert!(bench.starts_with("function,dimension,seed,method,"));
}
