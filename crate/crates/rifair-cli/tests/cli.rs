//! End-to-end tests of the `rifair` binary: every subcommand, the exit
//! code contract, and the reproducibility guarantees.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rifair"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_code(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        stderr(output)
    );
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Generate a small dataset and train a quick checkpoint; returns
/// (schema, data dir, train dir).
fn prepare(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let synth_dir = dir.join("synth");
    let out = run(&[
        "synth",
        "--dataset",
        "adult",
        "--rows",
        "160",
        "--seed",
        "2",
        "--out",
        path_str(&synth_dir),
    ]);
    assert_code(&out, 0);
    let schema = synth_dir.join("schema.json");
    let data = synth_dir.join("data.csv");

    let train_dir = dir.join("train");
    let out = run(&[
        "train",
        "--schema",
        path_str(&schema),
        "--data",
        path_str(&data),
        "--out",
        path_str(&train_dir),
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--learning-rate",
        "0.05",
        "--seed",
        "3",
    ]);
    assert_code(&out, 0);
    (schema, synth_dir, train_dir)
}

/// First `n` data rows of a CSV, header preserved.
fn truncate_csv(src: &Path, dst: &Path, n: usize) {
    let text = fs::read_to_string(src).unwrap();
    let lines: Vec<&str> = text.lines().take(n + 1).collect();
    fs::write(dst, lines.join("\n") + "\n").unwrap();
}

#[test]
fn usage_errors_exit_1() {
    assert_code(&run(&["bogus-subcommand"]), 1);
    assert_code(&run(&["train"]), 1); // missing required flags
    assert_code(&run(&["--help"]), 0);
    assert_code(&run(&["--version"]), 0);
}

#[test]
fn invalid_mode_and_strategy_names_are_usage_errors() {
    let out = run(&[
        "attack", "--schema", "s.json", "--data", "d.csv", "--model", "m.json", "--out", "o",
        "--mode", "sideways",
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("sideways"), "{}", stderr(&out));

    let out = run(&[
        "manipulate",
        "--schema",
        "s.json",
        "--model",
        "m.json",
        "--data",
        "r.jsonl",
        "--out",
        "o",
        "--budget",
        "1",
        "--strategy",
        "acc_sideways",
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("acc_sideways"), "{}", stderr(&out));
}

#[test]
fn missing_schema_file_is_a_data_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let out = run(&[
        "train",
        "--schema",
        path_str(&missing),
        "--data",
        path_str(&dir.path().join("d.csv")),
        "--out",
        path_str(&dir.path().join("out")),
    ]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("nope.json"), "{}", stderr(&out));
}

#[test]
fn diverging_training_is_a_numeric_abort() {
    let dir = TempDir::new().unwrap();
    let synth_dir = dir.path().join("synth");
    assert_code(
        &run(&[
            "synth",
            "--dataset",
            "adult",
            "--rows",
            "80",
            "--seed",
            "1",
            "--out",
            path_str(&synth_dir),
        ]),
        0,
    );
    let out = run(&[
        "train",
        "--schema",
        path_str(&synth_dir.join("schema.json")),
        "--data",
        path_str(&synth_dir.join("data.csv")),
        "--out",
        path_str(&dir.path().join("train")),
        "--epochs",
        "2",
        "--learning-rate",
        "1e200",
    ]);
    assert_code(&out, 3);
    assert!(stderr(&out).contains("numeric abort"), "{}", stderr(&out));
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let dir = TempDir::new().unwrap();
    let synth_dir = dir.path().join("synth");
    assert_code(
        &run(&[
            "synth",
            "--dataset",
            "adult",
            "--rows",
            "120",
            "--seed",
            "4",
            "--out",
            path_str(&synth_dir),
        ]),
        0,
    );
    for sub in ["a", "b"] {
        assert_code(
            &run(&[
                "train",
                "--schema",
                path_str(&synth_dir.join("schema.json")),
                "--data",
                path_str(&synth_dir.join("data.csv")),
                "--out",
                path_str(&dir.path().join(sub)),
                "--hidden",
                "6",
                "--epochs",
                "2",
                "--seed",
                "9",
            ]),
            0,
        );
    }
    let a = fs::read(dir.path().join("a/model.json")).unwrap();
    let b = fs::read(dir.path().join("b/model.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn smoke_pipeline_produces_ten_bundles_with_five_attack_records() {
    let dir = TempDir::new().unwrap();
    let (schema, _, train_dir) = prepare(dir.path());
    let smoke = dir.path().join("smoke.csv");
    truncate_csv(&train_dir.join("test.csv"), &smoke, 10);

    let attack_dir = dir.path().join("attack");
    let out = run(&[
        "attack",
        "--schema",
        path_str(&schema),
        "--data",
        path_str(&smoke),
        "--model",
        path_str(&train_dir.join("model.json")),
        "--out",
        path_str(&attack_dir),
        "--steps",
        "4",
        "--trajectories",
        "1",
    ]);
    assert_code(&out, 0);

    let results = fs::read_to_string(attack_dir.join("results.jsonl")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines.len(), 10);
    for line in &lines {
        let bundle: serde_json::Value = serde_json::from_str(line).unwrap();
        // Five attack records: the three joint modes plus both baselines.
        assert_eq!(bundle["modes"].as_array().unwrap().len(), 3);
        assert!(bundle["fgsm_flip"].is_boolean());
        assert!(bundle["adf_success"].is_boolean());
    }
    // Trajectory exports for one instance: 3 modes x (csv + svg).
    assert_eq!(
        fs::read_dir(attack_dir.join("trajectories"))
            .unwrap()
            .count(),
        6
    );

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "evaluate",
        "--data",
        path_str(&attack_dir.join("results.jsonl")),
        "--out",
        path_str(&eval_dir),
    ]);
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("eval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_instances"], 10);
    let hist: Vec<u64> = report["n_attack_hist"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(hist.iter().sum::<u64>(), 10);
    let csv = fs::read_to_string(eval_dir.join("per_instance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);

    let manip_dir = dir.path().join("manip");
    let out = run(&[
        "manipulate",
        "--schema",
        path_str(&schema),
        "--model",
        path_str(&train_dir.join("model.json")),
        "--data",
        path_str(&attack_dir.join("results.jsonl")),
        "--out",
        path_str(&manip_dir),
        "--strategy",
        "acc-up",
        "--budget",
        "0",
    ]);
    assert_code(&out, 0);
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(manip_dir.join("manipulation_report.json")).unwrap(),
    )
    .unwrap();
    // Budget 0 is the identity.
    assert_eq!(report["budget_used"], 0);
    assert_eq!(report["before"], report["after"]);
}

#[test]
fn narrowed_mode_emits_partial_records() {
    let dir = TempDir::new().unwrap();
    let (schema, _, train_dir) = prepare(dir.path());
    let smoke = dir.path().join("smoke.csv");
    truncate_csv(&train_dir.join("test.csv"), &smoke, 5);

    let attack_dir = dir.path().join("attack");
    let out = run(&[
        "attack",
        "--schema",
        path_str(&schema),
        "--data",
        path_str(&smoke),
        "--model",
        path_str(&train_dir.join("model.json")),
        "--out",
        path_str(&attack_dir),
        "--mode",
        "fgsm",
        "--trajectories",
        "0",
    ]);
    assert_code(&out, 0);
    let results = fs::read_to_string(attack_dir.join("results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 5);
    for line in results.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["attack"], "fgsm");
    }

    // A narrowed run cannot feed the evaluator.
    let out = run(&[
        "evaluate",
        "--data",
        path_str(&attack_dir.join("results.jsonl")),
        "--out",
        path_str(&dir.path().join("eval")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn constant_model_yields_no_successes() {
    let dir = TempDir::new().unwrap();
    let synth_dir = dir.path().join("synth");
    assert_code(
        &run(&[
            "synth",
            "--dataset",
            "adult",
            "--rows",
            "40",
            "--seed",
            "6",
            "--out",
            path_str(&synth_dir),
        ]),
        0,
    );
    let schema = rifair::schema::FeatureSchema::from_path(&synth_dir.join("schema.json")).unwrap();
    let dim = schema.encoded_dim();
    let constant = rifair::model::MlpParams {
        layer_dims: vec![dim, 2],
        weights: vec![vec![0.0; 2 * dim]],
        biases: vec![vec![0.0; 2]],
        seed: 0,
        schema_hash: schema.hash(),
    };
    let model_path = dir.path().join("constant.json");
    constant.save(&model_path).unwrap();

    // The constant model emits probability 0.5, so the inclusive
    // threshold labels every instance 1. Restrict the smoke set to
    // ground-truth-positive rows, where no target label pattern is
    // pre-satisfied and no gradient exists to chase.
    let text = fs::read_to_string(synth_dir.join("data.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let positives: Vec<&str> = lines.filter(|l| l.ends_with(",gt_50k")).take(8).collect();
    assert!(positives.len() >= 4, "smoke data has too few positives");
    let smoke = dir.path().join("smoke.csv");
    fs::write(&smoke, format!("{header}\n{}\n", positives.join("\n"))).unwrap();
    let attack_dir = dir.path().join("attack");
    let out = run(&[
        "attack",
        "--schema",
        path_str(&synth_dir.join("schema.json")),
        "--data",
        path_str(&smoke),
        "--model",
        path_str(&model_path),
        "--out",
        path_str(&attack_dir),
        "--trajectories",
        "0",
    ]);
    assert_code(&out, 0);
    let results = fs::read_to_string(attack_dir.join("results.jsonl")).unwrap();
    for line in results.lines() {
        let bundle: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(bundle["fgsm_flip"], false);
        assert_eq!(bundle["adf_success"], false);
        for mode in bundle["modes"].as_array().unwrap() {
            assert_eq!(mode["success"], false, "line: {line}");
        }
    }
}

#[test]
fn mismatched_schema_is_rejected_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let (_, synth_dir, train_dir) = prepare(dir.path());
    let other_dir = dir.path().join("other");
    assert_code(
        &run(&[
            "synth",
            "--dataset",
            "bank",
            "--rows",
            "40",
            "--seed",
            "1",
            "--out",
            path_str(&other_dir),
        ]),
        0,
    );
    let out = run(&[
        "attack",
        "--schema",
        path_str(&other_dir.join("schema.json")),
        "--data",
        path_str(&synth_dir.join("data.csv")),
        "--model",
        path_str(&train_dir.join("model.json")),
        "--out",
        path_str(&dir.path().join("attack")),
    ]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));
}
