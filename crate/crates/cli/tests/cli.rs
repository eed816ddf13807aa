//! End-to-end tests that drive the compiled `ecl-gsr` binary: exit-code
//! contract, dataset generation, the embed/train/eval round trip, and the
//! file formats each subcommand leaves behind.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecl-gsr"))
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "expected success\nstdout: {}\nstderr: {}",
        stdout_of(&out),
        stderr_of(&out)
    );
    out
}

/// 36-node, 3-block dataset the fast tests share; dense enough that a
/// 2-epoch run trains without warnings.
fn tiny_dataset(dir: &Path) {
    run_ok(bin().args([
        "sbm",
        "--blocks",
        "3",
        "--per-block",
        "12",
        "--p-intra",
        "0.3",
        "--p-inter",
        "0.05",
        "--feat-dim",
        "8",
        "--train-ratio",
        "0.2",
        "--seed",
        "5",
        "--out",
    ])
    .arg(dir));
}

/// Flags that keep a training run to well under a second on the tiny graph.
const FAST: [&str; 8] = [
    "--epochs",
    "2",
    "--batch-pairs",
    "4",
    "--edges-per-subgraph",
    "4",
    "--k-steps",
    "1",
];

fn line_count(s: &str) -> usize {
    s.lines().count()
}

#[test]
fn help_and_version_exit_zero() {
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout_of(&help).contains("ecl-gsr"));

    let version = bin().arg("--version").output().unwrap();
    assert_eq!(version.status.code(), Some(0));

    let sub_help = bin().args(["train", "--help"]).output().unwrap();
    assert_eq!(sub_help.status.code(), Some(0));
    assert!(stdout_of(&sub_help).contains("--seed"));
}

#[test]
fn usage_errors_exit_one() {
    let unknown_sub = bin().arg("frobnicate").output().unwrap();
    assert_eq!(unknown_sub.status.code(), Some(1));

    let unknown_flag = bin().args(["train", "--data", "x", "--bogus"]).output().unwrap();
    assert_eq!(unknown_flag.status.code(), Some(1));

    let missing_arg = bin().arg("sbm").output().unwrap(); // --out is required
    assert_eq!(missing_arg.status.code(), Some(1));

    let bad_value = bin().args(["train", "--data", "x", "--epochs", "many"]).output().unwrap();
    assert_eq!(bad_value.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();

    let missing_data = bin()
        .args(["train", "--data"])
        .arg(tmp.path().join("nope"))
        .output()
        .unwrap();
    assert_eq!(missing_data.status.code(), Some(2));
    assert!(stderr_of(&missing_data).starts_with("error:"));

    // Config files with unknown keys are rejected, not silently ignored.
    let data = tmp.path().join("data");
    tiny_dataset(&data);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 1, "bogus_knob": 3}"#).unwrap();
    let bad_cfg = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(bad_cfg.status.code(), Some(2));
    assert!(stderr_of(&bad_cfg).contains("bogus_knob"));
}

#[test]
fn sbm_writes_the_four_dataset_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = run_ok(bin().args(["sbm", "--seed", "5", "--per-block", "10", "--out"]).arg(&data));
    assert!(stdout_of(&out).contains("40 nodes"));
    for file in ["edges.tsv", "features.csv", "labels.tsv", "split.json"] {
        assert!(data.join(file).is_file(), "missing {file}");
    }
    let labels = fs::read_to_string(data.join("labels.tsv")).unwrap();
    assert_eq!(line_count(&labels), 40);
}

#[test]
fn embed_caches_and_respects_force() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);

    let first = run_ok(bin().args(["embed", "--data"]).arg(&data));
    assert!(stdout_of(&first).contains("36 nodes x 128 dims"));
    let cache = data.join("x_s.csv");
    let bytes = fs::read(&cache).unwrap();
    assert_eq!(line_count(std::str::from_utf8(&bytes).unwrap()), 36);

    // A second embed refuses to clobber the cache unless forced.
    let refuse = bin().args(["embed", "--data"]).arg(&data).output().unwrap();
    assert_eq!(refuse.status.code(), Some(2));
    assert!(stderr_of(&refuse).contains("--force"));

    run_ok(bin().args(["embed", "--force", "--data"]).arg(&data));
    assert_eq!(fs::read(&cache).unwrap(), bytes, "same seed must rebuild the same cache");
}

#[test]
fn train_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);
    run_ok(bin().args(["embed", "--data"]).arg(&data));

    let run_dir = tmp.path().join("run");
    let train = run_ok(
        bin().args(["train", "--seed", "11"]).args(FAST).arg("--data").arg(&data).arg("--out").arg(&run_dir),
    );
    let train_out = stdout_of(&train);
    assert!(train_out.contains("test accuracy:"), "train output:\n{train_out}");

    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(line_count(&metrics), 3, "header + 2 epochs:\n{metrics}");
    assert!(metrics.starts_with("epoch,disc_loss,gen_loss,reg_loss,ecl_loss,class_loss,total_loss,val_accuracy,test_accuracy"));

    let predictions = fs::read_to_string(run_dir.join("predictions.tsv")).unwrap();
    assert_eq!(line_count(&predictions), 36);
    for line in predictions.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3, "bad prediction line: {line}");
        let prob: f64 = fields[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&prob));
    }

    for line in fs::read_to_string(run_dir.join("refined_edges.tsv")).unwrap().lines() {
        assert_eq!(line.split('\t').count(), 3, "bad refined edge line: {line}");
    }

    // Evaluating the checkpoint on the same data reproduces the exports.
    let eval_dir = tmp.path().join("eval");
    let eval = run_ok(
        bin().args(["eval", "--data"])
            .arg(&data)
            .arg("--checkpoint")
            .arg(run_dir.join("model.json"))
            .arg("--out")
            .arg(&eval_dir),
    );
    assert!(stdout_of(&eval).contains("test accuracy:"));
    assert_eq!(
        fs::read(run_dir.join("predictions.tsv")).unwrap(),
        fs::read(eval_dir.join("predictions.tsv")).unwrap(),
        "eval must reproduce the training-run predictions byte for byte"
    );
}

#[test]
fn perturb_adds_edges_and_keeps_everything_else() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);

    let pert = tmp.path().join("pert");
    let out = run_ok(
        bin().args(["perturb", "--add", "0.5", "--seed", "9", "--data"]).arg(&data).arg("--out").arg(&pert),
    );
    assert!(stdout_of(&out).contains("edges"));

    let before = line_count(&fs::read_to_string(data.join("edges.tsv")).unwrap());
    let after = line_count(&fs::read_to_string(pert.join("edges.tsv")).unwrap());
    assert_eq!(after, before + before / 2, "50% more edges, rounded down");
    for unchanged in ["features.csv", "labels.tsv", "split.json"] {
        assert_eq!(
            fs::read(data.join(unchanged)).unwrap(),
            fs::read(pert.join(unchanged)).unwrap(),
            "{unchanged} should be untouched"
        );
    }
}

#[test]
fn heatmap_writes_pgm_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);
    run_ok(bin().args(["embed", "--data"]).arg(&data));
    let run_dir = tmp.path().join("run");
    run_ok(bin().args(["train", "--seed", "11"]).args(FAST).arg("--data").arg(&data).arg("--out").arg(&run_dir));

    let prefix = tmp.path().join("heat");
    let out = run_ok(
        bin().args(["heatmap", "--data"])
            .arg(&data)
            .arg("--checkpoint")
            .arg(run_dir.join("model.json"))
            .arg("--out-prefix")
            .arg(&prefix),
    );
    assert!(stdout_of(&out).contains("mean weight: intra-class"));

    let pgm = fs::read(prefix.with_extension("pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n36 36\n255\n"), "bad PGM header");
    assert_eq!(pgm.len(), b"P5\n36 36\n255\n".len() + 36 * 36);

    let csv = fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert_eq!(line_count(&csv), 36);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 36);
}

#[test]
fn config_file_fields_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);
    run_ok(bin().args(["embed", "--data"]).arg(&data));

    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"epochs": 1, "seed": 9, "batch_pairs": 4, "edges_per_subgraph": 4, "k_steps": 1}"#,
    )
    .unwrap();

    let run_dir = tmp.path().join("run");
    run_ok(
        bin().args(["train", "--epochs", "2", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir),
    );
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(line_count(&metrics), 3, "flag --epochs 2 must override the config's 1");
}

#[test]
fn sgld_sweep_emits_csv_to_stdout_and_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_dataset(&data);
    run_ok(bin().args(["embed", "--data"]).arg(&data));

    let out_csv = tmp.path().join("sweep.csv");
    let out = run_ok(
        bin().args(["sweep-sgld", "--k", "0,1", "--seed", "11"])
            .args(FAST)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out_csv),
    );
    let printed = stdout_of(&out);
    assert!(printed.starts_with("k_steps,test_accuracy,train_wall_time_s"));
    assert_eq!(line_count(&printed), 3, "header plus one row per depth:\n{printed}");
    assert_eq!(fs::read_to_string(&out_csv).unwrap(), printed);
}
