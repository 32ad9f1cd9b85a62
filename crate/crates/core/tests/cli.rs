//! Drives the `clamp` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clamp::dataset::{gen_blobs, BlobSpec, Dataset};
use serde_json::Value;

const SMALL: &[&str] = &[
    "--set",
    "blobs.classes=3",
    "--set",
    "blobs.per_class=40",
    "--set",
    "blobs.test_per_class=20",
    "--set",
    "blobs.dim=8",
    "--set",
    "train.b=16",
    "--set",
    "train.epochs=2",
    "--set",
    "train.warmup_steps=2",
    "--set",
    "train.val_fraction=0.1",
    "--set",
    "model.backbone=12, 6",
    "--set",
    "model.head=6, 4",
    "--set",
    "analyze.samples_per_repeat=20",
    "--set",
    "analyze.augmentations=4",
    "--set",
    "analyze.repeats=1",
    "--set",
    "probe.epochs=100",
];

fn clamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clamp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn clamp_small(sub: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    clamp(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates the small blob benchmark and pretrains on it.
fn pretrained(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    pretrained_with(dir, &[])
}

fn pretrained_with(dir: &Path, blob_flags: &[&str]) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    let o = clamp_small("gen-blobs", &data, blob_flags);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = data.join("blobs_train.clmp");
    let test = data.join("blobs_test.clmp");
    let run = dir.join("run");
    let o = clamp_small("pretrain", &run, &["--data", train.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    (train, test, run.join("model.ckpt"))
}

#[test]
fn pretrain_without_dataset_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = clamp(&["pretrain", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset"), "{}", stderr(&o));
}

#[test]
fn unreadable_dataset_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.clmp");
    let o = clamp(&["pretrain", "--data", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.clmp"));
}

#[test]
fn bad_config_key_exits_one_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = clamp(&["simulate", "--set", "randorg.bogus=1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("randorg.bogus"));
    let o = clamp(&["simulate", "--set", "randorg.dim=three", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("randorg.dim"));
}

#[test]
fn gen_blobs_is_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(clamp_small("gen-blobs", &a, &[]).status.success());
    assert!(clamp_small("gen-blobs", &b, &[]).status.success());
    for name in ["blobs_train.clmp", "blobs_test.clmp"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
    let manifest = read_json(&a.join("manifest.json"));
    let hash = manifest["dataset_hashes"]["blobs_train"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let ds = Dataset::read(&a.join("blobs_train.clmp")).unwrap();
    let spec = BlobSpec { classes: 3, per_class: 40, dim: 8, separation: 8.0, seed: 0 };
    assert_eq!(ds.raw(), gen_blobs(&spec, 0).unwrap().raw());
}

#[test]
fn pretrain_writes_one_metrics_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _, ckpt) = pretrained(dir.path());
    let run = ckpt.parent().unwrap();
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let lines: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 2);
    assert!(ckpt.exists());

    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "pretrain");
    assert_eq!(manifest["config"]["train.epochs"], "2");
    for path in manifest["artifacts"].as_object().unwrap().values() {
        assert!(Path::new(path.as_str().unwrap()).exists(), "{path}");
    }
    let hash = clamp::dataset::content_hash(&train).unwrap();
    assert_eq!(manifest["dataset_hashes"]["data.path"], hash.as_str());

    // The resolved config alone reproduces the metrics.
    let rerun = dir.path().join("rerun");
    let o = clamp(&[
        "pretrain",
        "--config",
        run.join("resolved.conf").to_str().unwrap(),
        "--out",
        rerun.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = std::fs::read_to_string(rerun.join("metrics.jsonl")).unwrap();
    let strip = |s: &str| -> Vec<Value> {
        s.lines()
            .map(|l| {
                let mut v: Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_seconds");
                v
            })
            .collect()
    };
    assert_eq!(strip(&metrics), strip(&again));
}

#[test]
fn zero_epochs_gives_empty_metrics_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(clamp_small("gen-blobs", &data, &[]).status.success());
    let run = dir.path().join("run");
    let o = clamp_small(
        "pretrain",
        &run,
        &["--data", data.join("blobs_train.clmp").to_str().unwrap(), "--set", "train.epochs=0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(run.join("metrics.jsonl")).unwrap(), "");
    assert!(run.join("manifest.json").exists());
    assert!(run.join("model.ckpt").exists());
}

#[test]
fn simulate_zero_radius_absorbs_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = clamp(&[
        "simulate",
        "--set",
        "randorg.radii=0",
        "--set",
        "randorg.seed_count=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = std::fs::read_to_string(out.join("sweep.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["steps_to_absorb"] == 0));
    assert!(out.join("sweep_summary.json").exists());
}

#[test]
fn simulate_writes_one_line_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = clamp(&[
        "simulate",
        "--set",
        "randorg.radii=0.02, 0.05",
        "--set",
        "randorg.seed_count=4",
        "--set",
        "randorg.particles=16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("sweep.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn simulate_empty_radius_list_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = clamp(&["simulate", "--set", "randorg.radii=", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_writes_parsable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, ckpt) = pretrained(dir.path());
    let out = dir.path().join("analysis");
    let o = clamp_small(
        "analyze",
        &out,
        &["--checkpoint", ckpt.to_str().unwrap(), "--data", test.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let geometry = read_json(&out.join("geometry.json"));
    assert!(geometry["centroid_distance_hist"]["intra"]["mass"].is_array());
    let fit = read_json(&out.join("spectrum_fit.json"));
    assert!(fit["exponent"].is_number());
    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rank,eigenvalue"));
    let rows: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn analyze_rejects_width_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, ckpt) = pretrained(dir.path());
    let narrow = dir.path().join("narrow");
    assert!(clamp_small("gen-blobs", &narrow, &["--set", "blobs.dim=5"]).status.success());
    let o = clamp_small(
        "analyze",
        &dir.path().join("a"),
        &["--checkpoint", ckpt.to_str().unwrap(), "--data", narrow.join("blobs_test.clmp").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains('8') && msg.contains('5'), "{msg}");
}

fn probe(dir: &Path, ckpt: &Path, train: &Path, test: &Path, out: &str) -> Output {
    clamp_small(
        "probe",
        &dir.join(out),
        &[
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
        ],
    )
}

#[test]
fn probe_prints_accuracy_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    // Blobs this far apart are linearly separable.
    let (train, test, ckpt) = pretrained_with(dir.path(), &["--set", "blobs.separation=40"]);
    let a = probe(dir.path(), &ckpt, &train, &test, "p1");
    let b = probe(dir.path(), &ckpt, &train, &test, "p2");
    assert!(a.status.success(), "{}", stderr(&a));
    let line = stdout(&a);
    assert!(line.starts_with("accuracy="), "{line}");
    assert_eq!(line, stdout(&b));
    let acc: f64 = line.trim().trim_start_matches("accuracy=").parse().unwrap();
    assert_eq!(acc, 1.0);
    let manifest = read_json(&dir.path().join("p1").join("manifest.json"));
    assert_eq!(manifest["results"]["accuracy"], acc);
}

#[test]
fn probe_rejects_mismatched_label_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _, ckpt) = pretrained(dir.path());
    let other = dir.path().join("other");
    assert!(clamp_small("gen-blobs", &other, &["--set", "blobs.classes=4"]).status.success());
    let o = probe(dir.path(), &ckpt, &train, &other.join("blobs_test.clmp"), "p");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("label"));
}

#[test]
fn sweep_writes_one_line_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(clamp_small("gen-blobs", &data, &[]).status.success());
    let out = dir.path().join("sweep");
    let o = clamp_small(
        "sweep",
        &out,
        &[
            "--train",
            data.join("blobs_train.clmp").to_str().unwrap(),
            "--test",
            data.join("blobs_test.clmp").to_str().unwrap(),
            "--set",
            "sweep.axis=m",
            "--set",
            "sweep.values=2, 4",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = std::fs::read_to_string(out.join("sweep.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["value"], 4.0);
    assert!(rows.iter().all(|r| r["probe_accuracy"].as_f64().unwrap() > 0.5));
}

#[test]
fn help_succeeds_and_unknown_subcommand_fails() {
    assert!(clamp(&["--help"]).status.success());
    assert_eq!(clamp(&["frobnicate"]).status.code(), Some(1));
}
