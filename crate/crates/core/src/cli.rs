//! Command-line front end.
//!
//! Every subcommand resolves a [`Config`] (defaults, then `--config`, then
//! subcommand flags, then `--set`, then `--seed`), does its work, and
//! leaves its artifacts plus a `manifest.json` and `resolved.conf` in
//! `--out`. Exit codes: 0 on success, 1 for invalid input, 2 when a file
//! cannot be read or written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{default_fit_window, eigenspectrum, geometry_report, linear_probe, power_law_fit};
use crate::config::Config;
use crate::dataset::{content_hash, gen_blobs, Dataset};
use crate::error::{ClampError, Result};
use crate::nn::{load_checkpoint, save_checkpoint, DenseNet};
use crate::randorg::run_density_sweep;
use crate::trainer::{sweep, train_on};

#[derive(Debug, Parser)]
#[command(name = "clamp", version, about = "Manifold-packing self-supervised learning")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.r_s=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder with the packing loss.
    Pretrain {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Random-organization density sweep.
    Simulate,
    /// Eigenspectrum and sub-manifold geometry of a trained backbone.
    Analyze {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Linear probe accuracy of a trained backbone.
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Train and probe once per value of one hyperparameter.
    Sweep {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Write the synthetic blob benchmark (train and test splits).
    GenBlobs,
}

/// Provenance record written next to every run's artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub config: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Git-style SHA-256 blob hashes of the input datasets, by config key.
    pub dataset_hashes: BTreeMap<String, String>,
    pub results: BTreeMap<String, Value>,
}

impl RunManifest {
    fn start(command: &str, cfg: &Config) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            seed: cfg.seed()?,
            started_at: now(),
            finished_at: 0.0,
            config: cfg.entries().clone(),
            artifacts: BTreeMap::new(),
            dataset_hashes: BTreeMap::new(),
            results: BTreeMap::new(),
        })
    }

    fn hash_input(&mut self, key: &str, path: &Path) -> Result<()> {
        self.dataset_hashes.insert(key.to_string(), content_hash(path)?);
        Ok(())
    }

    /// Writes `resolved.conf` and `manifest.json` into `out`.
    fn finish(mut self, cfg: &Config, out: &Path) -> Result<Self> {
        let conf = out.join("resolved.conf");
        std::fs::write(&conf, cfg.to_text()).map_err(|e| ClampError::io(&conf, e))?;
        self.artifacts.insert("resolved_config".into(), conf);
        self.finished_at = now();
        write_json(&out.join("manifest.json"), &self)?;
        Ok(self)
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ClampError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| ClampError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| ClampError::io(path, e))
}

fn write_line<T: Serialize>(w: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .map_err(|e| ClampError::io(path, e))
}

fn flush(w: &mut impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(|e| ClampError::io(path, e))
}

/// Exit status for an error: 2 for unreadable or unwritable files, 1 otherwise.
pub fn exit_code(err: &ClampError) -> i32 {
    match err {
        ClampError::Io { .. } | ClampError::Format { .. } => 2,
        _ => 1,
    }
}

/// Builds the resolved configuration for one invocation.
pub fn resolve(common: &CommonArgs, flags: &[(&str, Option<&Path>)]) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v.to_string_lossy())?;
        }
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn backbone_for(checkpoint: &Path, datasets: &[(&str, &Dataset)]) -> Result<DenseNet> {
    let backbone = load_checkpoint(checkpoint)?.backbone();
    for (what, ds) in datasets {
        if ds.dim() != backbone.input_dim() {
            return Err(ClampError::validation(format!(
                "checkpoint expects inputs of width {}, but the {what} dataset has width {}",
                backbone.input_dim(),
                ds.dim()
            )));
        }
    }
    Ok(backbone)
}

/// Trains an encoder; writes `model.ckpt`, `metrics.jsonl` and the manifest.
pub fn cmd_pretrain(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let data_path = cfg.require_path("data.path", "dataset")?;
    let train_cfg = cfg.train_config()?;
    let dataset = Dataset::read(&data_path)?;
    let mut manifest = RunManifest::start("pretrain", cfg)?;
    manifest.hash_input("data.path", &data_path)?;
    create_dir(out)?;

    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = create(&metrics_path)?;
    let outcome = train_on(&train_cfg, &dataset, |record, _| {
        write_line(&mut metrics, &metrics_path, record)?;
        flush(&mut metrics, &metrics_path)
    })?;
    flush(&mut metrics, &metrics_path)?;

    let ckpt = out.join("model.ckpt");
    save_checkpoint(&outcome.net, &ckpt)?;
    manifest.artifacts.insert("checkpoint".into(), ckpt);
    manifest.artifacts.insert("metrics".into(), metrics_path);
    if let Some(last) = outcome.metrics.last() {
        manifest.results.insert("final_metrics".into(), json!(last));
    }
    manifest.finish(cfg, out)
}

/// Random-organization sweep; writes one JSON line per `(radius, seed)`.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let template = cfg.randorg_config()?;
    let radii: Vec<f64> = cfg.list("randorg.radii")?;
    let seeds = cfg.randorg_seeds()?;
    let result = run_density_sweep(&template, &radii, &seeds)?;
    let mut manifest = RunManifest::start("simulate", cfg)?;
    create_dir(out)?;

    let rows_path = out.join("sweep.jsonl");
    let mut w = create(&rows_path)?;
    for row in &result.rows {
        write_line(&mut w, &rows_path, row)?;
    }
    flush(&mut w, &rows_path)?;
    let summary_path = out.join("sweep_summary.json");
    write_json(&summary_path, &result.by_radius())?;
    manifest.artifacts.insert("sweep".into(), rows_path);
    manifest.artifacts.insert("summary".into(), summary_path);
    manifest.finish(cfg, out)
}

/// Writes `geometry.json`, `spectrum.csv` and `spectrum_fit.json`.
pub fn cmd_analyze(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let ckpt = cfg.require_path("model.checkpoint", "checkpoint")?;
    let data_path = cfg.require_path("data.path", "dataset")?;
    let opts = cfg.geometry_options()?;
    let window = cfg.fit_window()?;
    let dataset = Dataset::read(&data_path)?;
    let backbone = backbone_for(&ckpt, &[("analysis", &dataset)])?;
    let mut manifest = RunManifest::start("analyze", cfg)?;
    manifest.hash_input("data.path", &data_path)?;

    let reprs = backbone.represent(&dataset.features())?;
    let eigs = eigenspectrum(&reprs)?;
    let (lo, hi) = window.unwrap_or_else(|| default_fit_window(&eigs));
    let fit = power_law_fit(&eigs, lo, hi)?;
    let report = geometry_report(&dataset, |views| backbone.represent(views), &opts)?;
    create_dir(out)?;

    let geometry_path = out.join("geometry.json");
    write_json(&geometry_path, &report)?;
    let csv_path = out.join("spectrum.csv");
    let mut w = create(&csv_path)?;
    let mut csv = String::from("rank,eigenvalue\n");
    for (k, v) in eigs.iter().enumerate() {
        csv.push_str(&format!("{},{:e}\n", k + 1, v));
    }
    w.write_all(csv.as_bytes()).map_err(|e| ClampError::io(&csv_path, e))?;
    flush(&mut w, &csv_path)?;
    let fit_path = out.join("spectrum_fit.json");
    write_json(&fit_path, &fit)?;

    manifest.results.insert("exponent".into(), json!(fit.exponent));
    manifest.artifacts.insert("geometry".into(), geometry_path);
    manifest.artifacts.insert("spectrum".into(), csv_path);
    manifest.artifacts.insert("spectrum_fit".into(), fit_path);
    manifest.finish(cfg, out)
}

/// Linear probe on frozen backbone representations. Returns the manifest
/// and the top-1 test accuracy.
pub fn cmd_probe(cfg: &Config, out: &Path) -> Result<(RunManifest, f64)> {
    let ckpt = cfg.require_path("model.checkpoint", "checkpoint")?;
    let train_path = cfg.require_path("data.path", "training dataset")?;
    let test_path = cfg.require_path("data.test_path", "test dataset")?;
    let probe = cfg.probe_config()?;
    let train_set = Dataset::read(&train_path)?;
    let test_set = Dataset::read(&test_path)?;
    if train_set.num_classes() != test_set.num_classes() {
        return Err(ClampError::validation(format!(
            "label spaces differ: training set has {} classes, test set {}",
            train_set.num_classes(),
            test_set.num_classes()
        )));
    }
    let backbone = backbone_for(&ckpt, &[("training", &train_set), ("test", &test_set)])?;
    let mut manifest = RunManifest::start("probe", cfg)?;
    manifest.hash_input("data.path", &train_path)?;
    manifest.hash_input("data.test_path", &test_path)?;

    let train_x = backbone.represent(&train_set.features())?;
    let test_x = backbone.represent(&test_set.features())?;
    let accuracy = linear_probe(&train_x, train_set.labels(), &test_x, test_set.labels(), &probe)?;
    create_dir(out)?;
    manifest.results.insert("accuracy".into(), json!(accuracy));
    Ok((manifest.finish(cfg, out)?, accuracy))
}

/// One training run and probe per `sweep.values` entry.
pub fn cmd_sweep(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let train_path = cfg.require_path("data.path", "training dataset")?;
    let test_path = cfg.require_path("data.test_path", "test dataset")?;
    let template = cfg.train_config()?;
    let axis = cfg.sweep_axis()?;
    let values: Vec<f64> = cfg.list("sweep.values")?;
    let probe = cfg.probe_config()?;
    let train_set = Dataset::read(&train_path)?;
    let test_set = Dataset::read(&test_path)?;
    let mut manifest = RunManifest::start("sweep", cfg)?;
    manifest.hash_input("data.path", &train_path)?;
    manifest.hash_input("data.test_path", &test_path)?;

    let results = sweep(&template, axis, &values, &train_set, &test_set, &probe)?;
    create_dir(out)?;
    let path = out.join("sweep.jsonl");
    let mut w = create(&path)?;
    for r in &results {
        write_line(&mut w, &path, r)?;
    }
    flush(&mut w, &path)?;
    manifest.artifacts.insert("sweep".into(), path);
    manifest.finish(cfg, out)
}

/// Writes `blobs_train.clmp` and `blobs_test.clmp`.
pub fn cmd_gen_blobs(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let (train_spec, test_spec) = cfg.blob_specs()?;
    let train = gen_blobs(&train_spec, 0)?;
    let test = gen_blobs(&test_spec, 1)?;
    let mut manifest = RunManifest::start("gen-blobs", cfg)?;
    create_dir(out)?;
    for (name, ds) in [("blobs_train", &train), ("blobs_test", &test)] {
        let path = out.join(format!("{name}.clmp"));
        ds.write(&path)?;
        manifest.dataset_hashes.insert(name.into(), content_hash(&path)?);
        manifest.artifacts.insert(name.into(), path);
    }
    manifest.finish(cfg, out)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_path();
    match &cli.command {
        Command::Pretrain { data } => {
            let cfg = resolve(common, &[("data.path", data.as_deref())])?;
            cmd_pretrain(&cfg, out)?;
        }
        Command::Simulate => {
            cmd_simulate(&resolve(common, &[])?, out)?;
        }
        Command::Analyze { checkpoint, data } => {
            let cfg = resolve(
                common,
                &[("model.checkpoint", checkpoint.as_deref()), ("data.path", data.as_deref())],
            )?;
            cmd_analyze(&cfg, out)?;
        }
        Command::Probe { checkpoint, train, test } => {
            let cfg = resolve(
                common,
                &[
                    ("model.checkpoint", checkpoint.as_deref()),
                    ("data.path", train.as_deref()),
                    ("data.test_path", test.as_deref()),
                ],
            )?;
            let (_, accuracy) = cmd_probe(&cfg, out)?;
            println!("accuracy={accuracy}");
        }
        Command::Sweep { train, test } => {
            let cfg =
                resolve(common, &[("data.path", train.as_deref()), ("data.test_path", test.as_deref())])?;
            cmd_sweep(&cfg, out)?;
        }
        Command::GenBlobs => {
            cmd_gen_blobs(&resolve(common, &[])?, out)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
