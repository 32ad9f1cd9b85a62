//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! train.r_s = 3.0
//! model.backbone = 64, 32
//! ```
//!
//! Every key has a default, so the resolved set is always complete. Unknown
//! keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{GeometryOptions, ProbeConfig};
use crate::dataset::BlobSpec;
use crate::error::{ClampError, Result};
use crate::nn::OptimizerKind;
use crate::randorg::RandOrgConfig;
use crate::trainer::{AugmentConfig, ModelConfig, SweepAxis, TrainConfig};

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.path", ""),
    ("data.test_path", ""),
    ("model.checkpoint", ""),
    ("model.backbone", "64, 32"),
    ("model.head", "32, 16"),
    ("train.b", "64"),
    ("train.m", "4"),
    ("train.r_s", "3.0"),
    ("train.epochs", "30"),
    ("train.warmup_steps", "90"),
    ("train.base_lr", "0.005"),
    ("train.momentum", "0.9"),
    ("train.weight_decay", "1e-6"),
    ("train.trust_coefficient", "0.001"),
    ("train.optimizer", "lars"),
    ("train.val_fraction", "0.01"),
    ("train.aug.noise_sigma", "0.05"),
    ("train.aug.dropout", "0.02"),
    ("train.aug.scale_min", "0.5"),
    ("train.aug.scale_max", "1.5"),
    ("randorg.particles", "64"),
    ("randorg.dim", "3"),
    ("randorg.kick_amplitude", "0.05"),
    ("randorg.reciprocal", "false"),
    ("randorg.max_steps", "50000"),
    ("randorg.radii", "0.05, 0.1, 0.15, 0.2, 0.25, 0.3"),
    ("randorg.seed_count", "20"),
    ("analyze.augmentations", "32"),
    ("analyze.samples_per_repeat", "200"),
    ("analyze.repeats", "3"),
    ("analyze.fit_min", "0"),
    ("analyze.fit_max", "0"),
    ("probe.epochs", "300"),
    ("probe.lr", "1.0"),
    ("probe.l2", "0.0"),
    ("sweep.axis", "r_s"),
    ("sweep.values", "1.0, 2.0, 3.0"),
    ("blobs.classes", "10"),
    ("blobs.per_class", "200"),
    ("blobs.test_per_class", "100"),
    ("blobs.dim", "32"),
    ("blobs.separation", "8.0"),
];

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Config {
    /// Defaults overlaid with the assignments in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ClampError::validation(format!("config line {}: expected `key = value`", no + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ClampError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(ClampError::validation(format!("unknown config key {key:?}"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ClampError::validation(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("{key} is not a known config key"))
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse().map_err(|e| ClampError::validation(format!("{key} = {raw:?}: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ClampError::validation(format!("{key}: entry {s:?}: {e}"))))
            .collect()
    }

    /// `None` when the key is empty.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.get(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn require_path(&self, key: &str, what: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| ClampError::validation(format!("{key}: no {what} path given")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed")
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.parsed("train.b")?,
            views: self.parsed("train.m")?,
            r_s: self.parsed("train.r_s")?,
            epochs: self.parsed("train.epochs")?,
            warmup_steps: self.parsed("train.warmup_steps")?,
            base_lr: self.parsed("train.base_lr")?,
            momentum: self.parsed("train.momentum")?,
            weight_decay: self.parsed("train.weight_decay")?,
            trust_coefficient: self.parsed("train.trust_coefficient")?,
            optimizer: self.parsed::<OptimizerKind>("train.optimizer")?,
            augmentation: AugmentConfig {
                noise_sigma: self.parsed("train.aug.noise_sigma")?,
                dropout: self.parsed("train.aug.dropout")?,
                scale_min: self.parsed("train.aug.scale_min")?,
                scale_max: self.parsed("train.aug.scale_max")?,
            },
            model: ModelConfig { backbone: self.list("model.backbone")?, head: self.list("model.head")? },
            seed: self.seed()?,
            dataset: self.path("data.path"),
            val_fraction: self.parsed("train.val_fraction")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn randorg_config(&self) -> Result<RandOrgConfig> {
        Ok(RandOrgConfig {
            particles: self.parsed("randorg.particles")?,
            dim: self.parsed("randorg.dim")?,
            radius: 0.0,
            kick_amplitude: self.parsed("randorg.kick_amplitude")?,
            reciprocal: self.parsed("randorg.reciprocal")?,
            max_steps: self.parsed("randorg.max_steps")?,
            seed: self.seed()?,
        })
    }

    /// `seed, seed + 1, …` for `randorg.seed_count` runs.
    pub fn randorg_seeds(&self) -> Result<Vec<u64>> {
        let base = self.seed()?;
        let count: u64 = self.parsed("randorg.seed_count")?;
        Ok((0..count).map(|k| base.wrapping_add(k)).collect())
    }

    pub fn geometry_options(&self) -> Result<GeometryOptions> {
        Ok(GeometryOptions {
            augmentations: self.parsed("analyze.augmentations")?,
            samples_per_repeat: self.parsed("analyze.samples_per_repeat")?,
            repeats: self.parsed("analyze.repeats")?,
            augmentation: self.train_config()?.augmentation,
            seed: self.seed()?,
        })
    }

    /// Explicit fit window, if both ends are set.
    pub fn fit_window(&self) -> Result<Option<(usize, usize)>> {
        let lo: usize = self.parsed("analyze.fit_min")?;
        let hi: usize = self.parsed("analyze.fit_max")?;
        Ok((lo > 0 && hi > 0).then_some((lo, hi)))
    }

    pub fn probe_config(&self) -> Result<ProbeConfig> {
        Ok(ProbeConfig {
            epochs: self.parsed("probe.epochs")?,
            lr: self.parsed("probe.lr")?,
            l2: self.parsed("probe.l2")?,
        })
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        self.parsed("sweep.axis")
    }

    /// Train and test blob specs. They share centers and differ in sample stream.
    pub fn blob_specs(&self) -> Result<(BlobSpec, BlobSpec)> {
        let train = BlobSpec {
            classes: self.parsed("blobs.classes")?,
            per_class: self.parsed("blobs.per_class")?,
            dim: self.parsed("blobs.dim")?,
            separation: self.parsed("blobs.separation")?,
            seed: self.seed()?,
        };
        let test = BlobSpec { per_class: self.parsed("blobs.test_per_class")?, ..train.clone() };
        Ok((train, test))
    }
}
