//! Experiment configuration files.
//!
//! The format is TOML restricted to `key = value` lines under `[section]`
//! headers:
//!
//! ```toml
//! seed = 0
//! output_dir = "runs"
//!
//! [dataset]
//! source = "mnist"
//! root = "../data/mnist-01"
//! classes = [0, 1]
//! sample_cap = 2000
//!
//! [model]
//! blocks = 8
//! skip = true
//!
//! [train]
//! epochs = 100
//!
//! [metrics]
//! k = 10
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use resalign::data::{DataSource, DatasetSpec};
use resalign::linalg::DEFAULT_ITERATIONS;
use resalign::rametrics::RaOptions;
use resalign::resnet::{ActivationStyle, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceName {
    Mnist,
    FashionMnist,
    Cifar10,
    Cifar100,
    Synthetic,
}

/// Training data is never augmented; the key exists so that every resolved
/// config says so.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: SourceName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Original class ids to keep; their order defines the new labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_cap: Option<usize>,
    // Gaussian mixture parameters, required for `source = "synthetic"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default)]
    pub augmentation: Augmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub width: usize,
    pub blocks: usize,
    pub skip: bool,
    pub activation: String,
    pub stochastic_depth_p: f64,
    pub weight_decay: f64,
    pub branch_init_gain: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let desk = ModelConfig::desk(1, 2);
        Self {
            width: desk.width,
            blocks: desk.blocks,
            skip: desk.skip,
            activation: desk.activation.as_str().to_string(),
            stochastic_depth_p: desk.stochastic_depth_p,
            weight_decay: desk.weight_decay,
            branch_init_gain: desk.branch_init_gain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            momentum: t.momentum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Singular vectors kept per Jacobian.
    pub k: usize,
    /// First 1-based block of the RA4 fit; defaults to ⌈L/3⌉.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_depth: Option<usize>,
    /// Training inputs at which Jacobians are evaluated.
    pub inputs: usize,
    /// Test samples used for the Neural Collapse statistics.
    pub heldout: usize,
    pub svd_iterations: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            k: 10,
            start_depth: None,
            inputs: 1,
            heldout: 512,
            svd_iterations: DEFAULT_ITERATIONS,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path`, which anchors relative paths
    /// and error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map_or(1, |s| line_at(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|(section, key, message)| CliError::Config {
            path: path.to_path_buf(),
            line: key_line(text, section, key),
            message,
        })?;
        // Absolute, so the resolved config reloads the same from anywhere.
        let absolute = std::path::absolute(path).map_err(|e| CliError::file(path, e))?;
        let base = absolute.parent().unwrap_or(Path::new("/"));
        if let Some(root) = &cfg.dataset.root {
            if root.is_relative() {
                cfg.dataset.root = Some(base.join(root));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Semantic checks; failures name the offending `(section, key)`.
    fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let d = &self.dataset;
        if d.source == SourceName::Synthetic {
            for (key, present) in [
                ("mixture_classes", d.mixture_classes.is_some()),
                ("per_class", d.per_class.is_some()),
                ("dim", d.dim.is_some()),
                ("separation", d.separation.is_some()),
            ] {
                if !present {
                    return Err(("dataset", "source", format!("synthetic data needs `{key}`")));
                }
            }
        } else if d.root.is_none() {
            return Err(("dataset", "source", "this source needs `root`".into()));
        }
        if let Err(e) = self.model.activation.parse::<ActivationStyle>() {
            return Err(("model", "activation", e.to_string()));
        }
        if self.model.width == 0 {
            return Err(("model", "width", "width must be at least 1".into()));
        }
        if self.model.blocks == 0 {
            return Err(("model", "blocks", "blocks must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.model.stochastic_depth_p) {
            return Err(("model", "stochastic_depth_p", "stochastic_depth_p must lie in [0, 1)".into()));
        }
        if !(self.model.weight_decay >= 0.0) {
            return Err(("model", "weight_decay", "weight_decay must be non-negative".into()));
        }
        if self.train.epochs == 0 {
            return Err(("train", "epochs", "epochs must be at least 1".into()));
        }
        if self.train.batch_size == 0 {
            return Err(("train", "batch_size", "batch_size must be at least 1".into()));
        }
        if !(self.train.lr0 >= 0.0 && self.train.lr0.is_finite()) {
            return Err(("train", "lr0", "lr0 must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return Err(("train", "momentum", "momentum must lie in [0, 1)".into()));
        }
        if self.metrics.k == 0 {
            return Err(("metrics", "k", "k must be at least 1".into()));
        }
        if self.metrics.inputs == 0 {
            return Err(("metrics", "inputs", "inputs must be at least 1".into()));
        }
        if self.metrics.svd_iterations == 0 {
            return Err(("metrics", "svd_iterations", "svd_iterations must be at least 1".into()));
        }
        if let Some(s) = self.metrics.start_depth {
            if s == 0 || s >= self.model.blocks {
                return Err(("metrics", "start_depth", format!("start_depth must lie in 1..{}", self.model.blocks)));
            }
        }
        if self.metrics.k > self.model.width {
            return Err(("metrics", "k", format!("k exceeds the width {}", self.model.width)));
        }
        Ok(())
    }

    /// Canonical text with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        short_hash(&self.to_toml())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let d = &self.dataset;
        let source = match d.source {
            SourceName::Mnist => DataSource::Mnist,
            SourceName::FashionMnist => DataSource::FashionMnist,
            SourceName::Cifar10 => DataSource::Cifar10,
            SourceName::Cifar100 => DataSource::Cifar100,
            SourceName::Synthetic => DataSource::Synthetic {
                classes: d.mixture_classes.unwrap_or(0),
                per_class: d.per_class.unwrap_or(0),
                dim: d.dim.unwrap_or(0),
                separation: d.separation.unwrap_or(0.0),
            },
        };
        DatasetSpec {
            source,
            root: d.root.clone(),
            class_subset: d.classes.clone(),
            sample_cap: d.sample_cap,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, input_dim: usize, classes: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            input_dim,
            width: m.width,
            blocks: m.blocks,
            classes,
            skip: m.skip,
            activation: m.activation.parse().expect("validated"),
            stochastic_depth_p: m.stochastic_depth_p,
            weight_decay: m.weight_decay,
            branch_init_gain: m.branch_init_gain,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr0: self.train.lr0,
            momentum: self.train.momentum,
            seed: self.seed,
        }
    }

    pub fn ra_options(&self) -> RaOptions {
        RaOptions {
            k: self.metrics.k,
            start_depth: self.metrics.start_depth,
            svd_iterations: self.metrics.svd_iterations,
            seed: self.seed,
        }
    }
}

/// First 12 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..6].iter().map(|b| format!("{b:02x}")).collect()
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, or of the section header when the key
/// is absent, or 1.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
        } else if current == section && line.split('=').next().map(str::trim) == Some(key) {
            return i + 1;
        }
    }
    header.unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n\n[dataset]\nsource = \"synthetic\"\nmixture_classes = 2\nper_class = 10\ndim = 4\nseparation = 5.0\n";

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(MINIMAL, Path::new("exp/a.toml")).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model, ModelSection::default());
        assert_eq!(cfg.output_dir, std::env::current_dir().unwrap().join("exp/runs"));
        assert_eq!(cfg.metrics.k, 10);
    }

    #[test]
    fn canonical_text_reparses_to_the_same_config() {
        let cfg = ExperimentConfig::parse(MINIMAL, Path::new("a.toml")).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml(), Path::new("a.toml")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 12);
        assert!(cfg.to_toml().contains("augmentation = \"none\""));
        let augmented = MINIMAL.replace("[dataset]", "[dataset]\naugmentation = \"flip\"");
        assert!(ExperimentConfig::parse(&augmented, Path::new("a.toml")).is_err());
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = format!("{MINIMAL}\n[model]\nblocks = eight\n");
        match ExperimentConfig::parse(&text, Path::new("x.toml")) {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
        let text = format!("{MINIMAL}[train]\nepochz = 3\n");
        match ExperimentConfig::parse(&text, Path::new("x.toml")) {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 10);
                assert!(message.contains("epochz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = format!("{MINIMAL}[metrics]\ninputs = 2\nk = 0\n");
        match ExperimentConfig::parse(&text, Path::new("x.toml")) {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 11);
                assert!(message.contains("k must be"));
            }
            other => panic!("{other:?}"),
        }
        let text = "[dataset]\nsource = \"mnist\"\n";
        match ExperimentConfig::parse(text, Path::new("x.toml")) {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
