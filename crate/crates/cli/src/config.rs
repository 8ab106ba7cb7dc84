//! Flat `key = value` run configuration.
//!
//! Layers, lowest precedence first: built-in defaults, the config file,
//! `HEMI_SEED`, then command-line flags. Relative paths in a config file are
//! resolved against the file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hemi::dataset::DatasetPaths;
use hemi::eval::{MaskFractions, ProbeConfig, SplitSpec};
use hemi::model::HemiConfig;
use hemi::synthetic::SyntheticSpec;

/// Bad configuration or usage; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

const PATH_KEYS: &[&str] = &[
    "data_dir",
    "nodes",
    "relations",
    "edges",
    "features",
    "labels",
    "out_dir",
    "checkpoint",
    "embeddings",
];

const OTHER_KEYS: &[&str] = &[
    "target",
    "metapaths",
    "dim",
    "attn_dim",
    "lambda",
    "seed",
    "epochs",
    "patience",
    "lr",
    "layers",
    "shared_encoder",
    "shared_discriminators",
    "share_corruption",
    "clip_norm",
    "prelu_init",
    "task",
    "hemi_weight",
    "train_frac",
    "val_frac",
    "test_frac",
    "probe_lr",
    "probe_epochs",
    "probe_patience",
    "probe_repeats",
    "clusters",
    "cluster_runs",
    "mask_test",
    "mask_val",
    "blocks",
    "papers_per_block",
];

fn known(key: &str) -> bool {
    PATH_KEYS.contains(&key) || OTHER_KEYS.contains(&key)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    LinkPrediction,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses config text. `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("config line {}: expected `key = value`", i + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if !known(k) {
                return err(format!("config line {}: unknown key `{k}`", i + 1));
            }
            let v = if PATH_KEYS.contains(&k) {
                base.join(v).to_string_lossy().into_owned()
            } else {
                v.to_string()
            };
            config.values.insert(k.to_string(), v);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("reading config {}: {e}", path.display())))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return err(format!("unknown key `{key}`"));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v),
            None => err(format!("expected key=value, got `{pair}`")),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => err(format!("`{key}`: expected true or false, got `{v}`")),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out_dir").unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.path("checkpoint").unwrap_or_else(|| self.out_dir().join("checkpoint"))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.path("embeddings").unwrap_or_else(|| self.out_dir().join("embeddings.bin"))
    }

    pub fn target(&self) -> Result<String> {
        match self.get("target") {
            Some(t) if !t.is_empty() => Ok(t.to_string()),
            _ => err("`target` (the target node type) is not set"),
        }
    }

    pub fn metapaths(&self) -> Result<Vec<String>> {
        let list: Vec<String> = self
            .get("metapaths")
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if list.is_empty() {
            return err("`metapaths` is empty");
        }
        Ok(list)
    }

    /// Dataset files: explicit keys win over the `data_dir` layout.
    pub fn dataset_paths(&self) -> Result<DatasetPaths> {
        let mut paths = match self.path("data_dir") {
            Some(dir) => DatasetPaths::in_dir(&dir),
            None => {
                let need = |k: &str| {
                    self.path(k).ok_or_else(|| {
                        ConfigError(format!("neither `data_dir` nor `{k}` is set"))
                    })
                };
                DatasetPaths {
                    nodes: need("nodes")?,
                    relations: need("relations")?,
                    edges: need("edges")?,
                    features: None,
                    labels: None,
                }
            }
        };
        if let Some(p) = self.path("nodes") {
            paths.nodes = p;
        }
        if let Some(p) = self.path("relations") {
            paths.relations = p;
        }
        if let Some(p) = self.path("edges") {
            paths.edges = p;
        }
        if let Some(p) = self.path("features") {
            paths.features = Some(p);
        }
        if let Some(p) = self.path("labels") {
            paths.labels = Some(p);
        }
        for p in [&paths.nodes, &paths.relations, &paths.edges]
            .into_iter()
            .chain(paths.features.iter())
            .chain(paths.labels.iter())
        {
            if !p.is_file() {
                return err(format!("missing input file {}", p.display()));
            }
        }
        Ok(paths)
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed", 0)
    }

    pub fn hemi(&self) -> Result<HemiConfig> {
        self.hemi_for(false)
    }

    /// Model settings; `link` selects the link-prediction defaults.
    pub fn hemi_for(&self, link: bool) -> Result<HemiConfig> {
        let base = if link {
            HemiConfig::for_link_prediction()
        } else {
            HemiConfig::default()
        };
        let clip_norm = match self.get("clip_norm") {
            None => base.clip_norm,
            Some("none" | "off") => None,
            Some(_) => Some(self.parsed("clip_norm", 0.0)?),
        };
        let config = HemiConfig {
            dim: self.parsed("dim", base.dim)?,
            attn_dim: self.parsed("attn_dim", base.attn_dim)?,
            lambda: self.parsed("lambda", base.lambda)?,
            seed: self.seed()?,
            epochs: self.parsed("epochs", base.epochs)?,
            patience: self.parsed("patience", base.patience)?,
            lr: self.parsed("lr", base.lr)?,
            layers: self.parsed("layers", base.layers)?,
            shared_encoder: self.flag("shared_encoder", base.shared_encoder)?,
            shared_discriminators: self.flag("shared_discriminators", base.shared_discriminators)?,
            share_corruption: self.flag("share_corruption", base.share_corruption)?,
            clip_norm,
            prelu_init: self.parsed("prelu_init", base.prelu_init)?,
        };
        config.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(config)
    }

    pub fn task(&self) -> Result<Task> {
        match self.get("task").unwrap_or("nc") {
            "nc" | "classify" => Ok(Task::NodeClassification),
            "lp" | "linkpred" => Ok(Task::LinkPrediction),
            t => err(format!("`task` must be nc or lp, got `{t}`")),
        }
    }

    /// Multiplier on the self-supervised term; `none` trains the task alone.
    pub fn hemi_weight(&self) -> Result<Option<f64>> {
        match self.get("hemi_weight") {
            Some("none" | "off") => Ok(None),
            _ => Ok(Some(self.parsed("hemi_weight", 1.0)?)),
        }
    }

    pub fn split(&self) -> Result<SplitSpec> {
        let d = SplitSpec::default();
        Ok(SplitSpec {
            train: self.parsed("train_frac", d.train)?,
            val: self.parsed("val_frac", d.val)?,
            test: self.parsed("test_frac", d.test)?,
            seed: self.seed()?,
        })
    }

    pub fn probe(&self) -> Result<ProbeConfig> {
        let d = ProbeConfig::default();
        Ok(ProbeConfig {
            lr: self.parsed("probe_lr", d.lr)?,
            max_epochs: self.parsed("probe_epochs", d.max_epochs)?,
            patience: self.parsed("probe_patience", d.patience)?,
            repeats: self.parsed("probe_repeats", d.repeats)?,
            seed: self.seed()?,
        })
    }

    pub fn clusters(&self) -> Result<Option<usize>> {
        match self.get("clusters") {
            None => Ok(None),
            Some(_) => Ok(Some(self.parsed("clusters", 0)?)),
        }
    }

    pub fn cluster_runs(&self) -> Result<usize> {
        self.parsed("cluster_runs", 10)
    }

    pub fn mask(&self) -> Result<MaskFractions> {
        let d = MaskFractions::default();
        Ok(MaskFractions {
            test: self.parsed("mask_test", d.test)?,
            val: self.parsed("mask_val", d.val)?,
        })
    }

    pub fn synthetic(&self) -> Result<SyntheticSpec> {
        let d = SyntheticSpec::default();
        Ok(SyntheticSpec {
            blocks: self.parsed("blocks", d.blocks)?,
            papers_per_block: self.parsed("papers_per_block", d.papers_per_block)?,
            seed: self.seed()?,
            ..d
        })
    }
}
