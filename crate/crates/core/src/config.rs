//! Layered run configuration: built-in defaults, then a TOML file, then
//! `key=value` overrides. Unknown keys are rejected at every layer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterTap;
use crate::avsbench_io::Layout;
use crate::encoders::{BackendConfig, BackendKind};
use crate::error::{Error, Result};
use crate::fusion::PromptSource;
use crate::metrics::{DEFAULT_BETA2, DEFAULT_THRESHOLD};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Shared projection width.
    pub d_s: usize,
    /// MLP hidden width; `d_s` when unset.
    pub d_h: Option<usize>,
    pub activation: Activation,
    /// Backbone layers that receive adapters; all layers when unset.
    pub adapter_layers: Option<Vec<usize>>,
    pub adapter_tap: AdapterTap,
    /// Hidden channels of the mask decoder head.
    pub decoder_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_s: 8,
            d_h: None,
            activation: Activation::Gelu,
            adapter_layers: None,
            adapter_tap: AdapterTap::Fused,
            decoder_hidden: 8,
        }
    }
}

impl ModelConfig {
    pub fn d_h(&self) -> usize {
        self.d_h.unwrap_or(self.d_s)
    }
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Square side frames are resized to; 64 for the stub suite and 1024 for
    /// the pretrained suite when unset.
    pub input_resolution: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub prompt_source: PromptSource,
    pub adapter_enabled: bool,
    /// Fine-tune the mask decoder head. The backbone trunk is always frozen.
    pub train_decoder: bool,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    /// Write a checkpoint every this many epochs (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 2,
            input_resolution: None,
            optimizer: OptimizerConfig::default(),
            prompt_source: PromptSource::Fused,
            adapter_enabled: true,
            train_decoder: true,
            max_steps: None,
            checkpoint_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
    pub beta2: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            beta2: DEFAULT_BETA2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Flag vision bias when the vision-only arm is within this many M_J
    /// points of the fused arm.
    pub vision_bias_margin: f64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            vision_bias_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub layout: Layout,
    pub sample_rate: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            layout: Layout::default(),
            sample_rate: 16_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: BackendConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub data: DataConfig,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of an override as a TOML literal, falling back
/// to a bare string.
fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults < `file` < `overrides` (each `key=value`, dotted keys).
    pub fn layered(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default())
            .map_err(|e| Error::Config(format!("serializing defaults: {e}")))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::MissingInput(path.to_path_buf())
                } else {
                    Error::io(path, e)
                }
            })?;
            let parsed: toml::Table = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, parsed);
            Self::from_table(table.clone())
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let key = key.trim();
            let mut trial = table.clone();
            set_path(&mut trial, key, parse_literal(raw.trim()))?;
            Self::from_table(trial.clone())
                .map_err(|e| Error::Config(format!("override {key}: {e}")))?;
            table = trial;
        }
        let cfg = Self::from_table(table).map_err(Error::Config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_table(table: toml::Table) -> std::result::Result<Self, String> {
        RunConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| e.to_string().trim().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn input_resolution(&self) -> usize {
        self.train
            .input_resolution
            .unwrap_or(match self.backend.kind {
                BackendKind::Stub => 64,
                BackendKind::Pretrained => 1024,
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.train.epochs == 0 {
            return bad("train.epochs must be positive");
        }
        if self.train.batch_size == 0 {
            return bad("train.batch_size must be positive");
        }
        if self.input_resolution() == 0 {
            return bad("train.input_resolution must be positive");
        }
        if self.model.d_s == 0 || self.model.d_h() == 0 || self.model.decoder_hidden == 0 {
            return bad("model widths must be positive");
        }
        let o = &self.train.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad("train.optimizer.learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer betas must lie in [0, 1)");
        }
        if o.eps.is_nan() || o.eps <= 0.0 || o.weight_decay.is_nan() || o.weight_decay < 0.0 {
            return bad("optimizer eps must be positive and weight_decay nonnegative");
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return bad("eval.threshold must lie in [0, 1]");
        }
        if self.eval.beta2.is_nan() || self.eval.beta2 < 0.0 {
            return bad("eval.beta2 must be nonnegative");
        }
        if self.data.sample_rate == 0 {
            return bad("data.sample_rate must be positive");
        }
        Ok(())
    }
}
