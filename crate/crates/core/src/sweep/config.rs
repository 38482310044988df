//! Experiment configuration and its file formats.
//!
//! A config file is either JSON (first non-blank character `{`) mirroring
//! [`ExperimentConfig`], or plain `key = value` lines with dotted keys:
//!
//! ```text
//! # comments start with '#'
//! arch.stage_widths = 16,32
//! arch.dense_widths = 64,2
//! train.epochs = 10
//! train.lr_drop_epochs = []
//! data.dir = /data/cifar-10-batches-bin
//! data.classes = 0,1
//! quant.clip = {"lo": 1, "hi": 99}
//! ```
//!
//! Values are read as JSON when they parse as such, as a list when they
//! contain commas, and as a string otherwise. Missing keys keep their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::arch::MacroArchConfig;
use crate::data::{load_cifar10, synthetic_dataset, Dataset, Split, SyntheticSpec};
use crate::error::{config, Result};
use crate::quant::{ClipPercentiles, QuantSimOptions};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory with the CIFAR-10 binary batches; synthetic data when absent.
    pub dir: Option<PathBuf>,
    /// Classes to keep, relabelled in this order.
    pub classes: Option<Vec<u8>>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    /// Halve the image resolution (2x2 average).
    pub downscale: bool,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            classes: None,
            train_per_class: None,
            test_per_class: None,
            downscale: false,
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Where the data of a run came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Cifar10(PathBuf),
    Synthetic,
}

impl DataConfig {
    pub fn load(&self) -> Result<(Dataset, Dataset, DataSource)> {
        let (train, test, source) = match &self.dir {
            Some(dir) => {
                let (a, b) = load_cifar10(dir)?;
                (a, b, DataSource::Cifar10(dir.clone()))
            }
            None => {
                let test_spec = SyntheticSpec {
                    per_class: self.test_per_class.unwrap_or((self.synthetic.per_class / 5).max(1)),
                    ..self.synthetic
                };
                (
                    synthetic_dataset(self.synthetic, Split::Train)?,
                    synthetic_dataset(test_spec, Split::Test)?,
                    DataSource::Synthetic,
                )
            }
        };
        let select = |d: Dataset, per: Option<usize>| -> Result<Dataset> {
            let d = match (&self.classes, per) {
                (Some(c), per) => d.class_subset(c, per)?,
                (None, Some(per)) => {
                    let all: Vec<u8> = (0..d.num_classes() as u8).collect();
                    d.class_subset(&all, Some(per))?
                }
                (None, None) => d,
            };
            if self.downscale {
                d.downscale2x()
            } else {
                Ok(d)
            }
        };
        Ok((select(train, self.train_per_class)?, select(test, self.test_per_class)?, source))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantConfig {
    pub calib_samples: usize,
    pub clip: ClipPercentiles,
    #[serde(flatten)]
    pub sim: QuantSimOptions,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            calib_samples: 1024,
            clip: ClipPercentiles::default(),
            sim: QuantSimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub arch: MacroArchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub quant: QuantConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        ClipPercentiles::new(self.quant.clip.lo, self.quant.clip.hi)?;
        if self.quant.calib_samples == 0 {
            return Err(config("calib_samples must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            key_value_to_json(text)?
        };
        serde_json::from_value(value).map_err(|e| config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn parse_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|s| parse_value(s.trim())).collect());
    }
    Value::String(raw.to_string())
}

fn key_value_to_json(text: &str) -> Result<Value> {
    let mut root = Map::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(config(format!("line {}: expected `key = value`", n + 1)));
        };
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(config(format!("line {}: malformed key `{}`", n + 1, key.trim())));
        }
        let mut node = &mut root;
        for part in &path[..path.len() - 1] {
            let child = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            node = child
                .as_object_mut()
                .ok_or_else(|| config(format!("line {}: `{part}` is not a section", n + 1)))?;
        }
        node.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    }
    Ok(Value::Object(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_file() {
        let cfg = ExperimentConfig::parse(
            "# desk run\n\
             arch.input_shape = 3,16,16\n\
             arch.stem_channels = 16\n\
             arch.stage_widths = 16,32\n\
             arch.blocks_per_stage = 1\n\
             arch.dense_widths = 64,2\n\
             train.epochs = 10\n\
             train.batch_size = 64\n\
             train.lr_drop_epochs = []\n\
             train.augmentation.v_flip = false\n\
             data.dir = /tmp/cifar\n\
             data.classes = 0,1\n\
             quant.bits = 16\n",
        )
        .unwrap();
        assert_eq!(cfg.arch.stage_widths, vec![16, 32]);
        assert_eq!(cfg.train.epochs, 10);
        assert!(!cfg.train.augmentation.v_flip && cfg.train.augmentation.h_flip);
        assert_eq!(cfg.data.dir, Some(PathBuf::from("/tmp/cifar")));
        assert_eq!(cfg.data.classes, Some(vec![0, 1]));
        assert_eq!(cfg.quant.sim.bits, 16);
        assert_eq!(cfg.quant.calib_samples, 1024);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_file_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.epochs = 3;
        cfg.train.lr_drop_epochs.clear();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn malformed_lines_are_config_errors() {
        assert!(ExperimentConfig::parse("train.epochs 3").is_err());
        assert!(ExperimentConfig::parse("train..epochs = 3").is_err());
        assert!(ExperimentConfig::parse("train.epochs = many").is_err());
    }
}
