use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{config, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    /// Epochs (0-indexed) at whose start the learning rate is multiplied by
    /// `lr_drop_factor`.
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    pub augmentation: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            base_lr: 0.01,
            momentum: 0.9,
            lr_drop_epochs: vec![75, 120, 170],
            lr_drop_factor: 0.1,
            augmentation: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config("epochs and batch_size must be positive"));
        }
        if !(self.base_lr > 0.0) || !(self.lr_drop_factor > 0.0) {
            return Err(config("base_lr and lr_drop_factor must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config("lr_drop_epochs must be strictly increasing"));
        }
        if self.lr_drop_epochs.last().is_some_and(|&e| e >= self.epochs) {
            return Err(config(format!(
                "lr_drop_epochs {:?} must all be below epochs = {}",
                self.lr_drop_epochs, self.epochs
            )));
        }
        let a = &self.augmentation;
        if a.shift_fraction < 0.0 || a.zoom_range < 0.0 || a.zoom_range >= 1.0 || a.rotation_degrees < 0.0 {
            return Err(config("augmentation magnitudes must be non-negative and zoom_range below 1"));
        }
        Ok(())
    }

    /// Sets the epoch count and discards drop epochs that no longer fall inside it.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.lr_drop_epochs.retain(|&e| e < epochs);
        self
    }
}

/// `base_lr * drop_factor^k`, where `k` counts drop epochs `<= epoch`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let drops = cfg.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
    cfg.base_lr * cfg.lr_drop_factor.powi(drops as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-12)
    }

    #[test]
    fn schedule_boundaries() {
        let cfg = TrainConfig::default();
        assert!(close(lr_at_epoch(&cfg, 0), 0.01));
        assert!(close(lr_at_epoch(&cfg, 74), 0.01));
        assert!(close(lr_at_epoch(&cfg, 75), 0.001));
        assert!(close(lr_at_epoch(&cfg, 120), 1e-4));
        assert!(close(lr_at_epoch(&cfg, 170), 1e-5));
        assert!(close(lr_at_epoch(&cfg, 199), 1e-5));
    }

    #[test]
    fn schedule_is_non_increasing() {
        let cfg = TrainConfig::default();
        for e in 1..cfg.epochs {
            assert!(lr_at_epoch(&cfg, e) <= lr_at_epoch(&cfg, e - 1));
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let short = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        assert!(short.validate().is_err());
        assert!(short.clone().with_epochs(10).validate().is_ok());
        let unordered = TrainConfig {
            lr_drop_epochs: vec![5, 5],
            ..Default::default()
        };
        assert!(unordered.validate().is_err());
    }

    #[test]
    fn json_defaults_fill_gaps() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "lr_drop_epochs": []}"#).unwrap();
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.epochs, 3);
    }
}
