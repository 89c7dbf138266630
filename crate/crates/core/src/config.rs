//! Run configuration: flat `key = value` text with `#` comments.

use std::path::Path;

use crate::augment::AugmentPolicy;
use crate::connectivity::Connectivity;
use crate::error::{Error, Result};
use crate::masks::PipelineSettings;
use crate::nn::{ModelConfig, OptimizerKind, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// `None` means the optimizer's default learning rate.
    pub learning_rate: Option<f64>,
    pub augment: AugmentPolicy,
    pub pipeline: PipelineSettings,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one setting; also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input_size" => self.model.input_size = num(key, value)?,
            "levels" => self.model.levels = num(key, value)?,
            "base_channels" => self.model.base_channels = num(key, value)?,
            "num_classes" => self.model.num_classes = num(key, value)?,
            "dropout_rate" => self.model.dropout_rate = num(key, value)?,
            "batchnorm" => self.model.batchnorm = boolean(key, value)?,
            "optimizer" => self.train.optimizer = OptimizerKind::parse(value).map_err(|_| bad(key, value, "expected adam or sgd"))?,
            "learning_rate" => self.learning_rate = Some(num(key, value)?),
            "adam_beta1" => self.train.adam.beta1 = num(key, value)?,
            "adam_beta2" => self.train.adam.beta2 = num(key, value)?,
            "adam_epsilon" => self.train.adam.eps = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "recalibrate_bn" => self.train.recalibrate_bn = boolean(key, value)?,
            "augment_copies" => self.augment.copies = num(key, value)?,
            "augment_flip" => self.augment.flip = boolean(key, value)?,
            "augment_rotation_deg" => self.augment.max_rotation_deg = num(key, value)?,
            "augment_shift" => self.augment.max_shift_frac = num(key, value)?,
            "augment_zoom_min" => self.augment.zoom_range.0 = num(key, value)?,
            "augment_zoom_max" => self.augment.zoom_range.1 = num(key, value)?,
            "augment_noise_mean_min" => self.augment.noise_mean_range.0 = num(key, value)?,
            "augment_noise_mean_max" => self.augment.noise_mean_range.1 = num(key, value)?,
            "augment_noise_var_min" => self.augment.noise_var_range.0 = num(key, value)?,
            "augment_noise_var_max" => self.augment.noise_var_range.1 = num(key, value)?,
            "core_fraction" => self.pipeline.core_fraction = num(key, value)?,
            "connectivity" => {
                self.pipeline.connectivity = Connectivity::from_number(num(key, value)?)
                    .ok_or_else(|| bad(key, value, "expected 4 or 8"))?
            }
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = Some(num(key, value)?),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        let f = self.pipeline.core_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("core_fraction must be in (0, 1], got {f}")));
        }
        let a = &self.augment;
        if a.zoom_range.0 <= 0.0 || a.zoom_range.0 > a.zoom_range.1 {
            return Err(Error::Config("augment zoom range must be positive and ordered".into()));
        }
        if a.noise_var_range.0 < 0.0 || a.noise_var_range.0 > a.noise_var_range.1 {
            return Err(Error::Config("augment noise variance range must be non-negative and ordered".into()));
        }
        if a.noise_mean_range.0 > a.noise_mean_range.1 {
            return Err(Error::Config("augment noise mean range must be ordered".into()));
        }
        if !(0.0..0.5).contains(&a.max_shift_frac) || !a.max_rotation_deg.is_finite() {
            return Err(Error::Config("augment shift must be in [0, 0.5) and rotation finite".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Training settings with the learning-rate default resolved and the
    /// run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self
                .learning_rate
                .unwrap_or_else(|| self.train.optimizer.default_learning_rate()),
            seed: self.seed,
            ..self.train
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = RunConfig::parse(
            "# reduced model\ninput_size = 64\nlevels = 3 # three poolings\n\nbase_channels=16\noptimizer = SGD\nconnectivity = 4\nbatchnorm = false\n",
        )
        .unwrap();
        assert_eq!(cfg.model.input_size, 64);
        assert_eq!(cfg.model.levels, 3);
        assert_eq!(cfg.model.base_channels, 16);
        assert!(!cfg.model.batchnorm);
        assert_eq!(cfg.pipeline.connectivity, Connectivity::Four);
        assert_eq!(cfg.train_config().learning_rate, 1e-2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("nonsense").is_err());
        assert!(RunConfig::parse("colour = blue").is_err());
        assert!(RunConfig::parse("epochs = many").is_err());
        assert!(RunConfig::parse("input_size = 100").is_err());
        assert!(RunConfig::parse("adam_beta1 = 1.0").is_err());
        assert!(RunConfig::parse("batch_size = 0").is_err());
        assert!(RunConfig::parse("connectivity = 6").is_err());
        assert!(RunConfig::parse("core_fraction = 0").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train_config().learning_rate, 1e-3);
        assert_eq!(cfg.train_config().batch_size, 16);
    }
}
