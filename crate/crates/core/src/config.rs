use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every knob of model construction, training and corpus filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub hidden: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub executor_layers: usize,
    pub executor_heads: usize,
    pub max_tokens: usize,
    pub max_chars: usize,
    pub max_args: usize,
    pub batch_size: usize,
    /// Lambda calls allowed per batch; 0 disables the cap.
    pub lambda_cap_per_batch: usize,
    pub k_negatives: usize,
    pub samples_per_loss: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    pub vocab_min_count: usize,
    pub vocab_max_size: usize,
    pub oov_buckets: usize,
    /// Replace the whole argument list, not one argument, when building
    /// argument-discrimination negatives.
    pub l2_replace_all: bool,
    /// Wall-clock budget for a training run in seconds; 0 means unlimited.
    pub time_budget_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            hidden: 64,
            encoder_layers: 2,
            encoder_heads: 4,
            executor_layers: 2,
            executor_heads: 4,
            max_tokens: 512,
            max_chars: 10_000,
            max_args: 16,
            batch_size: 16,
            lambda_cap_per_batch: 128,
            k_negatives: 8,
            samples_per_loss: 64,
            lr: 1e-3,
            warmup_frac: 0.05,
            weight_decay: 0.01,
            clip_norm: 1.0,
            epochs: 5,
            seed: 0,
            vocab_min_count: 2,
            vocab_max_size: 5000,
            oov_buckets: 64,
            l2_replace_all: false,
            time_budget_secs: 0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one `key=value` override, parsing the value as TOML.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let key = key.trim();
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        let parsed: toml::Value = format!("v = {}", value.trim())
            .parse::<toml::Table>()
            .map(|mut t| t.remove("v").unwrap())
            .or_else(|_| Ok::<_, Error>(toml::Value::String(value.trim().to_string())))?;
        table.insert(key.to_string(), parsed);
        let updated: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("encoder_layers", self.encoder_layers),
            ("encoder_heads", self.encoder_heads),
            ("executor_layers", self.executor_layers),
            ("executor_heads", self.executor_heads),
            ("max_tokens", self.max_tokens),
            ("max_chars", self.max_chars),
            ("max_args", self.max_args),
            ("batch_size", self.batch_size),
            ("k_negatives", self.k_negatives),
            ("samples_per_loss", self.samples_per_loss),
            ("epochs", self.epochs),
            ("oov_buckets", self.oov_buckets),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.encoder_heads) || !self.hidden.is_multiple_of(self.executor_heads) {
            return Err(Error::Config("hidden must be divisible by the head counts".into()));
        }
        if self.k_negatives < 2 {
            return Err(Error::Config("k_negatives must be at least 2".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn lambda_cap(&self) -> Option<usize> {
        (self.lambda_cap_per_batch > 0).then_some(self.lambda_cap_per_batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_overrides() {
        let mut c = Config::default();
        c.set("hidden=32").unwrap();
        c.set("lr = 0.005").unwrap();
        assert_eq!(c.hidden, 32);
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = Config::default();
        assert!(c.set("warmup_frac=1.0").is_err());
        assert!(c.set("nope=1").is_err());
        assert!(c.set("hidden=30").is_err());
        assert!(Config::from_toml("batch_size = 0").is_err());
        assert!(Config::from_toml("unknown = 1").is_err());
        assert_eq!(c, Config::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = Config::from_toml("hidden = 32\nseed = 4\n").unwrap();
        assert_eq!((c.hidden, c.seed, c.batch_size), (32, 4, 16));
    }
}
