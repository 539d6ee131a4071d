//! Run configuration: `key = value` lines merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use disfluency_core::corpus::DisfluencyType;
use disfluency_core::seed;
use disfluency_core::seqgan::ModelConfig;
use disfluency_core::synth::SynthConfig;
use disfluency_core::trainer::{TrainConfig, TrainMode};
use disfluency_core::{Error, Result};

/// Environment variable naming the config file read when `--config` is
/// absent.
pub const CONFIG_ENV: &str = "DISFLUENCY_CONFIG";
pub const DEFAULT_CONFIG_PATH: &str = "disfluency.conf";

const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("jobs", "1"),
    ("language", "en"),
    // synthesis
    ("budget", "0.2"),
    ("types", "conversational"),
    ("max_injections", "4"),
    ("stutter_max_fragments", "2"),
    // model
    ("model_dim", "32"),
    ("n_layers", "2"),
    ("n_heads", "2"),
    ("max_len", "32"),
    ("ff_dim", "64"),
    ("noise_dim", "16"),
    ("generator_hidden", "64"),
    ("discriminator_hidden", "32"),
    ("min_freq", "1"),
    // training
    ("mode", "adversarial+unlabeled"),
    ("steps", "2000"),
    ("batch_size_labeled", "16"),
    ("batch_size_unlabeled", "16"),
    ("lr_d", "0.001"),
    ("lr_g", "0.001"),
    ("eval_every", "200"),
    ("feature_match_weight", "1.0"),
    // paths
    ("input", ""),
    ("output", ""),
    ("lexicon", ""),
    ("labeled", ""),
    ("unlabeled", ""),
    ("heldout", ""),
    ("test", ""),
    ("checkpoint", ""),
    ("vocab", ""),
    ("report", ""),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(message) => Error::Format { line: i + 1, message },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// The explicit path if given, else the path named by the environment
    /// variable, else the default file if it exists, else built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        if let Ok(p) = std::env::var(CONFIG_ENV) {
            return Self::load(Path::new(&p));
        }
        let default = Path::new(DEFAULT_CONFIG_PATH);
        if default.exists() {
            return Self::load(default);
        }
        Ok(Self::default())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let (k, _) = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        self.values.insert(k, value.into());
        Ok(())
    }

    /// Overrides `key` when a flag value is present.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v.to_string()),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| Error::Config(format!("invalid value {raw:?} for {key}: {e}")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("no {key} path given (flag --{key} or config key {key})")))
    }

    /// Like [`RunConfig::require_path`], and the file must exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf> {
        let p = self.require_path(key)?;
        if !p.exists() {
            return Err(Error::Io {
                path: p,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            });
        }
        Ok(p)
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let seed = seed::derive(self.seed()?, "synth");
        let budget = self.get("budget")?;
        let mut cfg = match self.raw("types") {
            "conversational" => SynthConfig::conversational(budget, seed),
            "all" => {
                let mut c = SynthConfig::conversational(budget, seed);
                c.set_weight(DisfluencyType::Stutter, 1.0);
                c
            }
            list => {
                let mut c = SynthConfig::conversational(budget, seed);
                c.type_weights = [0.0; 7];
                for name in list.split(',') {
                    let t: DisfluencyType = name.trim().parse()?;
                    c.set_weight(t, 1.0);
                }
                c
            }
        };
        cfg.max_injections_per_sentence = self.get("max_injections")?;
        cfg.stutter_max_fragments = self.get("stutter_max_fragments")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::desk(vocab_size);
        c.encoder.model_dim = self.get("model_dim")?;
        c.encoder.n_layers = self.get("n_layers")?;
        c.encoder.n_heads = self.get("n_heads")?;
        c.encoder.max_len = self.get("max_len")?;
        c.encoder.ff_dim = self.get("ff_dim")?;
        c.generator.noise_dim = self.get("noise_dim")?;
        c.generator.hidden_dim = self.get("generator_hidden")?;
        c.discriminator.hidden_dim = self.get("discriminator_hidden")?;
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mode: TrainMode = self.raw("mode").parse()?;
        let c = TrainConfig {
            mode,
            steps: self.get("steps")?,
            batch_size_labeled: self.get("batch_size_labeled")?,
            batch_size_unlabeled: self.get("batch_size_unlabeled")?,
            lr_d: self.get("lr_d")?,
            lr_g: self.get("lr_g")?,
            seed: seed::derive(self.seed()?, "train"),
            eval_every: self.get("eval_every")?,
            feature_match_weight: self.get("feature_match_weight")?,
        };
        c.validate()?;
        Ok(c)
    }
}
