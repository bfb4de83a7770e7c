//! `key=value` configuration files and the training configurations they feed.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerKind;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::config(format!("`{key}={v}`: {e}"))))
            .transpose()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Keys not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Video prediction head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Mean of the stored per-frame scores; nothing to train.
    ScoreMean,
    AvgPool,
    WeightedAvgPool,
    Lstm,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::ScoreMean => "score-mean",
            HeadKind::AvgPool => "avg-pool",
            HeadKind::WeightedAvgPool => "weighted-avg-pool",
            HeadKind::Lstm => "lstm",
        }
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score-mean" => Ok(HeadKind::ScoreMean),
            "avg-pool" => Ok(HeadKind::AvgPool),
            "weighted-avg-pool" => Ok(HeadKind::WeightedAvgPool),
            "lstm" => Ok(HeadKind::Lstm),
            other => Err(Error::config(format!(
                "unknown head `{other}` (expected score-mean, avg-pool, weighted-avg-pool or lstm)"
            ))),
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How stored per-frame scores are interpreted by the score-mean head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Already probabilities: the mean is renormalized by its sum.
    Probabilities,
    /// Logits: the mean goes through softmax.
    Logits,
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilities" => Ok(ScoreMode::Probabilities),
            "logits" => Ok(ScoreMode::Logits),
            other => Err(Error::config(format!("unknown score mode `{other}`"))),
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Probabilities => "probabilities",
            ScoreMode::Logits => "logits",
        })
    }
}

fn parse_optimizer(name: &str, momentum: f64) -> Result<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::adam()),
        "sgd" => Ok(OptimizerKind::sgd(momentum)),
        other => Err(Error::config(format!(
            "unknown optimizer `{other}` (expected adam or sgd)"
        ))),
    }
}

fn momentum_of(kind: OptimizerKind) -> f64 {
    match kind {
        OptimizerKind::SgdMomentum { momentum } => momentum,
        OptimizerKind::Adam { .. } => 0.9,
    }
}

/// Training configuration for the video heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head: HeadKind,
    /// Frames kept per clip by frame selection.
    pub n: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lstm_hidden: usize,
    pub score_mode: ScoreMode,
    /// Seed from the config file; command-line seeds take precedence.
    pub seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::AvgPool,
            n: 16,
            epochs: 30,
            batch_size: 16,
            optimizer: OptimizerKind::adam(),
            lr: 1e-3,
            lstm_hidden: 128,
            score_mode: ScoreMode::Probabilities,
            seed: None,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "head",
        "n",
        "epochs",
        "batch_size",
        "optimizer",
        "lr",
        "momentum",
        "lstm_hidden",
        "score_mode",
        "seed",
    ];

    pub fn with_head(head: HeadKind) -> Self {
        TrainConfig {
            head,
            ..Default::default()
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(Self::KEYS)?;
        let d = Self::default();
        let momentum = kv.get("momentum")?.unwrap_or(0.9);
        let cfg = TrainConfig {
            head: kv.get("head")?.unwrap_or(d.head),
            n: kv.get("n")?.unwrap_or(d.n),
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            optimizer: match kv.raw("optimizer") {
                Some(name) => parse_optimizer(name, momentum)?,
                None => d.optimizer,
            },
            lr: kv.get("lr")?.unwrap_or(d.lr),
            lstm_hidden: kv.get("lstm_hidden")?.unwrap_or(d.lstm_hidden),
            score_mode: kv.get("score_mode")?.unwrap_or(d.score_mode),
            seed: kv.get("seed")?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("head", self.head);
        kv.set("n", self.n);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("optimizer", self.optimizer.name());
        kv.set("lr", self.lr);
        kv.set("momentum", momentum_of(self.optimizer));
        kv.set("lstm_hidden", self.lstm_hidden);
        kv.set("score_mode", self.score_mode);
        if let Some(s) = self.seed {
            kv.set("seed", s);
        }
        kv
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.lstm_hidden == 0 {
            return Err(Error::config("lstm_hidden must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudioKind {
    Mlp,
    Forest,
}

impl AudioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AudioKind::Mlp => "mlp",
            AudioKind::Forest => "forest",
        }
    }
}

impl FromStr for AudioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(AudioKind::Mlp),
            "forest" | "rf" => Ok(AudioKind::Forest),
            other => Err(Error::config(format!(
                "unknown audio model `{other}` (expected mlp or forest)"
            ))),
        }
    }
}

impl fmt::Display for AudioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Training configuration for the audio heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioConfig {
    pub kind: AudioKind,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Fine-tuning learning rate as a fraction of `lr` after pretraining.
    pub finetune_ratio: f64,
    pub trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features drawn per split; `None` uses `floor(sqrt(D_a))`.
    pub features_per_split: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            kind: AudioKind::Mlp,
            hidden: 64,
            dropout: 0.5,
            epochs: 30,
            pretrain_epochs: 30,
            batch_size: 16,
            optimizer: OptimizerKind::adam(),
            lr: 1e-3,
            finetune_ratio: 0.1,
            trees: 100,
            max_depth: None,
            features_per_split: None,
            seed: None,
        }
    }
}

impl AudioConfig {
    pub const KEYS: &'static [&'static str] = &[
        "kind",
        "hidden",
        "dropout",
        "epochs",
        "pretrain_epochs",
        "batch_size",
        "optimizer",
        "lr",
        "momentum",
        "finetune_ratio",
        "trees",
        "max_depth",
        "features_per_split",
        "seed",
    ];

    pub fn forest() -> Self {
        AudioConfig {
            kind: AudioKind::Forest,
            ..Default::default()
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(Self::KEYS)?;
        let d = Self::default();
        let momentum = kv.get("momentum")?.unwrap_or(0.9);
        let optional = |key: &str| -> Result<Option<usize>> {
            match kv.raw(key) {
                None | Some("none") | Some("0") => Ok(None),
                Some(_) => kv.get(key),
            }
        };
        let cfg = AudioConfig {
            kind: kv.get("kind")?.unwrap_or(d.kind),
            hidden: kv.get("hidden")?.unwrap_or(d.hidden),
            dropout: kv.get("dropout")?.unwrap_or(d.dropout),
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            pretrain_epochs: kv.get("pretrain_epochs")?.unwrap_or(d.pretrain_epochs),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            optimizer: match kv.raw("optimizer") {
                Some(name) => parse_optimizer(name, momentum)?,
                None => d.optimizer,
            },
            lr: kv.get("lr")?.unwrap_or(d.lr),
            finetune_ratio: kv.get("finetune_ratio")?.unwrap_or(d.finetune_ratio),
            trees: kv.get("trees")?.unwrap_or(d.trees),
            max_depth: optional("max_depth")?,
            features_per_split: optional("features_per_split")?,
            seed: kv.get("seed")?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("kind", self.kind);
        kv.set("hidden", self.hidden);
        kv.set("dropout", self.dropout);
        kv.set("epochs", self.epochs);
        kv.set("pretrain_epochs", self.pretrain_epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("optimizer", self.optimizer.name());
        kv.set("lr", self.lr);
        kv.set("momentum", momentum_of(self.optimizer));
        kv.set("finetune_ratio", self.finetune_ratio);
        kv.set("trees", self.trees);
        kv.set(
            "max_depth",
            self.max_depth.map_or("none".to_string(), |d| d.to_string()),
        );
        kv.set(
            "features_per_split",
            self.features_per_split.map_or("none".to_string(), |m| m.to_string()),
        );
        if let Some(s) = self.seed {
            kv.set("seed", s);
        }
        kv
    }

    pub fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.trees == 0 {
            return Err(Error::config("hidden, batch_size and trees must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.finetune_ratio.is_finite() && self.finetune_ratio > 0.0) {
            return Err(Error::config("lr and finetune_ratio must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_training_config() {
        let kv = KeyValues::parse("# video\nhead=weighted-avg-pool\nn = 8\nepochs=5\noptimizer=sgd\nlr=0.05\nseed=3\n")
            .unwrap();
        let cfg = TrainConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.head, HeadKind::WeightedAvgPool);
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.optimizer, OptimizerKind::sgd(0.9));
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(TrainConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(TrainConfig::from_key_values(&KeyValues::parse("heads=lstm").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("n=0").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("head=gru").unwrap()).is_err());
        assert!(matches!(
            KeyValues::parse("a=1\nnonsense"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(KeyValues::parse("a=1\na=2").is_err());
    }

    #[test]
    fn audio_config_round_trip() {
        let cfg = AudioConfig {
            max_depth: Some(4),
            ..AudioConfig::forest()
        };
        assert_eq!(AudioConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
        let unlimited = AudioConfig::from_key_values(&KeyValues::parse("kind=rf\nmax_depth=none").unwrap()).unwrap();
        assert_eq!(unlimited.max_depth, None);
        assert_eq!(unlimited.kind, AudioKind::Forest);
    }
}
