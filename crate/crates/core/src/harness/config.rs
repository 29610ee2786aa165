//! Line-oriented `key = value` configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::objectives::LossWeights;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Videos per mini-batch.
    pub batch_videos: usize,
    /// Training queries drawn per video in a mini-batch.
    pub queries_per_video: usize,
    pub lr: f64,
    pub lr_floor: f64,
    /// Multiplier applied to the learning rate on a plateau.
    pub lr_decay: f64,
    /// Epochs without a validation SumR improvement before decaying.
    pub plateau_epochs: usize,
}

impl TrainConfig {
    pub fn toy() -> Self {
        Self {
            epochs: 50,
            batch_videos: 8,
            queries_per_video: 2,
            lr: 1e-2,
            lr_floor: 1e-5,
            lr_decay: 0.5,
            plateau_epochs: 3,
        }
    }

    pub fn paper() -> Self {
        Self {
            epochs: 100,
            batch_videos: 64,
            lr: 2.5e-4,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_videos == 0 || self.queries_per_video == 0 {
            return Err(Error::arg("batch_videos and queries_per_video must be positive"));
        }
        if self.batch_videos * self.queries_per_video < 2 {
            return Err(Error::arg("a mini-batch needs at least two queries"));
        }
        if !(self.lr > 0.0) || !(self.lr_floor > 0.0) || self.lr_floor > self.lr {
            return Err(Error::arg("need 0 < lr_floor <= lr"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::arg("lr_decay must lie in (0, 1]"));
        }
        if self.plateau_epochs == 0 {
            return Err(Error::arg("plateau_epochs must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy()
    }
}

/// Everything a training run needs besides data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Toy,
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset {other:?} (expected toy or paper)")),
        }
    }
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Toy => Self {
                model: ModelConfig::toy(),
                loss: LossWeights::default(),
                train: TrainConfig::toy(),
            },
            Preset::Paper => Self {
                model: ModelConfig::paper(),
                loss: LossWeights::default(),
                train: TrainConfig::paper(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()
    }

    /// Parses `key = value` lines on top of the toy preset, or of the preset
    /// named by a `preset` key. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let mut config = Config::default();
        for e in entries.iter().filter(|e| e.key == "preset") {
            let preset = e.value.parse::<Preset>().map_err(|detail| Error::Config {
                line: e.line,
                detail,
            })?;
            config = Config::preset(preset);
        }
        for e in entries.iter().filter(|e| e.key != "preset") {
            let key = CONFIG_KEYS
                .iter()
                .find(|k| k.name == e.key)
                .ok_or_else(|| Error::Config {
                    line: e.line,
                    detail: format!("unknown key {:?}", e.key),
                })?;
            (key.set)(&mut config, &e.value).map_err(|detail| Error::Config {
                line: e.line,
                detail: format!("{}: {detail}", e.key),
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key in a fixed order; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in CONFIG_KEYS {
            writeln!(out, "{} = {}", k.name, (k.get)(self)).expect("string write");
        }
        out
    }

    /// `(key, description, default)` rows for documentation.
    pub fn documented_keys() -> Vec<(&'static str, &'static str, String)> {
        let defaults = Config::default();
        CONFIG_KEYS
            .iter()
            .map(|k| (k.name, k.doc, (k.get)(&defaults)))
            .collect()
    }
}

pub(crate) struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits text into `key = value` entries, dropping blanks and `#` comments.
pub(crate) fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            detail: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config {
                line,
                detail: "empty key or value".into(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line,
                detail: format!("duplicate key {key:?}"),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

pub(crate) struct Key<C> {
    pub name: &'static str,
    pub doc: &'static str,
    pub get: fn(&C) -> String,
    pub set: fn(&mut C, &str) -> std::result::Result<(), String>,
}

macro_rules! key {
    ($name:literal, $($field:ident).+, $doc:literal) => {
        Key {
            name: $name,
            doc: $doc,
            get: |c| c.$($field).+.to_string(),
            set: |c, v| {
                c.$($field).+ = parse_value(v)?;
                Ok(())
            },
        }
    };
}

const CONFIG_KEYS: &[Key<Config>] = &[
    key!("video_dim", model.video_dim, "frame feature width D_vid"),
    key!("text_dim", model.text_dim, "word feature width D_text"),
    key!("dim", model.dim, "latent width d"),
    key!("hyper_dim", model.hyper_dim, "hyperbolic dimension n of Lorentz blocks"),
    key!("lorentz_blocks", model.lorentz_blocks, "number of Lorentz blocks N_L"),
    key!("euclidean_blocks", model.euclidean_blocks, "number of Euclidean blocks N_E"),
    key!("heads", model.heads, "heads per Euclidean attention"),
    key!("ffn_hidden", model.ffn_hidden, "feed-forward hidden width"),
    key!("clip_count", model.clip_count, "glance branch clip count M_c"),
    key!("tau", model.tau, "fusion softmax temperature"),
    key!("alpha_frame", model.alpha_frame, "frame-level similarity weight"),
    key!("alpha_clip", model.alpha_clip, "clip-level similarity weight"),
    key!("beta_init", model.beta_init, "initial lift scale"),
    key!("lambda_init", model.lambda_init, "initial Lorentz linear scale"),
    key!("max_tangent_norm", model.max_tangent_norm, "tangent norm cap before the exponential map"),
    key!("seed", model.seed, "seed for initialization and batch order"),
    key!("lambda_div", loss.lambda_div, "weight of the query diversity loss"),
    key!("lambda_pop", loss.lambda_pop, "weight of the partial order loss"),
    key!("margin", loss.margin, "triplet margin"),
    key!("temperature", loss.temperature, "contrastive temperature"),
    key!("margin_div", loss.margin_div, "cosine margin of the diversity loss"),
    key!("cone_c", loss.cone_c, "entailment cone constant"),
    key!("pop_lift_scale", loss.pop_lift_scale, "tangent scale before lifting for the cone loss"),
    key!("epochs", train.epochs, "training epochs"),
    key!("batch_videos", train.batch_videos, "videos per mini-batch"),
    key!("queries_per_video", train.queries_per_video, "training queries per video in a mini-batch"),
    key!("lr", train.lr, "initial learning rate"),
    key!("lr_floor", train.lr_floor, "learning rate floor"),
    key!("lr_decay", train.lr_decay, "learning rate multiplier on plateau"),
    key!("plateau_epochs", train.plateau_epochs, "epochs without validation improvement before decay"),
];
