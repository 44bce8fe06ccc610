//! Flat `key=value` run configuration.
//!
//! Sources merge in increasing precedence: built-in defaults, a config file,
//! `SOCSTOCH_<KEY>` environment variables, then explicit overrides.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::WindowSpec;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::CoordMode;
use crate::model::ModelConfig;
use crate::optim::AdamConfig;

pub const ENV_PREFIX: &str = "SOCSTOCH_";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
    /// Global gradient norm bound; 0 disables clipping.
    pub clip_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 300,
            batch_size: 16,
            beta: 1e-4,
            clip_grad_norm: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub frame_step: i64,
    pub train_stride: usize,
    /// 0 means `t_obs + t_pred` (non-overlapping windows).
    pub eval_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            t_obs: 8,
            t_pred: 12,
            frame_step: 10,
            train_stride: 1,
            eval_stride: 0,
        }
    }
}

impl DataConfig {
    pub fn train_spec(&self) -> WindowSpec {
        WindowSpec {
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            stride: self.train_stride,
            frame_step: self.frame_step,
        }
    }

    pub fn eval_spec(&self) -> WindowSpec {
        let stride = if self.eval_stride == 0 {
            self.t_obs + self.t_pred
        } else {
            self.eval_stride
        };
        WindowSpec {
            stride,
            ..self.train_spec()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub samples: usize,
    pub per_agent_best: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            per_agent_best: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

pub const KEYS: [&str; 26] = [
    "seed",
    "lr",
    "epochs",
    "batch_size",
    "beta",
    "clip_grad_norm",
    "blocks",
    "coord_mode",
    "gate",
    "directed",
    "view_angle",
    "still_eps",
    "leaky_slope",
    "edge_product",
    "embed_dim",
    "latent_dim",
    "stoch_hidden",
    "dec1_hidden",
    "dec2_hidden",
    "t_obs",
    "t_pred",
    "frame_step",
    "train_stride",
    "eval_stride",
    "samples",
    "per_agent_best",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for key {key:?}"))),
    }
}

impl RunConfig {
    /// Sets one key; unknown keys and malformed values are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let t = &mut self.train;
        let m = &mut self.model;
        let e: &mut EncoderConfig = &mut m.encoder;
        let d = &mut self.data;
        match key {
            "seed" => t.seed = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "beta" => t.beta = parse(key, value)?,
            "clip_grad_norm" => t.clip_grad_norm = parse(key, value)?,
            "blocks" => e.blocks = parse(key, value)?,
            "coord_mode" => {
                e.coord_mode = value
                    .trim()
                    .parse::<CoordMode>()
                    .map_err(|_| Error::Config(format!("invalid value {value:?} for key \"coord_mode\"")))?
            }
            "gate" => e.gate_enabled = parse_bool(key, value)?,
            "edge_product" => e.edge_product = parse_bool(key, value)?,
            "leaky_slope" => e.leaky_slope = parse(key, value)?,
            "embed_dim" => e.embed_dim = parse(key, value)?,
            "directed" => m.directed = parse_bool(key, value)?,
            "view_angle" => m.view_angle_deg = parse(key, value)?,
            "still_eps" => m.still_speed_eps = parse(key, value)?,
            "latent_dim" => m.latent_dim = parse(key, value)?,
            "stoch_hidden" => m.stoch_hidden = parse(key, value)?,
            "dec1_hidden" => m.dec1_hidden = parse(key, value)?,
            "dec2_hidden" => m.dec2_hidden = parse(key, value)?,
            "t_obs" => d.t_obs = parse(key, value)?,
            "t_pred" => d.t_pred = parse(key, value)?,
            "frame_step" => d.frame_step = parse(key, value)?,
            "train_stride" => d.train_stride = parse(key, value)?,
            "eval_stride" => d.eval_stride = parse(key, value)?,
            "samples" => self.eval.samples = parse(key, value)?,
            "per_agent_best" => self.eval.per_agent_best = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let m = &self.model;
        let e = &m.encoder;
        let d = &self.data;
        Some(match key {
            "seed" => t.seed.to_string(),
            "lr" => format!("{:?}", t.lr),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "beta" => format!("{:?}", t.beta),
            "clip_grad_norm" => format!("{:?}", t.clip_grad_norm),
            "blocks" => e.blocks.to_string(),
            "coord_mode" => e.coord_mode.to_string(),
            "gate" => e.gate_enabled.to_string(),
            "edge_product" => e.edge_product.to_string(),
            "leaky_slope" => format!("{:?}", e.leaky_slope),
            "embed_dim" => e.embed_dim.to_string(),
            "directed" => m.directed.to_string(),
            "view_angle" => format!("{:?}", m.view_angle_deg),
            "still_eps" => format!("{:?}", m.still_speed_eps),
            "latent_dim" => m.latent_dim.to_string(),
            "stoch_hidden" => m.stoch_hidden.to_string(),
            "dec1_hidden" => m.dec1_hidden.to_string(),
            "dec2_hidden" => m.dec2_hidden.to_string(),
            "t_obs" => d.t_obs.to_string(),
            "t_pred" => d.t_pred.to_string(),
            "frame_step" => d.frame_step.to_string(),
            "train_stride" => d.train_stride.to_string(),
            "eval_stride" => d.eval_stride.to_string(),
            "samples" => self.eval.samples.to_string(),
            "per_agent_best" => self.eval.per_agent_best.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn merge_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{source}:{}: expected key=value, got {line:?}", idx + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{source}:{}: {}", idx + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Applies `SOCSTOCH_<KEY>` overrides from `vars`, e.g. `std::env::vars()`.
    pub fn merge_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                self.set(&key, &value)
                    .map_err(|e| Error::Config(format!("environment {name}: {}", strip(e))))?;
            }
        }
        Ok(())
    }

    /// Parses `key=value` overrides.
    pub fn merge_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Every key in a fixed order; reparses to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key}={}", self.get(key).expect("known key")).expect("write to string");
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge_text(text, source)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if m.encoder.embed_dim == 0 || m.latent_dim == 0 || m.stoch_hidden == 0 || m.dec1_hidden == 0 || m.dec2_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if !(m.view_angle_deg > 0.0 && m.view_angle_deg <= 360.0) {
            return bad("view_angle must be in (0, 360]");
        }
        if self.data.t_obs < 2 || self.data.t_pred == 0 {
            return bad("t_obs must be at least 2 and t_pred at least 1");
        }
        if self.data.frame_step <= 0 || self.data.train_stride == 0 {
            return bad("frame_step and train_stride must be positive");
        }
        if self.train.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.train.lr >= 0.0) || !(self.train.beta >= 0.0) || !(self.train.clip_grad_norm >= 0.0) {
            return bad("lr, beta and clip_grad_norm must be nonnegative");
        }
        if self.eval.samples == 0 {
            return bad("samples must be positive");
        }
        Ok(())
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train.lr, 5e-4);
        assert_eq!(c.train.epochs, 300);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.train.beta, 1e-4);
        assert_eq!(c.model.encoder.blocks, 2);
        assert_eq!(c.model.view_angle_deg, 240.0);
        assert_eq!(c.eval.samples, 20);
        assert_eq!(c.data.eval_spec().stride, 20);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.merge_overrides(["lr=0.001", "coord_mode=cartesian", "gate=false", "blocks=3", "beta=1e-7"]).unwrap();
        let again = RunConfig::from_text(&c.to_text(), "mem").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_key_named() {
        let e = RunConfig::from_text("lr=1\nlearning_rate = 3\n", "run.cfg").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("learning_rate") && msg.contains("run.cfg:2"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::from_text("# header\n\nepochs = 7 # short run\n", "mem").unwrap();
        assert_eq!(c.train.epochs, 7);
    }

    #[test]
    fn precedence() {
        let mut c = RunConfig::from_text("epochs=5\nseed=1\n", "file").unwrap();
        c.merge_env([
            ("SOCSTOCH_EPOCHS".to_string(), "6".to_string()),
            ("SOCSTOCH_SEED".to_string(), "2".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        c.merge_overrides(["seed=3"]).unwrap();
        assert_eq!(c.train.epochs, 6);
        assert_eq!(c.train.seed, 3);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_text("gate=maybe", "mem").is_err());
        assert!(RunConfig::from_text("coord_mode=spherical", "mem").is_err());
        assert!(RunConfig::from_text("epochs", "mem").is_err());
        let mut c = RunConfig::default();
        c.set("view_angle", "0").unwrap();
        assert!(c.validate().is_err());
    }
}
