//! Flat `key = value` run configuration and trained-model files.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mixer::checkpoint::Checkpoint;
use crate::mixer::{ModelConfig, ModelParams};
use crate::norm::NormStats;
use crate::tensor::Mat;
use crate::training::TrainConfig;

/// Model and training settings in one place.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl RunConfig {
    /// Set one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "height" => m.height = parse(key, value)?,
            "width" => m.width = parse(key, value)?,
            "channels" => m.channels = parse(key, value)?,
            "patch" => m.patch = parse(key, value)?,
            "spatial_channels" => m.spatial_channels = parse(key, value)?,
            "temporal_channels" => m.temporal_channels = parse(key, value)?,
            "expansion" => m.expansion = parse(key, value)?,
            "depth" => m.depth = parse(key, value)?,
            "trend" => m.temporal.trend = parse(key, value)?,
            "period" => m.temporal.period = parse(key, value)?,
            "closeness" => m.temporal.closeness = parse(key, value)?,
            "trend_interval" => m.temporal.trend_interval = parse(key, value)?,
            "period_interval" => m.temporal.period_interval = parse(key, value)?,
            "closeness_interval" => m.temporal.closeness_interval = parse(key, value)?,
            "slice_mode" => m.temporal.mode = value.parse()?,
            "relax_interval_order" => m.temporal.relax_interval_order = parse(key, value)?,
            "variant" => m.variant = value.parse()?,
            "share_layers" => m.share_layers = parse(key, value)?,
            "share_temporal" => m.share_temporal = parse(key, value)?,
            "output_channel" => {
                m.output_channel = match value {
                    "all" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "input_steps" => {
                let n: usize = parse(key, value)?;
                let have = m.temporal.window();
                if n != have {
                    return Err(Error::config(format!(
                        "input_steps = {n} but trend + period + closeness = {have}"
                    )));
                }
            }
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "split_train" => t.split.train = parse(key, value)?,
            "split_val" => t.split.val = parse(key, value)?,
            "split_test" => t.split.test = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "eps" => t.adam.eps = parse(key, value)?,
            "loss_q" => t.loss.q = parse(key, value)?,
            "loss_combine" => t.loss.combine = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every setting as ordered key/value pairs; [`RunConfig::from_pairs`] inverts it.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let t = &self.train;
        let tc = &m.temporal;
        let out = m.output_channel.map_or("all".to_string(), |c| c.to_string());
        [
            ("height", m.height.to_string()),
            ("width", m.width.to_string()),
            ("channels", m.channels.to_string()),
            ("patch", m.patch.to_string()),
            ("spatial_channels", m.spatial_channels.to_string()),
            ("temporal_channels", m.temporal_channels.to_string()),
            ("expansion", m.expansion.to_string()),
            ("depth", m.depth.to_string()),
            ("trend", tc.trend.to_string()),
            ("period", tc.period.to_string()),
            ("closeness", tc.closeness.to_string()),
            ("trend_interval", tc.trend_interval.to_string()),
            ("period_interval", tc.period_interval.to_string()),
            ("closeness_interval", tc.closeness_interval.to_string()),
            ("slice_mode", tc.mode.to_string()),
            ("relax_interval_order", tc.relax_interval_order.to_string()),
            ("variant", m.variant.to_string()),
            ("share_layers", m.share_layers.to_string()),
            ("share_temporal", m.share_temporal.to_string()),
            ("output_channel", out),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("seed", t.seed.to_string()),
            ("split_train", t.split.train.to_string()),
            ("split_val", t.split.val.to_string()),
            ("split_test", t.split.test.to_string()),
            ("lr", t.adam.lr.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("eps", t.adam.eps.to_string()),
            ("loss_q", t.loss.q.to_string()),
            ("loss_combine", t.loss.combine.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Apply pairs on top of the defaults, then validate.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // input_steps is checked against the final branch lengths.
        let mut input_steps = None;
        for (k, v) in pairs {
            if k.as_ref() == "input_steps" {
                input_steps = Some(v.as_ref().to_string());
            } else {
                cfg.set(k.as_ref(), v.as_ref())?;
            }
        }
        if let Some(v) = input_steps {
            cfg.set("input_steps", &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        RunConfig::from_pairs(&pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

/// Parameters, scaling and settings of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: RunConfig,
    pub params: ModelParams,
    pub norm: NormStats,
    pub train_seconds: f64,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Mat)> = self
            .params
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect();
        tensors.push(("norm.min".into(), Mat::row_vector(self.norm.min.clone())));
        tensors.push(("norm.max".into(), Mat::row_vector(self.norm.max.clone())));
        Checkpoint {
            config: self.config.to_pairs(),
            meta: vec![("train_seconds".into(), self.train_seconds.to_string())],
            tensors,
        }
    }

    /// Rebuild from a checkpoint; every tensor must match the stored config.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = RunConfig::from_pairs(&ckpt.config)?;
        let mut params = ModelParams::init(&config.model, 0)?;
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let expected = names.len() + 2;
        if ckpt.tensors.len() != expected {
            return Err(Error::config(format!(
                "checkpoint holds {} tensors, its config implies {expected}",
                ckpt.tensors.len()
            )));
        }
        for (name, dst) in names.iter().zip(params.tensors_mut()) {
            let src = ckpt
                .tensor(name)
                .ok_or_else(|| Error::config(format!("checkpoint is missing tensor {name}")))?;
            if src.shape() != dst.shape() {
                return Err(Error::config(format!(
                    "tensor {name} is {:?} in the checkpoint, config implies {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        let stat = |n: &str| {
            ckpt.tensor(n)
                .map(|m| m.as_slice().to_vec())
                .filter(|v| v.len() == config.model.channels)
                .ok_or_else(|| Error::config(format!("checkpoint has no valid {n} tensor")))
        };
        let norm = NormStats {
            min: stat("norm.min")?,
            max: stat("norm.max")?,
        };
        let train_seconds = ckpt
            .meta("train_seconds")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0.0);
        Ok(TrainedModel {
            config,
            params,
            norm,
            train_seconds,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainedModel::from_checkpoint(&Checkpoint::read(path)?)
    }
}
