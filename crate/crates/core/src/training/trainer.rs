use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::mixer::{model_backward_into, model_forward, ModelConfig, ModelParams};
use crate::norm::NormStats;
use crate::temporal::slice_at;

use super::adam::{AdamConfig, AdamState};
use super::loss::{loss, LossConfig};

/// Samples per parallel backward chunk. Gradients are reduced chunk by chunk
/// in order, so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [("split_train", self.train), ("split_val", self.val), ("split_test", self.test)];
        for (name, v) in parts {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub split: SplitRatios,
    pub adam: AdamConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            split: SplitRatios::default(),
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) {
            return Err(Error::config(format!("lr must be positive, got {}", self.adam.lr)));
        }
        self.split.validate()?;
        self.loss.validate()
    }
}

/// Target anchors of each split, in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Chronological split of every anchor in `min_anchor..n_maps`.
pub fn chronological_split(n_maps: usize, min_anchor: usize, ratios: &SplitRatios) -> Result<Split> {
    ratios.validate()?;
    let anchors: Vec<usize> = (min_anchor..n_maps).collect();
    let n = anchors.len();
    let n_train = (n as f64 * ratios.train).round() as usize;
    let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let split = Split {
        train: anchors[..n_train].to_vec(),
        val: anchors[n_train..n_train + n_val].to_vec(),
        test: anchors[n_train + n_val..].to_vec(),
    };
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::data(format!(
            "{n_maps} maps leave {n} usable samples after the first {min_anchor}; \
             too few for non-empty train and validation splits"
        )));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch,{},train_loss,{},val_mae,{}",
            self.epoch, self.train_loss, self.val_mae
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAE.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub norm: NormStats,
    pub split: Split,
    pub train_seconds: f64,
}

/// Normalized target for `anchor`, restricted to the predicted channel.
fn target(maps: &[GridMap], anchor: usize, cfg: &ModelConfig) -> GridMap {
    match cfg.output_channel {
        Some(c) => maps[anchor].select_channel(c),
        None => maps[anchor].clone(),
    }
}

/// Sum of the batch loss over `anchors` and its gradient, added to `grads`.
pub fn batch_gradient(
    maps: &[GridMap],
    anchors: &[usize],
    cfg: &ModelConfig,
    params: &ModelParams,
    loss_cfg: &LossConfig,
    grads: &mut ModelParams,
) -> Result<f64> {
    let forwards = anchors
        .par_iter()
        .map(|&a| {
            let deps = slice_at(maps, a, &cfg.temporal)?;
            model_forward(&deps, cfg, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = cfg.out_dim();
    let mut pred = Vec::with_capacity(out * anchors.len());
    let mut tgt = Vec::with_capacity(out * anchors.len());
    for ((p, _), &a) in forwards.iter().zip(anchors) {
        pred.extend_from_slice(p.values());
        tgt.extend_from_slice(target(maps, a, cfg).values());
    }
    let (value, dpred) = loss(&pred, &tgt, loss_cfg)?;
    let partials = forwards
        .par_chunks(CHUNK)
        .zip(dpred.par_chunks(CHUNK * out))
        .map(|(fw, dp)| {
            let mut g = params.zeros_like();
            for ((_, cache), d) in fw.iter().zip(dp.chunks(out)) {
                if d.iter().any(|&v| v != 0.0) {
                    model_backward_into(cache, d, cfg, params, &mut g)?;
                }
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    for g in &partials {
        grads.add_assign(g);
    }
    Ok(value)
}

/// Mean absolute error in original units over `anchors`.
pub fn mae_original(
    maps: &[GridMap],
    raw: &[GridMap],
    anchors: &[usize],
    cfg: &ModelConfig,
    params: &ModelParams,
    norm: &NormStats,
) -> Result<f64> {
    let norm = match cfg.output_channel {
        Some(c) => norm.select_channel(c),
        None => norm.clone(),
    };
    let sums = anchors
        .par_iter()
        .map(|&a| {
            let deps = slice_at(maps, a, &cfg.temporal)?;
            let pred = norm.invert(&model_forward(&deps, cfg, params)?.0);
            let truth = target(raw, a, cfg);
            let s: f64 = pred
                .values()
                .iter()
                .zip(truth.values())
                .map(|(p, t)| (p - t).abs())
                .sum();
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / (anchors.len() * cfg.out_dim()) as f64)
}

/// Train on `raw` maps in original units.
///
/// Normalization is fitted on every map up to the last training target.
/// `on_epoch` sees each epoch's record as soon as it is available.
pub fn train(
    raw: &[GridMap],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    if let Some(m) = raw.first() {
        let want = (model_cfg.height, model_cfg.width, model_cfg.channels);
        if m.dims() != want {
            return Err(Error::config(format!(
                "model expects {}x{}x{} maps, data has {}x{}x{}",
                want.0,
                want.1,
                want.2,
                m.height(),
                m.width(),
                m.channels()
            )));
        }
    }
    let started = Instant::now();
    let split = chronological_split(raw.len(), model_cfg.temporal.min_anchor(), &cfg.split)?;
    let last_train = *split.train.last().expect("non-empty train split");
    let norm = NormStats::fit(&raw[..=last_train])?;
    let maps: Vec<GridMap> = raw.iter().map(|m| norm.apply(m)).collect();

    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let mut adam = AdamState::for_model(cfg.adam, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4521);
    let mut order = split.train.clone();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            total += batch_gradient(&maps, batch, model_cfg, &params, &cfg.loss, &mut grads)?;
            adam.step_model(&mut params, &grads);
        }
        if !params.is_finite() {
            return Err(Error::data(format!(
                "parameters became non-finite in epoch {epoch}; lower the learning rate"
            )));
        }
        let val_mae = mae_original(&maps, raw, &split.val, model_cfg, &params, &norm)?;
        let record = EpochRecord {
            epoch,
            train_loss: total,
            val_mae,
        };
        on_epoch(&record);
        history.push(record);
        if val_mae < best.0 {
            best = (val_mae, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, params, best_epoch) = best;
    Ok(TrainOutcome {
        params,
        best_epoch: best_epoch.max(1),
        history,
        norm,
        split,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}
