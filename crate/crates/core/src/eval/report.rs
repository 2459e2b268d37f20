use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::mixer::{model_forward, param_count, ModelConfig, ModelParams};
use crate::norm::NormStats;
use crate::temporal::Dependencies;

use super::baseline::{historical_average, persistence};
use super::metrics::{mae, r2, rmse};

/// Anything that predicts map `anchor` from the maps before it, in original units.
pub trait Forecaster: Sync {
    fn name(&self) -> String;
    /// Smallest anchor with enough history.
    fn min_anchor(&self) -> usize;
    /// Channel predicted when the forecaster covers only one.
    fn target_channel(&self) -> Option<usize> {
        None
    }
    fn param_count(&self) -> usize {
        0
    }
    fn train_seconds(&self) -> Option<f64> {
        None
    }
    /// `maps[..anchor]` is the history; `maps[anchor..]` must not be read.
    fn predict(&self, maps: &[GridMap], anchor: usize) -> Result<GridMap>;
}

pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> String {
        "persistence".into()
    }
    fn min_anchor(&self) -> usize {
        1
    }
    fn predict(&self, maps: &[GridMap], anchor: usize) -> Result<GridMap> {
        persistence(&maps[..anchor])
    }
}

pub struct HistoricalAverage {
    pub period: usize,
}

impl Forecaster for HistoricalAverage {
    fn name(&self) -> String {
        "historical_average".into()
    }
    fn min_anchor(&self) -> usize {
        self.period
    }
    fn predict(&self, maps: &[GridMap], anchor: usize) -> Result<GridMap> {
        historical_average(&maps[..anchor], self.period)
    }
}

/// A trained model together with the scaling it was trained under.
#[derive(Debug, Clone)]
pub struct MlpstForecaster {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub norm: NormStats,
    pub train_seconds: Option<f64>,
}

impl Forecaster for MlpstForecaster {
    fn name(&self) -> String {
        format!("mlpst_{}", self.config.variant)
    }
    fn min_anchor(&self) -> usize {
        self.config.temporal.min_anchor()
    }
    fn target_channel(&self) -> Option<usize> {
        self.config.output_channel
    }
    fn param_count(&self) -> usize {
        param_count(&self.params).total
    }
    fn train_seconds(&self) -> Option<f64> {
        self.train_seconds
    }
    fn predict(&self, maps: &[GridMap], anchor: usize) -> Result<GridMap> {
        if anchor > maps.len() {
            return Err(Error::data(format!("anchor {anchor} lies beyond {} maps", maps.len())));
        }
        let idx = self.config.temporal.indices(anchor)?;
        let scale = |v: &[usize]| v.iter().map(|&i| self.norm.apply(&maps[i])).collect::<Vec<_>>();
        let (trend, period, closeness) = (scale(&idx.trend), scale(&idx.period), scale(&idx.closeness));
        let deps = Dependencies {
            trend: trend.iter().collect(),
            period: period.iter().collect(),
            closeness: closeness.iter().collect(),
        };
        let pred = model_forward(&deps, &self.config, &self.params)?.0;
        let norm = match self.config.output_channel {
            Some(c) => self.norm.select_channel(c),
            None => self.norm.clone(),
        };
        Ok(norm.invert(&pred))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMetrics {
    pub channel: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub samples: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub params: usize,
    pub train_seconds: Option<f64>,
    pub infer_ms_per_batch: f64,
    pub per_channel: Vec<ChannelMetrics>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "model,dataset,mae,rmse,r2,params,train_s,infer_ms_per_batch";

    pub fn csv_row(&self) -> String {
        let r2 = self.r2.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        let train = self.train_seconds.map_or_else(String::new, |v| format!("{v:.3}"));
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.model, self.dataset, self.mae, self.rmse, r2, self.params, train, self.infer_ms_per_batch
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model      {}", self.model)?;
        writeln!(f, "dataset    {}", self.dataset)?;
        writeln!(f, "samples    {}", self.samples)?;
        writeln!(f, "mae        {:.6}", self.mae)?;
        writeln!(f, "rmse       {:.6}", self.rmse)?;
        match self.r2 {
            Some(v) => writeln!(f, "r2         {v:.6}")?,
            None => writeln!(f, "r2         undefined (constant ground truth)")?,
        }
        writeln!(f, "params     {}", self.params)?;
        if let Some(s) = self.train_seconds {
            writeln!(f, "train_s    {s:.3}")?;
        }
        writeln!(f, "infer_ms   {:.3} per batch", self.infer_ms_per_batch)?;
        for c in &self.per_channel {
            writeln!(f, "channel {}  mae {:.6}  rmse {:.6}", c.channel, c.mae, c.rmse)?;
        }
        Ok(())
    }
}

/// Score `model` on every anchor in `anchors`, predicting `batch_size` anchors at a time.
pub fn evaluate(
    model: &dyn Forecaster,
    maps: &[GridMap],
    anchors: &[usize],
    batch_size: usize,
    dataset: &str,
) -> Result<EvalReport> {
    if anchors.is_empty() {
        return Err(Error::config("evaluation split is empty"));
    }
    if let Some(&a) = anchors.iter().find(|&&a| a < model.min_anchor() || a >= maps.len()) {
        return Err(Error::data(format!(
            "anchor {a} is outside {}..{} for {}",
            model.min_anchor(),
            maps.len(),
            model.name()
        )));
    }
    let batch_size = batch_size.max(1);
    let started = Instant::now();
    let mut preds = Vec::with_capacity(anchors.len());
    for batch in anchors.chunks(batch_size) {
        let out = batch
            .par_iter()
            .map(|&a| model.predict(maps, a))
            .collect::<Result<Vec<_>>>()?;
        preds.extend(out);
    }
    let batches = anchors.len().div_ceil(batch_size);
    let infer_ms_per_batch = started.elapsed().as_secs_f64() * 1e3 / batches as f64;

    let mut p = Vec::new();
    let mut t = Vec::new();
    for (pred, &a) in preds.iter().zip(anchors) {
        let truth = match model.target_channel() {
            Some(c) => maps[a].select_channel(c),
            None => maps[a].clone(),
        };
        if pred.dims() != truth.dims() {
            return Err(Error::internal(format!(
                "{} produced a {:?} map for a {:?} target",
                model.name(),
                pred.dims(),
                truth.dims()
            )));
        }
        p.extend_from_slice(pred.values());
        t.extend_from_slice(truth.values());
    }
    let d = preds[0].channels();
    let channel_ids: Vec<usize> = match model.target_channel() {
        Some(c) => vec![c],
        None => (0..d).collect(),
    };
    let mut per_channel = Vec::with_capacity(d);
    for (k, &channel) in channel_ids.iter().enumerate() {
        let pc: Vec<f64> = p.iter().skip(k).step_by(d).copied().collect();
        let tc: Vec<f64> = t.iter().skip(k).step_by(d).copied().collect();
        per_channel.push(ChannelMetrics {
            channel,
            mae: mae(&pc, &tc)?,
            rmse: rmse(&pc, &tc)?,
        });
    }
    Ok(EvalReport {
        model: model.name(),
        dataset: dataset.to_string(),
        samples: anchors.len(),
        mae: mae(&p, &t)?,
        rmse: rmse(&p, &t)?,
        r2: r2(&p, &t)?,
        params: model.param_count(),
        train_seconds: model.train_seconds(),
        infer_ms_per_batch,
        per_channel,
    })
}
