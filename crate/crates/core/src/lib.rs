//! All-MLP spatio-temporal forecasting of gridded traffic flows.
//!
//! Maps are `H x W x d` grids (inflow and outflow per cell). A model slices
//! trend, period and closeness histories ending before the target step,
//! embeds every map with a patch-wise spatial mixer, mixes each history
//! with a temporal mixer, fuses the last rows and projects back to a map.

pub mod config;
pub mod error;
pub mod eval;
pub mod grid;
pub mod ingest;
pub mod mixer;
pub mod norm;
pub mod temporal;
pub mod tensor;
pub mod training;

pub use config::{RunConfig, TrainedModel};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport, Forecaster, HistoricalAverage, MlpstForecaster, Persistence};
pub use grid::{patchify, unpatchify, GridMap, PatchGrid, INFLOW, OUTFLOW};
pub use ingest::{GridDataset, GridSpec, SynthKind, SynthSpec, TripRecord};
pub use mixer::{
    forecast, model_backward, model_forward, param_count, ModelConfig, ModelParams, ParamCount,
    Variant,
};
pub use norm::NormStats;
pub use temporal::{slice_at, slice_dependencies, Branch, SliceMode, TemporalConfig};
pub use tensor::Mat;
pub use training::{train, LossConfig, TrainConfig, TrainOutcome};
