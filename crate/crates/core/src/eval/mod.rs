//! Metrics, baselines and evaluation reports.

mod baseline;
mod metrics;
mod report;

pub use baseline::{historical_average, persistence};
pub use metrics::{mae, r2, rmse};
pub use report::{
    evaluate, ChannelMetrics, EvalReport, Forecaster, HistoricalAverage, MlpstForecaster,
    Persistence,
};
