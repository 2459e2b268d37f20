//! Trip ingestion, grid files and synthetic data.

mod stgrid;
mod synth;
mod trips;

pub use stgrid::{BoundingBox, GridDataset, HEADER_LEN, MAGIC};
pub use synth::{synth, SynthKind, SynthSpec};
pub use trips::{
    aggregate, parse_timestamp, read_trips, AggregateStats, GridSpec, ReadStats, TripRecord,
    TRIP_COLUMNS,
};
