//! Trip CSV parsing and aggregation into inflow/outflow grids.

use std::io::Read;

use chrono::{DateTime, NaiveDateTime};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{GridMap, INFLOW, OUTFLOW};

use super::stgrid::{BoundingBox, GridDataset};

pub const TRIP_COLUMNS: [&str; 6] = [
    "pickup_datetime",
    "dropoff_datetime",
    "pickup_lat",
    "pickup_lon",
    "dropoff_lat",
    "dropoff_lon",
];

/// One trip; times are Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub pickup_time: i64,
    pub dropoff_time: i64,
    pub pickup_lat: f64,
    pub pickup_lon: f64,
    pub dropoff_lat: f64,
    pub dropoff_lon: f64,
}

/// Parse a timestamp given as Unix seconds or ISO-8601 (UTC when no offset is given).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub rows: usize,
    pub unparseable: usize,
}

/// Read trips from CSV with a header row naming [`TRIP_COLUMNS`] (other columns are ignored).
/// Rows that fail to parse are counted and skipped.
pub fn read_trips(reader: impl Read) -> Result<(Vec<TripRecord>, ReadStats)> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::data(format!("cannot read trip CSV header: {e}")))?
        .clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(TRIP_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("trip CSV has no {name} column")))?;
    }
    let mut stats = ReadStats::default();
    let mut out = Vec::new();
    for row in csv.records() {
        stats.rows += 1;
        let Ok(row) = row else {
            stats.unparseable += 1;
            continue;
        };
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let num = |i: usize| field(i).parse::<f64>().ok().filter(|v| v.is_finite());
        let rec = (|| {
            Some(TripRecord {
                pickup_time: parse_timestamp(field(0))?,
                dropoff_time: parse_timestamp(field(1))?,
                pickup_lat: num(2)?,
                pickup_lon: num(3)?,
                dropoff_lat: num(4)?,
                dropoff_lon: num(5)?,
            })
        })();
        match rec {
            Some(r) => out.push(r),
            None => stats.unparseable += 1,
        }
    }
    Ok((out, stats))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TimeValue {
    Seconds(i64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    height: usize,
    width: usize,
    interval_seconds: u64,
    start: TimeValue,
    end: TimeValue,
}

/// Grid geometry and time range for aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub bbox: BoundingBox,
    pub height: usize,
    pub width: usize,
    pub interval_seconds: u64,
    pub start: i64,
    pub end: i64,
}

impl GridSpec {
    /// Parse from JSON. Times may be Unix seconds or ISO-8601 strings.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec =
            serde_json::from_str(text).map_err(|e| Error::config(format!("grid spec: {e}")))?;
        let time = |name: &str, v: &TimeValue| match v {
            TimeValue::Seconds(s) => Ok(*s),
            TimeValue::Text(s) => parse_timestamp(s)
                .ok_or_else(|| Error::config(format!("grid spec field {name}: cannot parse time {s:?}"))),
        };
        let spec = GridSpec {
            bbox: BoundingBox {
                lat_min: raw.lat_min,
                lat_max: raw.lat_max,
                lon_min: raw.lon_min,
                lon_max: raw.lon_max,
            },
            height: raw.height,
            width: raw.width,
            interval_seconds: raw.interval_seconds,
            start: time("start", &raw.start)?,
            end: time("end", &raw.end)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bbox;
        if !(b.lat_min.is_finite() && b.lat_max.is_finite() && b.lat_min < b.lat_max) {
            return Err(Error::config("grid spec fields lat_min/lat_max: need lat_min < lat_max"));
        }
        if !(b.lon_min.is_finite() && b.lon_max.is_finite() && b.lon_min < b.lon_max) {
            return Err(Error::config("grid spec fields lon_min/lon_max: need lon_min < lon_max"));
        }
        if self.height == 0 {
            return Err(Error::config("grid spec field height must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::config("grid spec field width must be at least 1"));
        }
        if self.interval_seconds == 0 {
            return Err(Error::config("grid spec field interval_seconds must be at least 1"));
        }
        if self.steps() == 0 {
            return Err(Error::config(
                "grid spec fields start/end: range holds no full interval",
            ));
        }
        Ok(())
    }

    /// Number of whole intervals in `[start, end)`.
    pub fn steps(&self) -> usize {
        if self.end <= self.start {
            return 0;
        }
        ((self.end - self.start) as u64 / self.interval_seconds) as usize
    }

    /// `(row, col)` of a point; row 0 holds `lat_min`, and each max edge falls in the last cell.
    pub fn cell(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let b = &self.bbox;
        let axis = |v: f64, lo: f64, hi: f64, n: usize| {
            if !(lo..=hi).contains(&v) {
                return None;
            }
            Some((((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1))
        };
        Some((
            axis(lat, b.lat_min, b.lat_max, self.height)?,
            axis(lon, b.lon_min, b.lon_max, self.width)?,
        ))
    }

    /// Interval index of a timestamp.
    pub fn slot(&self, t: i64) -> Option<usize> {
        if t < self.start {
            return None;
        }
        let s = ((t - self.start) as u64 / self.interval_seconds) as usize;
        (s < self.steps()).then_some(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateStats {
    pub counted: usize,
    pub out_of_box: usize,
    pub out_of_range: usize,
    pub inverted_times: usize,
}

/// Count each trip as outflow at its pickup cell and slot and inflow at its
/// dropoff cell and slot. A trip with either end outside the box or the time
/// range is skipped entirely.
pub fn aggregate(trips: &[TripRecord], spec: &GridSpec) -> Result<(GridDataset, AggregateStats)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut maps = vec![GridMap::zeros(h, w, 2); spec.steps()];
    let mut stats = AggregateStats::default();
    for t in trips {
        if t.dropoff_time < t.pickup_time {
            stats.inverted_times += 1;
            continue;
        }
        let (Some(from), Some(to)) = (
            spec.cell(t.pickup_lat, t.pickup_lon),
            spec.cell(t.dropoff_lat, t.dropoff_lon),
        ) else {
            stats.out_of_box += 1;
            continue;
        };
        let (Some(s_out), Some(s_in)) = (spec.slot(t.pickup_time), spec.slot(t.dropoff_time)) else {
            stats.out_of_range += 1;
            continue;
        };
        let m = &mut maps[s_out];
        m.set(from.0, from.1, OUTFLOW, m.get(from.0, from.1, OUTFLOW) + 1.0);
        let m = &mut maps[s_in];
        m.set(to.0, to.1, INFLOW, m.get(to.0, to.1, INFLOW) + 1.0);
        stats.counted += 1;
    }
    if stats.counted == 0 {
        return Err(Error::data(format!(
            "none of {} trips fall inside the grid box and time range",
            trips.len()
        )));
    }
    let ds = GridDataset::new(h, w, 2, spec.interval_seconds, spec.bbox, maps)?;
    Ok((ds, stats))
}
