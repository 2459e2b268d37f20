//! Trend / period / closeness slicing of a historical window.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::GridMap;

/// The three temporal dependency branches, in fusion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Trend,
    Period,
    Closeness,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Trend, Branch::Period, Branch::Closeness];

    pub fn index(self) -> usize {
        match self {
            Branch::Trend => 0,
            Branch::Period => 1,
            Branch::Closeness => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Trend => "trend",
            Branch::Period => "period",
            Branch::Closeness => "closeness",
        }
    }
}

/// How a window is cut into branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMode {
    /// Each branch samples backwards from the anchor at its own interval.
    Strided,
    /// The last `t + p + c` steps are cut into consecutive blocks
    /// `[trend | period | closeness]`; intervals are ignored.
    Blocks,
}

impl fmt::Display for SliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceMode::Strided => "strided",
            SliceMode::Blocks => "blocks",
        })
    }
}

impl FromStr for SliceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strided" => Ok(SliceMode::Strided),
            "blocks" => Ok(SliceMode::Blocks),
            other => Err(Error::config(format!(
                "slice_mode must be strided or blocks, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalConfig {
    pub trend: usize,
    pub period: usize,
    pub closeness: usize,
    pub trend_interval: usize,
    pub period_interval: usize,
    pub closeness_interval: usize,
    pub mode: SliceMode,
    /// Skip the `trend_interval > period_interval > closeness_interval` check.
    pub relax_interval_order: bool,
}

impl Default for TemporalConfig {
    /// 12 input steps split (trend, period, closeness) = (2, 2, 8) at
    /// weekly / daily / unit intervals of an hourly series.
    fn default() -> Self {
        TemporalConfig {
            trend: 2,
            period: 2,
            closeness: 8,
            trend_interval: 168,
            period_interval: 24,
            closeness_interval: 1,
            mode: SliceMode::Strided,
            relax_interval_order: false,
        }
    }
}

/// Map indices selected for each branch, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyIndices {
    pub trend: Vec<usize>,
    pub period: Vec<usize>,
    pub closeness: Vec<usize>,
}

impl DependencyIndices {
    pub fn branch(&self, b: Branch) -> &[usize] {
        match b {
            Branch::Trend => &self.trend,
            Branch::Period => &self.period,
            Branch::Closeness => &self.closeness,
        }
    }
}

/// Borrowed maps for each branch, oldest first.
#[derive(Debug, Clone)]
pub struct Dependencies<'a> {
    pub trend: Vec<&'a GridMap>,
    pub period: Vec<&'a GridMap>,
    pub closeness: Vec<&'a GridMap>,
}

impl<'a> Dependencies<'a> {
    pub fn branch(&self, b: Branch) -> &[&'a GridMap] {
        match b {
            Branch::Trend => &self.trend,
            Branch::Period => &self.period,
            Branch::Closeness => &self.closeness,
        }
    }
}

impl TemporalConfig {
    /// Contiguous-block split of a `t + p + c` window.
    pub fn blocks(trend: usize, period: usize, closeness: usize) -> Self {
        TemporalConfig {
            trend,
            period,
            closeness,
            trend_interval: 1,
            period_interval: 1,
            closeness_interval: 1,
            mode: SliceMode::Blocks,
            relax_interval_order: true,
        }
    }

    /// Total number of input maps, `t + p + c`.
    pub fn window(&self) -> usize {
        self.trend + self.period + self.closeness
    }

    pub fn len(&self, b: Branch) -> usize {
        match b {
            Branch::Trend => self.trend,
            Branch::Period => self.period,
            Branch::Closeness => self.closeness,
        }
    }

    pub fn interval(&self, b: Branch) -> usize {
        match b {
            Branch::Trend => self.trend_interval,
            Branch::Period => self.period_interval,
            Branch::Closeness => self.closeness_interval,
        }
    }

    pub fn active(&self) -> impl Iterator<Item = Branch> + '_ {
        Branch::ALL.into_iter().filter(|&b| self.len(b) > 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window() == 0 {
            return Err(Error::config("t + p + c must be at least 1"));
        }
        if self.trend == 1 || self.period == 1 {
            return Err(Error::config(format!(
                "trend and period lengths cannot be 1 (got t={}, p={}); token mixing needs at least two steps",
                self.trend, self.period
            )));
        }
        if self.mode == SliceMode::Blocks {
            return Ok(());
        }
        for b in self.active() {
            if self.interval(b) == 0 {
                return Err(Error::config(format!("{} interval must be >= 1", b.name())));
            }
        }
        if !self.relax_interval_order {
            let active: Vec<Branch> = self.active().collect();
            for pair in active.windows(2) {
                let (longer, shorter) = (pair[0], pair[1]);
                if self.interval(longer) <= self.interval(shorter) {
                    return Err(Error::config(format!(
                        "{}_interval ({}) must exceed {}_interval ({}); set relax_interval_order to override",
                        longer.name(),
                        self.interval(longer),
                        shorter.name(),
                        self.interval(shorter)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smallest target index that has a full history behind it.
    pub fn min_anchor(&self) -> usize {
        match self.mode {
            SliceMode::Blocks => self.window(),
            SliceMode::Strided => self
                .active()
                .map(|b| self.len(b) * self.interval(b))
                .max()
                .unwrap_or(0),
        }
    }

    /// Indices of the maps feeding a prediction of step `anchor`.
    pub fn indices(&self, anchor: usize) -> Result<DependencyIndices> {
        let need = self.min_anchor();
        if anchor < need {
            return Err(Error::data(format!(
                "insufficient history: predicting step {anchor} needs step {} (earliest required index is {} steps before the anchor)",
                anchor as i64 - need as i64,
                need
            )));
        }
        let out = match self.mode {
            SliceMode::Strided => {
                let pick = |b: Branch| -> Vec<usize> {
                    let (n, l) = (self.len(b), self.interval(b));
                    (1..=n).rev().map(|k| anchor - k * l).collect()
                };
                DependencyIndices {
                    trend: pick(Branch::Trend),
                    period: pick(Branch::Period),
                    closeness: pick(Branch::Closeness),
                }
            }
            SliceMode::Blocks => {
                let start = anchor - self.window();
                let p0 = start + self.trend;
                let c0 = p0 + self.period;
                DependencyIndices {
                    trend: (start..p0).collect(),
                    period: (p0..c0).collect(),
                    closeness: (c0..anchor).collect(),
                }
            }
        };
        Ok(out)
    }
}

/// Slice `history` to predict the step right after it.
pub fn slice_dependencies<'a>(
    history: &'a [GridMap],
    cfg: &TemporalConfig,
) -> Result<Dependencies<'a>> {
    slice_at(history, history.len(), cfg)
}

/// Slice `maps` to predict step `anchor` (which may equal `maps.len()`).
pub fn slice_at<'a>(
    maps: &'a [GridMap],
    anchor: usize,
    cfg: &TemporalConfig,
) -> Result<Dependencies<'a>> {
    if anchor > maps.len() {
        return Err(Error::data(format!(
            "anchor {anchor} lies beyond the {} available maps",
            maps.len()
        )));
    }
    let idx = cfg.indices(anchor)?;
    let gather = |v: &[usize]| v.iter().map(|&i| &maps[i]).collect::<Vec<_>>();
    Ok(Dependencies {
        trend: gather(&idx.trend),
        period: gather(&idx.period),
        closeness: gather(&idx.closeness),
    })
}
