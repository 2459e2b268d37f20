//! Per-channel min-max scaling fitted on the training split.

use crate::error::{Error, Result};
use crate::grid::GridMap;

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.min.len()
    }

    /// Fit per-channel bounds over `maps`.
    pub fn fit(maps: &[GridMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::data("cannot fit normalization on zero maps"))?;
        let d = first.channels();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for m in maps {
            if m.channels() != d {
                return Err(Error::data("maps disagree on channel count"));
            }
            for cell in m.values().chunks_exact(d) {
                for (c, &v) in cell.iter().enumerate() {
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
            }
        }
        Ok(NormStats { min, max })
    }

    fn check(&self, m: &GridMap) {
        assert_eq!(
            m.channels(),
            self.channels(),
            "normalization fitted for {} channels applied to {}",
            self.channels(),
            m.channels()
        );
    }

    /// Scale to `[0, 1]`; a constant channel maps to 0.
    pub fn apply(&self, m: &GridMap) -> GridMap {
        self.check(m);
        let mut out = m.clone();
        let d = self.channels();
        for cell in out.values_mut().chunks_exact_mut(d) {
            for (c, v) in cell.iter_mut().enumerate() {
                let range = self.max[c] - self.min[c];
                *v = if range > 0.0 { (*v - self.min[c]) / range } else { 0.0 };
            }
        }
        out
    }

    pub fn invert(&self, m: &GridMap) -> GridMap {
        self.check(m);
        let mut out = m.clone();
        let d = self.channels();
        for cell in out.values_mut().chunks_exact_mut(d) {
            for (c, v) in cell.iter_mut().enumerate() {
                *v = self.invert_value(c, *v);
            }
        }
        out
    }

    #[inline]
    pub fn invert_value(&self, ch: usize, v: f64) -> f64 {
        let range = self.max[ch] - self.min[ch];
        if range > 0.0 {
            v * range + self.min[ch]
        } else {
            self.min[ch]
        }
    }

    /// Bounds of one channel as a single-channel `NormStats`.
    pub fn select_channel(&self, ch: usize) -> NormStats {
        NormStats {
            min: vec![self.min[ch]],
            max: vec![self.max[ch]],
        }
    }
}
