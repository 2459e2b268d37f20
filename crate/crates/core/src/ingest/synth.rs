//! Seeded synthetic flow grids.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::GridMap;

use super::stgrid::{BoundingBox, GridDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// One level per channel, the same in every cell and step.
    Constant,
    /// Per-cell sinusoid with period `period` steps.
    Periodic,
    /// Per-cell linear ramp.
    Trend,
    /// Neighbour smoothing plus a random walk.
    Diffusive,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Constant => "constant",
            SynthKind::Periodic => "periodic",
            SynthKind::Trend => "trend",
            SynthKind::Diffusive => "diffusive",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(SynthKind::Constant),
            "periodic" => Ok(SynthKind::Periodic),
            "trend" => Ok(SynthKind::Trend),
            "diffusive" => Ok(SynthKind::Diffusive),
            _ => Err(Error::config(format!(
                "unknown synthetic kind {s:?} (expected constant, periodic, trend or diffusive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub steps: usize,
    pub period: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Periodic,
            height: 10,
            width: 20,
            channels: 2,
            steps: 24 * 7 * 4,
            period: 24,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::config(format!(
                "synthetic grid {}x{}x{} must be non-empty",
                self.height, self.width, self.channels
            )));
        }
        if self.kind == SynthKind::Periodic && self.period == 0 {
            return Err(Error::config("periodic data needs period >= 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Generate a dataset; values are clamped at zero.
pub fn synth(spec: &SynthSpec) -> Result<GridDataset> {
    spec.validate()?;
    let (h, w, d) = (spec.height, spec.width, spec.channels);
    let n = h * w * d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..6.0)).collect();
    let mut maps = Vec::with_capacity(spec.steps);
    match spec.kind {
        SynthKind::Constant => {
            let m = GridMap::new(h, w, d, (0..n).map(|i| base[i % d]).collect())?;
            maps.resize(spec.steps, m);
        }
        SynthKind::Periodic => {
            let amp: Vec<f64> = base.iter().map(|b| b * rng.random_range(0.3..0.9)).collect();
            let phase: Vec<f64> = (0..n)
                .map(|i| {
                    let (cell, ch) = (i / d, i % d);
                    let (r, c) = (cell / w, cell % w);
                    PI * (r as f64 / h as f64 + 0.5 * c as f64 / w as f64 + 0.5 * ch as f64)
                        + rng.random_range(-0.3..0.3)
                })
                .collect();
            let p = spec.period;
            for s in 0..spec.steps {
                let theta = 2.0 * PI * (s % p) as f64 / p as f64;
                let v = (0..n).map(|i| base[i] + amp[i] * (theta + phase[i]).sin()).collect();
                maps.push(GridMap::new(h, w, d, v)?);
            }
        }
        SynthKind::Trend => {
            let slope: Vec<f64> = base.iter().map(|b| b * rng.random_range(0.0..0.02)).collect();
            for s in 0..spec.steps {
                let v = (0..n).map(|i| base[i] + slope[i] * s as f64).collect();
                maps.push(GridMap::new(h, w, d, v)?);
            }
        }
        SynthKind::Diffusive => {
            let walk = Normal::new(0.0, 0.2).expect("valid normal");
            let mut cur = GridMap::new(h, w, d, base)?;
            for _ in 0..spec.steps {
                maps.push(cur.clone());
                let mut next = GridMap::zeros(h, w, d);
                for r in 0..h {
                    for c in 0..w {
                        for ch in 0..d {
                            let mut sum = cur.get(r, c, ch);
                            let mut k = 1.0;
                            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                                    sum += cur.get(rr as usize, cc as usize, ch);
                                    k += 1.0;
                                }
                            }
                            let v = sum / k + walk.sample(&mut rng);
                            next.set(r, c, ch, v.max(0.0));
                        }
                    }
                }
                cur = next;
            }
        }
    }
    if spec.noise > 0.0 {
        let noise = Normal::new(0.0, spec.noise).expect("validated noise");
        for m in &mut maps {
            for v in m.values_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    for m in &mut maps {
        for v in m.values_mut() {
            *v = v.max(0.0);
        }
    }
    GridDataset::new(h, w, d, 3600, BoundingBox::default(), maps)
}
