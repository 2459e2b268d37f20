//! `STGRID1` binary grid files.
//!
//! Layout (little-endian): magic `STGRID1` (7 bytes); u64 height, width,
//! channels, steps, interval_seconds; f64 lat_min, lat_max, lon_min, lon_max;
//! then `steps * height * width * channels` f64 values in (t, h, w, d) order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridMap;

pub const MAGIC: &[u8; 7] = b"STGRID1";
pub const HEADER_LEN: usize = 7 + 5 * 8 + 4 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox {
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
        }
    }
}

/// A time series of equally shaped maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub interval_seconds: u64,
    pub bbox: BoundingBox,
    pub maps: Vec<GridMap>,
}

impl GridDataset {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        interval_seconds: u64,
        bbox: BoundingBox,
        maps: Vec<GridMap>,
    ) -> Result<Self> {
        if let Some((t, m)) = maps
            .iter()
            .enumerate()
            .find(|(_, m)| m.dims() != (height, width, channels))
        {
            return Err(Error::data(format!(
                "map {t} is {:?}, dataset is {height}x{width}x{channels}",
                m.dims()
            )));
        }
        Ok(GridDataset {
            height,
            width,
            channels,
            interval_seconds,
            bbox,
            maps,
        })
    }

    pub fn steps(&self) -> usize {
        self.maps.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.height * self.width * self.channels * self.maps.len();
        let mut out = Vec::with_capacity(HEADER_LEN + n * 8);
        out.extend_from_slice(MAGIC);
        for v in [
            self.height,
            self.width,
            self.channels,
            self.maps.len(),
            self.interval_seconds as usize,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let b = &self.bbox;
        for v in [b.lat_min, b.lat_max, b.lon_min, b.lon_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in &self.maps {
            for v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format(0, "not an STGRID1 file (bad magic)"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                bytes.len() as u64,
                format!("header truncated: expected {HEADER_LEN} bytes, file has {}", bytes.len()),
            ));
        }
        let word = |i: usize| {
            let at = MAGIC.len() + i * 8;
            <[u8; 8]>::try_from(&bytes[at..at + 8]).unwrap()
        };
        let [h, w, d, t, interval] = [0, 1, 2, 3, 4].map(|i| u64::from_le_bytes(word(i)));
        let [lat_min, lat_max, lon_min, lon_max] = [5, 6, 7, 8].map(|i| f64::from_le_bytes(word(i)));
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::format(
                MAGIC.len() as u64,
                format!("degenerate grid shape {h}x{w}x{d}"),
            ));
        }
        let expected = [h, w, d, t]
            .iter()
            .try_fold(1u64, |acc, &v| acc.checked_mul(v))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::format(MAGIC.len() as u64, "header sizes overflow"))?;
        if bytes.len() as u64 != expected {
            return Err(Error::format(
                bytes.len().min(expected as usize) as u64,
                format!(
                    "expected {expected} bytes for {t} maps of {h}x{w}x{d}, file has {}",
                    bytes.len()
                ),
            ));
        }
        let (h, w, d) = (h as usize, w as usize, d as usize);
        let cell = h * w * d;
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let maps = values
            .chunks_exact(cell)
            .map(|c| GridMap::new(h, w, d, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        GridDataset::new(
            h,
            w,
            d,
            interval,
            BoundingBox {
                lat_min,
                lat_max,
                lon_min,
                lon_max,
            },
            maps,
        )
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        GridDataset::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(h: usize, w: usize, d: usize, t: usize) -> GridDataset {
        let maps = (0..t)
            .map(|s| GridMap::new(h, w, d, (0..h * w * d).map(|i| (s * 1000 + i) as f64 * 0.5).collect()).unwrap())
            .collect();
        GridDataset::new(h, w, d, 1800, BoundingBox::default(), maps).unwrap()
    }

    #[test]
    fn file_size_matches_layout() {
        assert_eq!(HEADER_LEN, 79);
        assert_eq!(dataset(10, 20, 2, 100).to_bytes().len(), 79 + 100 * 10 * 20 * 2 * 8);
    }

    #[test]
    fn values_are_t_h_w_d_ordered() {
        let mut ds = dataset(2, 2, 2, 1);
        ds.maps[0] = GridMap::zeros(2, 2, 2);
        ds.maps[0].set(1, 0, 1, 7.0);
        let bytes = ds.to_bytes();
        let at = HEADER_LEN + 8 * (2 * 2 + 1);
        assert_eq!(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()), 7.0);
    }

    #[test]
    fn rejects_damage() {
        let bytes = dataset(2, 3, 2, 4).to_bytes();
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(GridDataset::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let err = GridDataset::from_bytes(&bytes[..bytes.len() - 8]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&bytes.len().to_string()) && msg.contains(&(bytes.len() - 8).to_string()), "{msg}");
        assert!(GridDataset::from_bytes(&bytes[..20]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..4, w in 1usize..4, d in 1usize..3, t in 0usize..5, seed in any::<u64>()) {
            let mut ds = dataset(h, w, d, t);
            ds.interval_seconds = seed % 100_000;
            ds.bbox = BoundingBox { lat_min: -1.5, lat_max: 2.25, lon_min: 10.0, lon_max: 11.0 };
            let back = GridDataset::from_bytes(&ds.to_bytes()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
