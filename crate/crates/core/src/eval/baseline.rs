use crate::error::{Error, Result};
use crate::grid::GridMap;

/// Last observed map.
pub fn persistence(history: &[GridMap]) -> Result<GridMap> {
    history
        .last()
        .cloned()
        .ok_or_else(|| Error::data("persistence needs at least one map of history"))
}

/// Mean of all maps in `history` at the same phase as the step after it.
pub fn historical_average(history: &[GridMap], period: usize) -> Result<GridMap> {
    if period == 0 {
        return Err(Error::config("historical-average period must be at least 1"));
    }
    if history.len() < period {
        return Err(Error::data(format!(
            "historical average with period {period} needs at least {period} maps, got {}",
            history.len()
        )));
    }
    let first = &history[history.len() - period];
    let mut sum = vec![0.0; first.values().len()];
    let mut n = 0usize;
    let mut i = history.len();
    while i >= period {
        i -= period;
        for (s, v) in sum.iter_mut().zip(history[i].values()) {
            *s += v;
        }
        n += 1;
    }
    let (h, w, d) = first.dims();
    GridMap::new(h, w, d, sum.into_iter().map(|s| s / n as f64).collect())
}
