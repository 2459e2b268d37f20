use crate::error::{Error, Result};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::data(format!(
            "{} predictions against {} ground-truth values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("no values to score"));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Coefficient of determination. `None` when the ground truth has zero variance.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}
