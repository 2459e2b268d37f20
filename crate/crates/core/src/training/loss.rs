use crate::error::{Error, Result};

/// `(Σ |ŷ − y|^q)^(1/q)` over every entry of every record in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossConfig {
    pub q: u8,
    /// Sum the q = 1 and q = 2 losses, ignoring `q`.
    pub combine: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { q: 2, combine: false }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q != 1 && self.q != 2 {
            return Err(Error::config(format!("loss_q must be 1 or 2, got {}", self.q)));
        }
        Ok(())
    }
}

/// Loss value and its gradient with respect to `pred`.
///
/// `pred` and `target` are flat concatenations of all records in the batch.
/// The q = 1 gradient uses `sign(0) = 0`; the q = 2 gradient is zero when
/// the loss is zero.
pub fn loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if pred.len() != target.len() {
        return Err(Error::data(format!(
            "loss over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let resid: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let mut grad = vec![0.0; resid.len()];
    let mut value = 0.0;
    if cfg.combine || cfg.q == 1 {
        value += resid.iter().map(|r| r.abs()).sum::<f64>();
        for (g, r) in grad.iter_mut().zip(&resid) {
            *g += if *r > 0.0 {
                1.0
            } else if *r < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    }
    if cfg.combine || cfg.q == 2 {
        let norm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        value += norm;
        if norm > 0.0 {
            for (g, r) in grad.iter_mut().zip(&resid) {
                *g += r / norm;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    const L1: LossConfig = LossConfig { q: 1, combine: false };
    const L2: LossConfig = LossConfig { q: 2, combine: false };

    #[test]
    fn closed_forms() {
        let target = [0.0; 3];
        let pred = [1.0, -2.0, 3.0];
        assert_eq!(loss(&pred, &target, &L1).unwrap().0, 6.0);
        assert!((loss(&pred, &target, &L2).unwrap().0 - 14f64.sqrt()).abs() < 1e-15);
        let both = LossConfig { q: 2, combine: true };
        assert!((loss(&pred, &target, &both).unwrap().0 - (6.0 + 14f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn zero_iff_equal() {
        let x = [0.5, 1.5, -2.0];
        for cfg in [L1, L2] {
            let (v, g) = loss(&x, &x, &cfg).unwrap();
            assert_eq!(v, 0.0);
            assert!(g.iter().all(|&v| v == 0.0));
        }
        assert!(loss(&[0.5, 1.5, -1.9], &x, &L2).unwrap().0 > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = [0.3, -1.1, 2.0, 0.7];
        let pred = [1.0, -0.4, 1.2, 0.9];
        for cfg in [L1, L2, LossConfig { q: 1, combine: true }] {
            let (_, g) = loss(&pred, &target, &cfg).unwrap();
            for i in 0..pred.len() {
                let h = 1e-6;
                let mut up = pred;
                up[i] += h;
                let mut dn = pred;
                dn[i] -= h;
                let fd = (loss(&up, &target, &cfg).unwrap().0 - loss(&dn, &target, &cfg).unwrap().0)
                    / (2.0 * h);
                let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs());
                assert!(rel < 1e-6, "{cfg:?} coord {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn rejects_bad_q_and_shapes() {
        assert!(matches!(
            loss(&[1.0], &[1.0], &LossConfig { q: 3, combine: false }),
            Err(Error::Config(_))
        ));
        assert!(matches!(loss(&[1.0], &[1.0, 2.0], &L1), Err(Error::Data(_))));
    }
}
