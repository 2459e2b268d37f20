use crate::mixer::ModelParams;
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per tensor in the
/// canonical [`ModelParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a Mat>) -> Self {
        let m: Vec<Mat> = shapes.into_iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect();
        AdamState {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn for_model(config: AdamConfig, params: &ModelParams) -> Self {
        AdamState::new(config, params.tensors().into_iter().map(|(_, m)| m))
    }

    /// One update of every tensor in `params` from the matching `grads`.
    pub fn step(&mut self, params: Vec<&mut Mat>, grads: Vec<&Mat>) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient count mismatch");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.shape(), g.shape(), "adam: gradient shape mismatch");
            let (p, g) = (p.as_mut_slice(), g.as_slice());
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub fn step_model(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let g = grads.tensors().into_iter().map(|(_, m)| m).collect();
        self.step(params.tensors_mut(), g);
    }
}
