//! Central finite-difference oracle shared by the gradient tests.
#![allow(dead_code)]

use mlpst::mixer::{mixer_layer_bwd, mixer_layer_fwd, MixerLayerParams, MixerStack};
use mlpst::tensor::{
    gelu, gelu_grad, layernorm_bwd, layernorm_fwd, mlp_block_bwd, mlp_block_fwd, LayerNormParams,
    Mat, MlpBlockParams,
};
use mlpst::training::{loss, LossConfig};
use mlpst::{
    model_backward, model_forward, slice_at, GridMap, ModelConfig, ModelParams, TemporalConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FLOOR: f64 = 1e-7;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Relative errors of every checked coordinate, labelled by tensor.
#[derive(Debug, Default)]
pub struct GradReport {
    pub errors: Vec<(String, f64)>,
}

impl GradReport {
    pub fn extend(&mut self, other: GradReport) {
        self.errors.extend(other.errors);
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn worst(&self) -> (String, f64) {
        self.errors
            .iter()
            .cloned()
            .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }

    pub fn fraction_within(&self, tol: f64) -> f64 {
        let ok = self.errors.iter().filter(|(_, e)| *e < tol).count();
        ok as f64 / self.errors.len().max(1) as f64
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn dot(a: &Mat, b: &Mat) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Compare `analytic[k]` with Richardson-extrapolated central differences
/// of `f` over every scalar of the tensors `view` exposes.
pub fn check<T: Clone>(
    base: &T,
    names: &[String],
    view: fn(&mut T) -> Vec<&mut Mat>,
    f: impl Fn(&T) -> f64,
    analytic: &[Mat],
) -> GradReport {
    let mut report = GradReport::default();
    let mut probe = base.clone();
    let sizes: Vec<usize> = view(&mut probe).iter().map(|m| m.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "one analytic gradient per tensor");
    for (k, &n) in sizes.iter().enumerate() {
        assert_eq!(analytic[k].len(), n, "gradient shape for {}", names[k]);
        for i in 0..n {
            let orig = view(&mut probe)[k].as_slice()[i];
            let mut central = |h: f64| {
                view(&mut probe)[k].as_mut_slice()[i] = orig + h;
                let up = f(&probe);
                view(&mut probe)[k].as_mut_slice()[i] = orig - h;
                let down = f(&probe);
                view(&mut probe)[k].as_mut_slice()[i] = orig;
                (up - down) / (2.0 * h)
            };
            let (coarse, fine) = (central(STEP), central(STEP / 2.0));
            let numeric = (4.0 * fine - coarse) / 3.0;
            report
                .errors
                .push((names[k].clone(), rel_err(analytic[k].as_slice()[i], numeric)));
        }
    }
    report
}

fn names(prefix: &str, parts: &[&str]) -> Vec<String> {
    parts.iter().map(|p| format!("{prefix}.{p}")).collect()
}

pub fn check_gelu(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    for _ in 0..20 {
        let x: f64 = r.random_range(-4.0..4.0);
        let numeric = (gelu(x + STEP) - gelu(x - STEP)) / (2.0 * STEP);
        report.errors.push(("gelu".into(), rel_err(gelu_grad(x), numeric)));
    }
    report
}

type LnCase = (Mat, LayerNormParams);

fn ln_view(c: &mut LnCase) -> Vec<&mut Mat> {
    vec![&mut c.0, &mut c.1.gamma, &mut c.1.beta]
}

pub fn check_layernorm(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let (rows, cols) = (3, 5);
    let mut ln = LayerNormParams::identity(cols);
    ln.gamma = random_mat(1, cols, &mut r);
    ln.beta = random_mat(1, cols, &mut r);
    let case = (random_mat(rows, cols, &mut r), ln);
    let proj = random_mat(rows, cols, &mut r);
    let (_, cache) = layernorm_fwd(&case.0, &case.1).unwrap();
    let mut g = case.1.zeros_like();
    let dx = layernorm_bwd(&proj, &cache, &case.1, &mut g).unwrap();
    check(
        &case,
        &names("layernorm", &["x", "gamma", "beta"]),
        ln_view,
        |c| dot(&proj, &layernorm_fwd(&c.0, &c.1).unwrap().0),
        &[dx, g.gamma, g.beta],
    )
}

type BlockCase = (Mat, MlpBlockParams, LayerNormParams);

fn block_view(c: &mut BlockCase) -> Vec<&mut Mat> {
    vec![
        &mut c.0,
        &mut c.1.w_in,
        &mut c.1.b_in,
        &mut c.1.w_out,
        &mut c.1.b_out,
        &mut c.2.gamma,
        &mut c.2.beta,
    ]
}

pub fn check_mlp_block(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let (rows, dim, hidden) = (4, 3, 5);
    let p = MlpBlockParams {
        w_in: random_mat(dim, hidden, &mut r),
        b_in: random_mat(1, hidden, &mut r),
        w_out: random_mat(hidden, dim, &mut r),
        b_out: random_mat(1, dim, &mut r),
    };
    let mut ln = LayerNormParams::identity(dim);
    ln.gamma = random_mat(1, dim, &mut r);
    ln.beta = random_mat(1, dim, &mut r);
    let case = (random_mat(rows, dim, &mut r), p, ln);
    let proj = random_mat(rows, dim, &mut r);
    let (_, cache) = mlp_block_fwd(&case.0, &case.1, &case.2).unwrap();
    let mut g = case.1.zeros_like();
    let mut gl = case.2.zeros_like();
    let dx = mlp_block_bwd(&proj, &cache, &case.1, &case.2, &mut g, &mut gl).unwrap();
    check(
        &case,
        &names("mlp_block", &["x", "w_in", "b_in", "w_out", "b_out", "gamma", "beta"]),
        block_view,
        |c| dot(&proj, &mlp_block_fwd(&c.0, &c.1, &c.2).unwrap().0),
        &[dx, g.w_in, g.b_in, g.w_out, g.b_out, gl.gamma, gl.beta],
    )
}

fn layer_mats(p: &mut MixerLayerParams) -> Vec<&mut Mat> {
    vec![
        &mut p.token_mlp.w_in,
        &mut p.token_mlp.b_in,
        &mut p.token_mlp.w_out,
        &mut p.token_mlp.b_out,
        &mut p.channel_mlp.w_in,
        &mut p.channel_mlp.b_in,
        &mut p.channel_mlp.w_out,
        &mut p.channel_mlp.b_out,
        &mut p.ln_token.gamma,
        &mut p.ln_token.beta,
        &mut p.ln_channel.gamma,
        &mut p.ln_channel.beta,
    ]
}

const LAYER_PARTS: [&str; 12] = [
    "token.w_in",
    "token.b_in",
    "token.w_out",
    "token.b_out",
    "channel.w_in",
    "channel.b_in",
    "channel.w_out",
    "channel.b_out",
    "ln_token.gamma",
    "ln_token.beta",
    "ln_channel.gamma",
    "ln_channel.beta",
];

fn randomize_layer(p: &mut MixerLayerParams, r: &mut ChaCha8Rng) {
    for m in layer_mats(p) {
        *m = random_mat(m.rows(), m.cols(), r);
    }
}

type LayerCase = (Mat, MixerLayerParams);

fn layer_view(c: &mut LayerCase) -> Vec<&mut Mat> {
    let mut v = vec![&mut c.0];
    v.extend(layer_mats(&mut c.1));
    v
}

pub fn check_mixer_layer(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let (tokens, channels) = (3, 4);
    let mut p = MixerLayerParams::init(tokens, channels, 5, 6, &mut r);
    randomize_layer(&mut p, &mut r);
    let case = (random_mat(tokens, channels, &mut r), p);
    let proj = random_mat(tokens, channels, &mut r);
    let (_, cache) = mixer_layer_fwd(&case.0, &case.1).unwrap();
    let mut g = case.1.zeros_like();
    let dx = mixer_layer_bwd(&proj, &cache, &case.1, &mut g).unwrap();
    let mut analytic = vec![dx];
    analytic.extend(layer_mats(&mut g).into_iter().map(|m| m.clone()));
    let mut n = vec!["mixer_layer.x".to_string()];
    n.extend(names("mixer_layer", &LAYER_PARTS));
    check(
        &case,
        &n,
        layer_view,
        |c| dot(&proj, &mixer_layer_fwd(&c.0, &c.1).unwrap().0),
        &analytic,
    )
}

type StackCase = (Mat, MixerStack);

fn stack_view(c: &mut StackCase) -> Vec<&mut Mat> {
    let mut v = vec![&mut c.0];
    for l in &mut c.1.layers {
        v.extend(layer_mats(l));
    }
    v
}

/// A shared layer applied three times, so its gradient sums three uses.
pub fn check_shared_stack(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let (tokens, channels) = (3, 4);
    let mut s = MixerStack::init(tokens, channels, 4, 4, 3, true, &mut r);
    for l in &mut s.layers {
        randomize_layer(l, &mut r);
        // Keep activations moderate across three applications.
        for m in [&mut l.token_mlp.w_out, &mut l.channel_mlp.w_out] {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= 0.3);
        }
    }
    let case = (random_mat(tokens, channels, &mut r), s);
    let proj = random_mat(tokens, channels, &mut r);
    let (_, cache) = case.1.forward(&case.0).unwrap();
    let mut g = case.1.zeros_like();
    let dx = case.1.backward(&proj, &cache, &mut g).unwrap();
    let mut analytic = vec![dx];
    let mut n = vec!["stack.x".to_string()];
    for l in &mut g.layers {
        analytic.extend(layer_mats(l).into_iter().map(|m| m.clone()));
        n.extend(names("stack", &LAYER_PARTS));
    }
    check(
        &case,
        &n,
        stack_view,
        |c| dot(&proj, &c.1.forward(&c.0).unwrap().0),
        &analytic,
    )
}

fn pred_view(m: &mut Mat) -> Vec<&mut Mat> {
    vec![m]
}

pub fn check_loss(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let target: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let pred = random_mat(1, 8, &mut r);
    let mut report = GradReport::default();
    for cfg in [
        LossConfig { q: 1, combine: false },
        LossConfig { q: 2, combine: false },
        LossConfig { q: 2, combine: true },
    ] {
        let (_, g) = loss(pred.as_slice(), &target, &cfg).unwrap();
        report.extend(check(
            &pred,
            &[format!("loss.q{}{}", cfg.q, if cfg.combine { "+" } else { "" })],
            pred_view,
            |p| loss(p.as_slice(), &target, &cfg).unwrap().0,
            &[Mat::row_vector(g)],
        ));
    }
    report
}

pub fn check_primitives(seed: u64) -> GradReport {
    let mut report = check_gelu(seed);
    report.extend(check_layernorm(seed));
    report.extend(check_mlp_block(seed));
    report.extend(check_mixer_layer(seed));
    report.extend(check_shared_stack(seed));
    report.extend(check_loss(seed));
    report
}

/// 4x4x2 grid, 2x2 patches, C_S = 4, two layers, (t, p, c) = (2, 2, 2) over six steps.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        height: 4,
        width: 4,
        channels: 2,
        patch: 2,
        spatial_channels: 4,
        temporal_channels: 4,
        expansion: 4,
        depth: 2,
        temporal: TemporalConfig::blocks(2, 2, 2),
        ..ModelConfig::default()
    }
}

fn model_view(p: &mut ModelParams) -> Vec<&mut Mat> {
    p.tensors_mut()
}

/// Every model parameter against finite differences of a random projection
/// of the prediction. Weights are perturbed away from their structured
/// initial values so that no gradient is trivially zero.
pub fn check_model(cfg: &ModelConfig, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut params = ModelParams::init(cfg, seed).unwrap();
    for m in params.tensors_mut() {
        for v in m.as_mut_slice() {
            *v += r.random_range(-0.2..0.2);
        }
    }
    let window = cfg.temporal.min_anchor();
    let maps: Vec<GridMap> = (0..window)
        .map(|_| {
            let v = (0..cfg.height * cfg.width * cfg.channels)
                .map(|_| r.random_range(0.0..1.0))
                .collect();
            GridMap::new(cfg.height, cfg.width, cfg.channels, v).unwrap()
        })
        .collect();
    let deps = slice_at(&maps, window, &cfg.temporal).unwrap();
    let proj: Vec<f64> = (0..cfg.out_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let (pred, cache) = model_forward(&deps, cfg, &params).unwrap();
    let upstream = GridMap::new(pred.height(), pred.width(), pred.channels(), proj.clone()).unwrap();
    let grads = model_backward(&cache, &upstream, cfg, &params).unwrap();
    let names: Vec<String> = grads.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Mat> = grads.tensors().into_iter().map(|(_, m)| m.clone()).collect();
    check(
        &params,
        &names,
        model_view,
        |p| {
            let out = model_forward(&deps, cfg, p).unwrap().0;
            out.values().iter().zip(&proj).map(|(a, b)| a * b).sum()
        },
        &analytic,
    )
}
