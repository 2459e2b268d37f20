use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{MixerStack, StackCache};
use crate::error::{Error, Result};
use crate::grid::{check_divisible, patchify, GridMap};
use crate::tensor::init::init_with;
use crate::tensor::{InitScheme, Mat};
use crate::temporal::{Branch, Dependencies, TemporalConfig};

/// Which parts of the architecture are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// No SpatialMixer stack: per-patch FC and flatten only.
    MlpAt,
    /// No TemporalMixers: branch embeddings go straight to fusion.
    MlpSa,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::MlpAt => "mlp_at",
            Variant::MlpSa => "mlp_sa",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "mlpst" => Ok(Variant::Full),
            "mlp_at" | "mlp-at" => Ok(Variant::MlpAt),
            "mlp_sa" | "mlp-sa" => Ok(Variant::MlpSa),
            other => Err(Error::config(format!(
                "variant must be full, mlp_at or mlp_sa, got {other:?}"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
    /// `C_S`: per-patch FC output width and spatial channel count.
    pub spatial_channels: usize,
    /// `C_T`: hidden width of the temporal channel-mixing MLPs.
    pub temporal_channels: usize,
    /// Hidden width of the spatial MLPs and the temporal token-mixing MLPs.
    pub expansion: usize,
    /// MixerLayer applications per mixer (`N`).
    pub depth: usize,
    pub temporal: TemporalConfig,
    pub variant: Variant,
    /// One MixerLayer parameter set reused for all `depth` applications.
    pub share_layers: bool,
    /// One TemporalMixer for all three branches (needs equal branch lengths).
    pub share_temporal: bool,
    /// Predict only this input channel instead of all of them.
    pub output_channel: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            height: 10,
            width: 20,
            channels: 2,
            patch: 2,
            spatial_channels: 20,
            temporal_channels: 20,
            expansion: 8,
            depth: 8,
            temporal: TemporalConfig::default(),
            variant: Variant::Full,
            share_layers: true,
            share_temporal: false,
            output_channel: None,
        }
    }
}

impl ModelConfig {
    /// `N_P = HW / P²`.
    pub fn n_patches(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// `P²·d`.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// `d_T = N_P · C_S`.
    pub fn embed_dim(&self) -> usize {
        self.n_patches() * self.spatial_channels
    }

    pub fn out_channels(&self) -> usize {
        if self.output_channel.is_some() {
            1
        } else {
            self.channels
        }
    }

    pub fn out_dim(&self) -> usize {
        self.height * self.width * self.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("spatial_channels", self.spatial_channels),
            ("temporal_channels", self.temporal_channels),
            ("expansion", self.expansion),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        check_divisible(self.height, self.width, self.patch)?;
        self.temporal.validate()?;
        if let Some(c) = self.output_channel {
            if c >= self.channels {
                return Err(Error::config(format!(
                    "output_channel {c} out of range for {} channels",
                    self.channels
                )));
            }
        }
        if self.share_temporal {
            let lens: Vec<usize> = self.temporal.active().map(|b| self.temporal.len(b)).collect();
            if lens.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::config(format!(
                    "share_temporal needs equal branch lengths, got {lens:?}"
                )));
            }
        }
        Ok(())
    }

    fn has_spatial_mixer(&self) -> bool {
        self.variant != Variant::MlpAt
    }

    fn has_temporal_mixer(&self) -> bool {
        self.variant != Variant::MlpSa
    }
}

/// TemporalMixer parameters for the three branches.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalStacks {
    /// One stack per active branch, `None` for inactive branches and for
    /// the `mlp_sa` variant.
    PerBranch([Option<MixerStack>; 3]),
    Shared(MixerStack),
}

impl TemporalStacks {
    pub fn get(&self, b: Branch) -> Option<&MixerStack> {
        match self {
            TemporalStacks::PerBranch(s) => s[b.index()].as_ref(),
            TemporalStacks::Shared(s) => Some(s),
        }
    }

    fn get_mut(&mut self, b: Branch) -> Option<&mut MixerStack> {
        match self {
            TemporalStacks::PerBranch(s) => s[b.index()].as_mut(),
            TemporalStacks::Shared(s) => Some(s),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            TemporalStacks::PerBranch(s) => TemporalStacks::PerBranch([
                s[0].as_ref().map(MixerStack::zeros_like),
                s[1].as_ref().map(MixerStack::zeros_like),
                s[2].as_ref().map(MixerStack::zeros_like),
            ]),
            TemporalStacks::Shared(s) => TemporalStacks::Shared(s.zeros_like()),
        }
    }
}

/// Every trainable tensor of the model. The same type doubles as the
/// gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `P²·d × C_S`.
    pub patch_fc_w: Mat,
    /// `1 × C_S`.
    pub patch_fc_b: Mat,
    /// Shared across every input time step; `None` for `mlp_at`.
    pub spatial: Option<MixerStack>,
    pub temporal: TemporalStacks,
    /// `1 × d_T` each, indexed by [`Branch::index`].
    pub fusion: [Mat; 3],
    /// `d_T × H·W·d_out`.
    pub head_w: Mat,
    pub head_b: Mat,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_t = cfg.embed_dim();
        let patch_fc_w = init_with(cfg.patch_dim(), cfg.spatial_channels, &mut rng, InitScheme::UniformFanIn);
        let patch_fc_b = Mat::zeros(1, cfg.spatial_channels);
        let spatial = cfg.has_spatial_mixer().then(|| {
            MixerStack::init(
                cfg.n_patches(),
                cfg.spatial_channels,
                cfg.expansion,
                cfg.expansion,
                cfg.depth,
                cfg.share_layers,
                &mut rng,
            )
        });
        let mut temporal_stack = |len: usize| {
            MixerStack::init(
                len,
                d_t,
                cfg.expansion,
                cfg.temporal_channels,
                cfg.depth,
                cfg.share_layers,
                &mut rng,
            )
        };
        let temporal = if !cfg.has_temporal_mixer() {
            TemporalStacks::PerBranch([None, None, None])
        } else if cfg.share_temporal {
            let len = cfg.temporal.active().map(|b| cfg.temporal.len(b)).next().unwrap_or(0);
            TemporalStacks::Shared(temporal_stack(len))
        } else {
            let mut stacks = [None, None, None];
            for b in Branch::ALL {
                let len = cfg.temporal.len(b);
                if len > 0 {
                    stacks[b.index()] = Some(temporal_stack(len));
                }
            }
            TemporalStacks::PerBranch(stacks)
        };
        let fusion = [
            init_with(1, d_t, &mut rng, InitScheme::Ones),
            init_with(1, d_t, &mut rng, InitScheme::Ones),
            init_with(1, d_t, &mut rng, InitScheme::Ones),
        ];
        let head_w = init_with(d_t, cfg.out_dim(), &mut rng, InitScheme::UniformFanIn);
        let head_b = Mat::zeros(1, cfg.out_dim());
        Ok(ModelParams {
            patch_fc_w,
            patch_fc_b,
            spatial,
            temporal,
            fusion,
            head_w,
            head_b,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            patch_fc_w: Mat::zeros(self.patch_fc_w.rows(), self.patch_fc_w.cols()),
            patch_fc_b: Mat::zeros(1, self.patch_fc_b.cols()),
            spatial: self.spatial.as_ref().map(MixerStack::zeros_like),
            temporal: self.temporal.zeros_like(),
            fusion: [
                Mat::zeros(1, self.fusion[0].cols()),
                Mat::zeros(1, self.fusion[1].cols()),
                Mat::zeros(1, self.fusion[2].cols()),
            ],
            head_w: Mat::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: Mat::zeros(1, self.head_b.cols()),
        }
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = vec![
            ("spatial.patch_fc.w".to_string(), &self.patch_fc_w),
            ("spatial.patch_fc.b".to_string(), &self.patch_fc_b),
        ];
        if let Some(s) = &self.spatial {
            s.tensors("spatial.mixer", &mut out);
        }
        match &self.temporal {
            TemporalStacks::PerBranch(stacks) => {
                for b in Branch::ALL {
                    if let Some(s) = &stacks[b.index()] {
                        s.tensors(&format!("temporal.{}", b.name()), &mut out);
                    }
                }
            }
            TemporalStacks::Shared(s) => s.tensors("temporal.shared", &mut out),
        }
        for b in Branch::ALL {
            out.push((format!("fusion.{}", b.name()), &self.fusion[b.index()]));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.patch_fc_w, &mut self.patch_fc_b];
        if let Some(s) = &mut self.spatial {
            s.tensors_mut(&mut out);
        }
        match &mut self.temporal {
            TemporalStacks::PerBranch(stacks) => {
                for s in stacks.iter_mut().flatten() {
                    s.tensors_mut(&mut out);
                }
            }
            TemporalStacks::Shared(s) => s.tensors_mut(&mut out),
        }
        for f in &mut self.fusion {
            out.push(f);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let src = other.tensors();
        let dst = self.tensors_mut();
        assert_eq!(src.len(), dst.len(), "parameter sets differ in structure");
        for (d, (_, s)) in dst.into_iter().zip(src) {
            d.add_assign(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Check tensor names and shapes against what `cfg` would build.
    pub fn check_matches(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = ModelParams::init(cfg, 0)?;
        let a = reference.tensors();
        let b = self.tensors();
        if a.len() != b.len() {
            return Err(Error::config(format!(
                "model has {} tensors but the configuration implies {}",
                b.len(),
                a.len()
            )));
        }
        for ((na, ma), (nb, mb)) in a.iter().zip(&b) {
            if na != nb || ma.shape() != mb.shape() {
                return Err(Error::config(format!(
                    "tensor {nb} {:?} does not match configured {na} {:?}",
                    mb.shape(),
                    ma.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpatialCache {
    patches: Mat,
    stack: Option<StackCache>,
}

/// Patchify, per-patch FC, MixerLayer stack, flatten to a `d_T` embedding.
pub fn spatial_mixer_fwd(
    x: &GridMap,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<(Vec<f64>, SpatialCache)> {
    if x.dims() != (cfg.height, cfg.width, cfg.channels) {
        return Err(Error::config(format!(
            "model expects {}x{}x{} grid maps, got {:?}",
            cfg.height,
            cfg.width,
            cfg.channels,
            x.dims()
        )));
    }
    let patches = patchify(x, cfg.patch)?.tokens;
    let mut v = patches.matmul(&params.patch_fc_w);
    v.add_row_broadcast(&params.patch_fc_b);
    let (y, stack) = match &params.spatial {
        Some(s) => {
            let (y, c) = s.forward(&v)?;
            (y, Some(c))
        }
        None => (v, None),
    };
    Ok((y.into_vec(), SpatialCache { patches, stack }))
}

fn spatial_mixer_bwd(
    de: &[f64],
    cache: &SpatialCache,
    cfg: &ModelConfig,
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Result<()> {
    let dy = Mat::from_vec(cfg.n_patches(), cfg.spatial_channels, de.to_vec());
    let dv = match (&params.spatial, &cache.stack, &mut grads.spatial) {
        (Some(s), Some(c), Some(g)) => s.backward(&dy, c, g)?,
        (None, None, None) => dy,
        _ => return Err(Error::internal("spatial cache does not match parameters")),
    };
    grads.patch_fc_b.add_assign(&dv.col_sums());
    grads.patch_fc_w.add_assign(&cache.patches.t_matmul(&dv));
    Ok(())
}

/// Run a branch's `len × d_T` embedding sequence through its TemporalMixer.
pub fn temporal_mixer_fwd(e_seq: &Mat, stack: &MixerStack) -> Result<(Mat, StackCache)> {
    if let Some(layer) = stack.layers.first() {
        if e_seq.shape() != (layer.tokens(), layer.channels()) {
            return Err(Error::config(format!(
                "temporal mixer configured for {} steps x {} features, got {:?}",
                layer.tokens(),
                layer.channels(),
                e_seq.shape()
            )));
        }
    }
    stack.forward(e_seq)
}

/// `ê = Σ_b w_b ⊙ ê_b[last]` over the branches that are present.
pub fn fuse(lasts: [Option<&[f64]>; 3], weights: &[Mat; 3]) -> Result<Vec<f64>> {
    let dim = weights[0].cols();
    let mut out = vec![0.0; dim];
    for (last, w) in lasts.iter().zip(weights) {
        if let Some(e) = last {
            if e.len() != dim || w.cols() != dim {
                return Err(Error::config(format!(
                    "fusion over {dim} features given a branch of {}",
                    e.len()
                )));
            }
            crate::tensor::counter::add(dim);
            for ((o, x), wi) in out.iter_mut().zip(e.iter()).zip(w.as_slice()) {
                *o += wi * x;
            }
        }
    }
    Ok(out)
}

/// Affine map from the fused embedding to an `H × W × d_out` grid.
pub fn output_head(fused: &[f64], params: &ModelParams, cfg: &ModelConfig) -> Result<GridMap> {
    if fused.len() != params.head_w.rows() {
        return Err(Error::config(format!(
            "output head expects {} features, got {}",
            params.head_w.rows(),
            fused.len()
        )));
    }
    let mut y = Mat::row_vector(fused.to_vec()).matmul(&params.head_w);
    y.add_row_broadcast(&params.head_b);
    GridMap::new(cfg.height, cfg.width, cfg.out_channels(), y.into_vec())
}

#[derive(Debug, Clone)]
struct BranchCache {
    spatial: Vec<SpatialCache>,
    temporal: Option<StackCache>,
    last: Vec<f64>,
    len: usize,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    branches: [Option<BranchCache>; 3],
    fused: Vec<f64>,
    out_dim: usize,
}

/// Full forward pass on pre-sliced dependencies.
pub fn model_forward(
    deps: &Dependencies<'_>,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<(GridMap, ForwardCache)> {
    let d_t = cfg.embed_dim();
    let mut branches: [Option<BranchCache>; 3] = [None, None, None];
    for b in Branch::ALL {
        let maps = deps.branch(b);
        if maps.len() != cfg.temporal.len(b) {
            return Err(Error::config(format!(
                "{} branch expects {} steps, got {}",
                b.name(),
                cfg.temporal.len(b),
                maps.len()
            )));
        }
        if maps.is_empty() {
            continue;
        }
        let mut e_seq = Mat::zeros(maps.len(), d_t);
        let mut spatial = Vec::with_capacity(maps.len());
        for (i, m) in maps.iter().enumerate() {
            let (e, c) = spatial_mixer_fwd(m, cfg, params)?;
            e_seq.row_mut(i).copy_from_slice(&e);
            spatial.push(c);
        }
        let (out, temporal) = match params.temporal.get(b) {
            Some(stack) => {
                let (y, c) = temporal_mixer_fwd(&e_seq, stack)?;
                (y, Some(c))
            }
            None => (e_seq, None),
        };
        branches[b.index()] = Some(BranchCache {
            spatial,
            temporal,
            last: out.row(out.rows() - 1).to_vec(),
            len: maps.len(),
        });
    }
    let lasts = [0, 1, 2].map(|i| branches[i].as_ref().map(|c| c.last.as_slice()));
    let fused = fuse(lasts, &params.fusion)?;
    let pred = output_head(&fused, params, cfg)?;
    Ok((
        pred,
        ForwardCache {
            branches,
            fused,
            out_dim: cfg.out_dim(),
        },
    ))
}

/// Forward pass predicting the step right after `history`.
pub fn forecast(history: &[GridMap], cfg: &ModelConfig, params: &ModelParams) -> Result<GridMap> {
    let deps = crate::temporal::slice_dependencies(history, &cfg.temporal)?;
    Ok(model_forward(&deps, cfg, params)?.0)
}

/// Reverse pass; returns gradients for every parameter.
pub fn model_backward(
    cache: &ForwardCache,
    grad_pred: &GridMap,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    model_backward_into(cache, grad_pred.values(), cfg, params, &mut grads)?;
    Ok(grads)
}

/// Reverse pass accumulating into `grads`.
pub fn model_backward_into(
    cache: &ForwardCache,
    grad_pred: &[f64],
    cfg: &ModelConfig,
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Result<()> {
    let d_t = cfg.embed_dim();
    if cache.out_dim != params.head_w.cols()
        || grad_pred.len() != cache.out_dim
        || cache.fused.len() != d_t
        || params.head_w.rows() != d_t
    {
        return Err(Error::internal(
            "forward cache does not match these parameters or gradient",
        ));
    }
    let dp = Mat::row_vector(grad_pred.to_vec());
    grads.head_b.add_assign(&dp);
    grads
        .head_w
        .add_assign(&Mat::row_vector(cache.fused.clone()).t_matmul(&dp));
    let dfused = dp.matmul_t(&params.head_w);

    for b in Branch::ALL {
        let Some(bc) = &cache.branches[b.index()] else {
            continue;
        };
        let w = params.fusion[b.index()].as_slice();
        {
            let gw = grads.fusion[b.index()].as_mut_slice();
            for ((g, d), e) in gw.iter_mut().zip(dfused.as_slice()).zip(&bc.last) {
                *g += d * e;
            }
        }
        let mut d_out = Mat::zeros(bc.len, d_t);
        for ((o, d), wi) in d_out
            .row_mut(bc.len - 1)
            .iter_mut()
            .zip(dfused.as_slice())
            .zip(w)
        {
            *o = d * wi;
        }
        let d_e = match (params.temporal.get(b), &bc.temporal) {
            (Some(stack), Some(c)) => {
                let g = grads
                    .temporal
                    .get_mut(b)
                    .ok_or_else(|| Error::internal("temporal gradient slot missing"))?;
                stack.backward(&d_out, c, g)?
            }
            (None, None) => d_out,
            _ => return Err(Error::internal("temporal cache does not match parameters")),
        };
        for (i, sc) in bc.spatial.iter().enumerate() {
            let row = d_e.row(i);
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            spatial_mixer_bwd(row, sc, cfg, params, grads)?;
        }
    }
    Ok(())
}
