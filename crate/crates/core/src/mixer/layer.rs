use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::init::init_with;
use crate::tensor::{
    mlp_block_bwd, mlp_block_fwd, InitScheme, LayerNormParams, Mat, MlpBlockCache, MlpBlockParams,
};

/// One MixerLayer: token-mixing MLP over the transposed input, then
/// channel-mixing MLP over its result, each with its own LayerNorm and
/// residual.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerLayerParams {
    pub token_mlp: MlpBlockParams,
    pub channel_mlp: MlpBlockParams,
    /// Normalizes each row of `Vᵀ`, i.e. across tokens.
    pub ln_token: LayerNormParams,
    /// Normalizes each row of `Uᵀ`, i.e. across channels.
    pub ln_channel: LayerNormParams,
}

fn init_block<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> MlpBlockParams {
    MlpBlockParams {
        w_in: init_with(dim, hidden, rng, InitScheme::UniformFanIn),
        b_in: Mat::zeros(1, hidden),
        w_out: init_with(hidden, dim, rng, InitScheme::UniformFanIn),
        b_out: Mat::zeros(1, dim),
    }
}

impl MixerLayerParams {
    pub fn init<R: Rng>(
        tokens: usize,
        channels: usize,
        token_hidden: usize,
        channel_hidden: usize,
        rng: &mut R,
    ) -> Self {
        MixerLayerParams {
            token_mlp: init_block(tokens, token_hidden, rng),
            channel_mlp: init_block(channels, channel_hidden, rng),
            ln_token: LayerNormParams::identity(tokens),
            ln_channel: LayerNormParams::identity(channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MixerLayerParams {
            token_mlp: self.token_mlp.zeros_like(),
            channel_mlp: self.channel_mlp.zeros_like(),
            ln_token: self.ln_token.zeros_like(),
            ln_channel: self.ln_channel.zeros_like(),
        }
    }

    pub fn tokens(&self) -> usize {
        self.token_mlp.in_dim()
    }

    pub fn channels(&self) -> usize {
        self.channel_mlp.in_dim()
    }

    /// Zero the output projection and bias of both MLPs, which turns the
    /// layer into the identity.
    pub fn zero_outputs(&mut self) {
        self.token_mlp.w_out.fill(0.0);
        self.token_mlp.b_out.fill(0.0);
        self.channel_mlp.w_out.fill(0.0);
        self.channel_mlp.b_out.fill(0.0);
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>) {
        for (name, block) in [("token", &self.token_mlp), ("channel", &self.channel_mlp)] {
            out.push((format!("{prefix}.{name}.w_in"), &block.w_in));
            out.push((format!("{prefix}.{name}.b_in"), &block.b_in));
            out.push((format!("{prefix}.{name}.w_out"), &block.w_out));
            out.push((format!("{prefix}.{name}.b_out"), &block.b_out));
        }
        for (name, ln) in [("ln_token", &self.ln_token), ("ln_channel", &self.ln_channel)] {
            out.push((format!("{prefix}.{name}.gamma"), &ln.gamma));
            out.push((format!("{prefix}.{name}.beta"), &ln.beta));
        }
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        for block in [&mut self.token_mlp, &mut self.channel_mlp] {
            out.push(&mut block.w_in);
            out.push(&mut block.b_in);
            out.push(&mut block.w_out);
            out.push(&mut block.b_out);
        }
        for ln in [&mut self.ln_token, &mut self.ln_channel] {
            out.push(&mut ln.gamma);
            out.push(&mut ln.beta);
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixerLayerCache {
    token: MlpBlockCache,
    channel: MlpBlockCache,
}

/// `U = Vᵀ + token_mlp(LN(Vᵀ))`, then `Y = Uᵀ + channel_mlp(LN(Uᵀ))`.
///
/// `v` is `tokens × channels`; so is the result.
pub fn mixer_layer_fwd(v: &Mat, p: &MixerLayerParams) -> Result<(Mat, MixerLayerCache)> {
    if v.shape() != (p.tokens(), p.channels()) {
        return Err(Error::config(format!(
            "mixer layer for {} tokens x {} channels given input {:?}",
            p.tokens(),
            p.channels(),
            v.shape()
        )));
    }
    let (u, token) = mlp_block_fwd(&v.transpose(), &p.token_mlp, &p.ln_token)?;
    let (y, channel) = mlp_block_fwd(&u.transpose(), &p.channel_mlp, &p.ln_channel)?;
    Ok((y, MixerLayerCache { token, channel }))
}

/// Backward pass of [`mixer_layer_fwd`]; accumulates into `grads`.
pub fn mixer_layer_bwd(
    dy: &Mat,
    cache: &MixerLayerCache,
    p: &MixerLayerParams,
    grads: &mut MixerLayerParams,
) -> Result<Mat> {
    let dut = mlp_block_bwd(
        dy,
        &cache.channel,
        &p.channel_mlp,
        &p.ln_channel,
        &mut grads.channel_mlp,
        &mut grads.ln_channel,
    )?;
    let dvt = mlp_block_bwd(
        &dut.transpose(),
        &cache.token,
        &p.token_mlp,
        &p.ln_token,
        &mut grads.token_mlp,
        &mut grads.ln_token,
    )?;
    Ok(dvt.transpose())
}

/// `depth` successive MixerLayer applications.
///
/// With sharing on, one parameter set is applied `depth` times; otherwise
/// each application owns its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerStack {
    pub layers: Vec<MixerLayerParams>,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    layers: Vec<MixerLayerCache>,
}

impl MixerStack {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        tokens: usize,
        channels: usize,
        token_hidden: usize,
        channel_hidden: usize,
        depth: usize,
        shared: bool,
        rng: &mut R,
    ) -> Self {
        let distinct = match (depth, shared) {
            (0, _) => 0,
            (_, true) => 1,
            (n, false) => n,
        };
        let layers = (0..distinct)
            .map(|_| MixerLayerParams::init(tokens, channels, token_hidden, channel_hidden, rng))
            .collect();
        MixerStack { layers, depth }
    }

    pub fn zeros_like(&self) -> Self {
        MixerStack {
            layers: self.layers.iter().map(MixerLayerParams::zeros_like).collect(),
            depth: self.depth,
        }
    }

    pub fn is_shared(&self) -> bool {
        self.layers.len() == 1 && self.depth > 1
    }

    fn layer_for(&self, application: usize) -> &MixerLayerParams {
        &self.layers[application % self.layers.len()]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.layers.len() {
            0 => self.depth == 0,
            1 => true,
            n => n == self.depth,
        };
        if !ok {
            return Err(Error::config(format!(
                "mixer stack of depth {} cannot hold {} distinct layers",
                self.depth,
                self.layers.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, StackCache)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.depth);
        for i in 0..self.depth {
            let (y, cache) = mixer_layer_fwd(&cur, self.layer_for(i))?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, StackCache { layers: caches }))
    }

    pub fn backward(&self, dy: &Mat, cache: &StackCache, grads: &mut MixerStack) -> Result<Mat> {
        if cache.layers.len() != self.depth || grads.layers.len() != self.layers.len() {
            return Err(Error::internal("mixer stack cache does not match parameters"));
        }
        let mut d = dy.clone();
        for i in (0..self.depth).rev() {
            let slot = i % self.layers.len();
            d = mixer_layer_bwd(&d, &cache.layers[i], &self.layers[slot], &mut grads.layers[slot])?;
        }
        Ok(d)
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.tensors(&format!("{prefix}.layer{i}"), out);
        }
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        for layer in &mut self.layers {
            layer.tensors_mut(out);
        }
    }
}
