//! Dense row-major matrices and the hand-paired forward/backward primitives
//! the mixer stack is built from.

pub mod counter;
pub(crate) mod init;
mod mat;
mod ops;

pub use init::{init_params, InitScheme};
pub use mat::Mat;
pub use ops::{
    gelu, gelu_grad, gelu_mat, layernorm_bwd, layernorm_fwd, mlp_block_bwd, mlp_block_fwd,
    LayerNormCache, LayerNormParams, MlpBlockCache, MlpBlockParams, LAYERNORM_EPS,
};
