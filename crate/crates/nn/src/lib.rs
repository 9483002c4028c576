//! Small differentiable-computation substrate: a reverse-mode tape over
//! row-major `f64` matrices, the layers needed for a pre-norm RoPE
//! transformer encoder, AdamW, finite-difference gradient checking and a
//! binary checkpoint format.

pub mod adamw;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mask;
pub mod opcheck;
pub mod params;
pub mod rope;
pub mod tape;
pub mod tensor;

pub use adamw::{adamw_step, AdamState, AdamWConfig};
pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, grad_check_strided, grad_check_with_floor, GradCheckReport, GRAD_CHECK_FLOOR};
pub use layers::{
    encoder_layer, linear, mha, mlp, AttentionOutput, EncoderLayer, EncoderOutput, LayerNorm,
    Linear, Mlp, MultiHeadAttention,
};
pub use mask::{banded_mask, AttentionMask};
pub use opcheck::{op_gradcheck_suite, OpCheck};
pub use params::{Grads, ParamId, ParamStore};
pub use rope::{rope_apply, RopeTable, DEFAULT_ROPE_BASE};
pub use tape::{gelu_scalar, Tape, Var};
pub use tensor::Tensor;
