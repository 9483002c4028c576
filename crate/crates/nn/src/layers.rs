use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{shape_err, Result};
use crate::mask::AttentionMask;
use crate::params::{ParamId, ParamStore};
use crate::rope::RopeTable;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · W + b` on the tape.
pub fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let xw = tape.matmul(x, weight)?;
    tape.add_row(xw, bias)
}

fn xavier(rng: &mut impl Rng, d_in: usize, d_out: usize) -> Vec<f64> {
    let a = (6.0 / (d_in + d_out) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("finite bound");
    (0..d_in * d_out).map(|_| u.sample(rng)).collect()
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    /// Xavier-uniform weight, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = Tensor::matrix(d_in, d_out, xavier(rng, d_in, d_out)).expect("sized");
        Self::with_values(store, name, w, Tensor::zeros(vec![d_out]))
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Self {
        Self::with_values(
            store,
            name,
            Tensor::zeros(vec![d_in, d_out]),
            Tensor::zeros(vec![d_out]),
        )
    }

    fn with_values(store: &mut ParamStore, name: &str, w: Tensor, b: Tensor) -> Self {
        let (d_in, d_out) = (w.rows(), w.cols());
        Self {
            weight: store.insert(format!("{name}.weight"), w),
            bias: store.insert(format!("{name}.bias"), b),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.d_in {
            return Err(shape_err(
                "linear",
                format!("input {:?} into {}→{}", tape.value(x).shape(), self.d_in, self.d_out),
            ));
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        linear(tape, x, w, b)
    }
}

/// Two linear layers with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), d_in, d_hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), d_hidden, d_out, rng),
        }
    }

    /// Same as [`Mlp::new`] but with the second layer zeroed, so the block
    /// starts out emitting exactly its output bias.
    pub fn with_zero_output(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), d_in, d_hidden, rng),
            fc2: Linear::zeroed(store, &format!("{name}.fc2"), d_hidden, d_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.gelu(h);
        self.fc2.forward(tape, store, h)
    }
}

pub fn mlp(tape: &mut Tape, store: &ParamStore, x: Var, layers: &Mlp) -> Result<Var> {
    layers.forward(tape, store, x)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.insert(format!("{name}.gain"), Tensor::new(vec![dim], vec![1.0; dim]).expect("sized")),
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(vec![dim])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }
}

/// Multi-head self-attention with rotary embeddings on queries and keys.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub rope_base: f64,
}

/// Attention output plus the per-head attention weight matrices (`L×L`
/// each, on the tape) for inspection.
pub struct AttentionOutput {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        rope_base: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(shape_err(
                "MultiHeadAttention::new",
                format!("d_model {d_model} not divisible by {heads} heads"),
            ));
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, rng),
            heads,
            rope_base,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.q.d_out / self.heads
    }

    pub fn rope_table(&self, len: usize) -> Result<Rc<RopeTable>> {
        let positions: Vec<f64> = (0..len).map(|p| p as f64).collect();
        Ok(Rc::new(RopeTable::new(&positions, self.head_dim(), self.rope_base)?))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mask: &AttentionMask,
        rope: &Rc<RopeTable>,
    ) -> Result<AttentionOutput> {
        let q = self.q.forward(tape, store, x)?;
        let k = self.k.forward(tape, store, x)?;
        let v = self.v.forward(tape, store, x)?;
        let q = tape.rope(q, Rc::clone(rope))?;
        let k = tape.rope(k, Rc::clone(rope))?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads_out = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.masked_softmax(scores, mask)?;
            weights.push(attn);
            heads_out.push(tape.matmul(attn, vh)?);
        }
        let cat = tape.concat_cols(&heads_out)?;
        let out = self.out.forward(tape, store, cat)?;
        Ok(AttentionOutput { out, weights })
    }
}

/// Attention over `x: L×d_model` with a fresh rotary table for positions
/// `0..L`.
pub fn mha(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    mask: &AttentionMask,
    attn: &MultiHeadAttention,
) -> Result<AttentionOutput> {
    let len = tape.value(x).rows();
    let rope = attn.rope_table(len)?;
    attn.forward(tape, store, x, mask, &rope)
}

/// Pre-norm transformer encoder block:
/// `h = x + attn(norm1(x))`, `out = h + mlp(norm2(h))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ff: Mlp,
}

pub struct EncoderOutput {
    pub out: Var,
    pub attention: Vec<Var>,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        ff_mult: usize,
        rope_base: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d_model, heads, rope_base, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            ff: Mlp::new(store, &format!("{name}.ff"), d_model, ff_mult * d_model, d_model, rng),
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mask: &AttentionMask,
        rope: &Rc<RopeTable>,
    ) -> Result<EncoderOutput> {
        let n1 = self.norm1.forward(tape, store, x)?;
        let a = self.attn.forward(tape, store, n1, mask, rope)?;
        let h = tape.add(x, a.out)?;
        let n2 = self.norm2.forward(tape, store, h)?;
        let f = self.ff.forward(tape, store, n2)?;
        let out = tape.add(h, f)?;
        Ok(EncoderOutput {
            out,
            attention: a.weights,
        })
    }
}

pub fn encoder_layer(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    mask: &AttentionMask,
    layer: &EncoderLayer,
) -> Result<EncoderOutput> {
    let len = tape.value(x).rows();
    let rope = layer.attn.rope_table(len)?;
    layer.forward(tape, store, x, mask, &rope)
}
