//! Gradient check of every tape op and layer on small random inputs.
//!
//! Each case routes its inputs through parameters so input gradients are
//! checked too, and reduces the output with fixed random weights.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::grad_check;
use crate::layers::{encoder_layer, mha, EncoderLayer, LayerNorm, Linear, Mlp, MultiHeadAttention};
use crate::mask::banded_mask;
use crate::params::{Grads, ParamId, ParamStore};
use crate::rope::{RopeTable, DEFAULT_ROPE_BASE};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub checked: usize,
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
}

type Build = dyn Fn(&mut Tape, &ParamStore) -> Result<Var>;

fn run(name: &'static str, store: &mut ParamStore, eps: f64, seed: u64, build: &Build) -> Result<OpCheck> {
    let mut tape = Tape::new();
    let out = build(&mut tape, store)?;
    let n = tape.value(out).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.backward(out, Some(&w))?;
    let mut g = Grads::zeros_like(store);
    tape.accumulate_param_grads(&mut g);
    let mut failed = None;
    let report = grad_check(store, &g, eps, |ps| {
        let mut t = Tape::new();
        match build(&mut t, ps) {
            Ok(o) => t.value(o).values().iter().zip(&w).map(|(a, b)| a * b).sum(),
            Err(e) => {
                failed.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    Ok(OpCheck { name, max_rel_err: report.max_rel_err, checked: report.checked })
}

fn input(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
    store.insert(name, random_tensor(vec![rows, cols], rng))
}

/// Runs every case with central differences at step `eps`.
pub fn op_gradcheck_suite(eps: f64) -> Result<Vec<OpCheck>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f70);

    let mut s = ParamStore::new();
    let (a, b) = (input(&mut s, "a", 3, 4, &mut rng), input(&mut s, "b", 4, 2, &mut rng));
    out.push(run("matmul", &mut s, eps, 1, &move |t, ps| {
        let (a, b) = (t.param(ps, a), t.param(ps, b));
        t.matmul(a, b)
    })?);

    let mut s = ParamStore::new();
    let (a, b) = (input(&mut s, "a", 3, 4, &mut rng), input(&mut s, "b", 5, 4, &mut rng));
    out.push(run("matmul_nt", &mut s, eps, 2, &move |t, ps| {
        let (a, b) = (t.param(ps, a), t.param(ps, b));
        t.matmul_nt(a, b)
    })?);

    let mut s = ParamStore::new();
    let (a, b) = (input(&mut s, "a", 3, 4, &mut rng), input(&mut s, "b", 3, 4, &mut rng));
    out.push(run("add", &mut s, eps, 3, &move |t, ps| {
        let (a, b) = (t.param(ps, a), t.param(ps, b));
        t.add(a, b)
    })?);

    let mut s = ParamStore::new();
    let a = input(&mut s, "x", 3, 4, &mut rng);
    let b = s.insert("bias", random_tensor(vec![4], &mut rng));
    out.push(run("add_row", &mut s, eps, 4, &move |t, ps| {
        let (a, b) = (t.param(ps, a), t.param(ps, b));
        t.add_row(a, b)
    })?);

    let mut s = ParamStore::new();
    let a = input(&mut s, "x", 3, 4, &mut rng);
    out.push(run("scale", &mut s, eps, 5, &move |t, ps| {
        let a = t.param(ps, a);
        Ok(t.scale(a, -1.7))
    })?);

    let mut s = ParamStore::new();
    let a = input(&mut s, "x", 3, 4, &mut rng);
    out.push(run("gelu", &mut s, eps, 6, &move |t, ps| {
        let a = t.param(ps, a);
        Ok(t.gelu(a))
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 3, 6, &mut rng);
    let ln = LayerNorm::new(&mut s, "ln", 6);
    *s.get_mut(ln.gain) = random_tensor(vec![6], &mut rng);
    *s.get_mut(ln.bias) = random_tensor(vec![6], &mut rng);
    out.push(run("layer_norm", &mut s, eps, 7, &move |t, ps| {
        let x = t.param(ps, x);
        ln.forward(t, ps, x)
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 6, 6, &mut rng);
    let mask = banded_mask(6, 2);
    out.push(run("masked_softmax", &mut s, eps, 8, &move |t, ps| {
        let x = t.param(ps, x);
        t.masked_softmax(x, &mask)
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 5, 8, &mut rng);
    let table = Rc::new(RopeTable::new(&[0.0, 1.0, 2.0, 3.0, 4.0], 4, DEFAULT_ROPE_BASE)?);
    out.push(run("rope", &mut s, eps, 9, &move |t, ps| {
        let x = t.param(ps, x);
        t.rope(x, Rc::clone(&table))
    })?);

    let mut s = ParamStore::new();
    let (a, b) = (input(&mut s, "a", 3, 5, &mut rng), input(&mut s, "b", 3, 2, &mut rng));
    out.push(run("slice_concat", &mut s, eps, 10, &move |t, ps| {
        let (a, b) = (t.param(ps, a), t.param(ps, b));
        let mid = t.slice_cols(a, 1, 3)?;
        t.concat_cols(&[b, mid, a])
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 4, 3, &mut rng);
    let lin = Linear::new(&mut s, "l", 3, 2, &mut rng);
    *s.get_mut(lin.bias) = random_tensor(vec![2], &mut rng);
    out.push(run("linear", &mut s, eps, 11, &move |t, ps| {
        let x = t.param(ps, x);
        lin.forward(t, ps, x)
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 5, 4, &mut rng);
    let m = Mlp::new(&mut s, "m", 4, 6, 3, &mut rng);
    out.push(run("mlp", &mut s, eps, 12, &move |t, ps| {
        let x = t.param(ps, x);
        m.forward(t, ps, x)
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 6, 8, &mut rng);
    let attn = MultiHeadAttention::new(&mut s, "a", 8, 2, DEFAULT_ROPE_BASE, &mut rng)?;
    let mask = banded_mask(6, 2);
    out.push(run("attention", &mut s, eps, 13, &move |t, ps| {
        let x = t.param(ps, x);
        Ok(mha(t, ps, x, &mask, &attn)?.out)
    })?);

    let mut s = ParamStore::new();
    let x = input(&mut s, "x", 5, 8, &mut rng);
    let layer = EncoderLayer::new(&mut s, "e", 8, 2, 4, DEFAULT_ROPE_BASE, &mut rng)?;
    let mask = banded_mask(5, 3);
    out.push(run("encoder_layer", &mut s, eps, 14, &move |t, ps| {
        let x = t.param(ps, x);
        Ok(encoder_layer(t, ps, x, &mask, &layer)?.out)
    })?);

    Ok(out)
}
