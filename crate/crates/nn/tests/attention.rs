mod common;

use common::{random_tensor, rng};
use footlift_nn::{
    banded_mask, mha, rope_apply, AttentionMask, MultiHeadAttention, ParamStore, Tape, Tensor,
    DEFAULT_ROPE_BASE,
};

/// Straightforward per-pair attention, independent of the tape code.
fn naive_attention(x: &Tensor, store: &ParamStore, a: &MultiHeadAttention, mask: &AttentionMask) -> Vec<f64> {
    let (len, d) = (x.rows(), x.cols());
    let proj = |lin: &footlift_nn::Linear| -> Vec<Vec<f64>> {
        let w = store.get(lin.weight);
        let b = store.get(lin.bias);
        (0..len)
            .map(|i| {
                (0..lin.d_out)
                    .map(|o| b.values()[o] + (0..d).map(|k| x.get(i, k) * w.get(k, o)).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let (q, k, v) = (proj(&a.q), proj(&a.k), proj(&a.v));
    let heads = a.heads;
    let dh = d / heads;
    let pos: Vec<f64> = (0..len).map(|p| p as f64).collect();
    let rot = |m: &Vec<Vec<f64>>| {
        let t = Tensor::new(vec![len, heads, dh], m.concat()).unwrap();
        rope_apply(&t, &pos, a.rope_base).unwrap()
    };
    let (q, k) = (rot(&q), rot(&k));
    let mut cat = vec![vec![0.0; d]; len];
    for h in 0..heads {
        for i in 0..len {
            let mut scores = vec![f64::NEG_INFINITY; len];
            for j in 0..len {
                if mask.allowed(i, j) {
                    let mut s = 0.0;
                    for c in 0..dh {
                        s += q.values()[i * d + h * dh + c] * k.values()[j * d + h * dh + c];
                    }
                    scores[j] = s / (dh as f64).sqrt();
                }
            }
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| if s.is_finite() { (s - mx).exp() } else { 0.0 }).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dh {
                cat[i][h * dh + c] = (0..len).map(|j| e[j] / z * v[j][h * dh + c]).sum();
            }
        }
    }
    let w = store.get(a.out.weight);
    let b = store.get(a.out.bias);
    let mut out = Vec::new();
    for row in &cat {
        for o in 0..d {
            out.push(b.values()[o] + (0..d).map(|kk| row[kk] * w.get(kk, o)).sum::<f64>());
        }
    }
    out
}

#[test]
fn matches_naive_reference() {
    let mut r = rng(21);
    let mut store = ParamStore::new();
    let a = MultiHeadAttention::new(&mut store, "a", 8, 4, DEFAULT_ROPE_BASE, &mut r).unwrap();
    for lin in [&a.q, &a.k, &a.v, &a.out] {
        *store.get_mut(lin.bias) = random_tensor(vec![8], &mut r);
    }
    let x = random_tensor(vec![7, 8], &mut r);
    for mask in [AttentionMask::full(7), banded_mask(7, 2), banded_mask(7, 0)] {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = mha(&mut tape, &store, xv, &mask, &a).unwrap();
        let expected = naive_attention(&x, &store, &a, &mask);
        for (got, want) in tape.value(out.out).values().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn single_token_attends_to_itself() {
    let mut r = rng(22);
    let mut store = ParamStore::new();
    let a = MultiHeadAttention::new(&mut store, "a", 4, 2, DEFAULT_ROPE_BASE, &mut r).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(random_tensor(vec![1, 4], &mut r));
    let out = mha(&mut tape, &store, xv, &AttentionMask::full(1), &a).unwrap();
    for w in out.weights {
        assert_eq!(tape.value(w).values(), &[1.0]);
    }
}

#[test]
fn masked_weights_are_exactly_zero_and_rows_sum_to_one() {
    let mut r = rng(23);
    let mut store = ParamStore::new();
    let a = MultiHeadAttention::new(&mut store, "a", 8, 2, DEFAULT_ROPE_BASE, &mut r).unwrap();
    let mask = banded_mask(12, 3);
    let mut tape = Tape::new();
    let xv = tape.constant(random_tensor(vec![12, 8], &mut r));
    let out = mha(&mut tape, &store, xv, &mask, &a).unwrap();
    for w in out.weights {
        let t = tape.value(w);
        for i in 0..12 {
            let row = t.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &p) in row.iter().enumerate() {
                if !mask.allowed(i, j) {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }
}

#[test]
fn indivisible_heads_rejected() {
    let mut r = rng(24);
    let mut store = ParamStore::new();
    assert!(MultiHeadAttention::new(&mut store, "a", 6, 4, DEFAULT_ROPE_BASE, &mut r).is_err());
}
