//! Rotary position embedding.
//!
//! Feature pairs `(2j, 2j+1)` of every head are rotated by
//! `pos * base^(-2j / d_head)`, so the dot product of a rotated query and key
//! depends on their positions only through the offset between them.

use crate::error::{shape_err, NnError, Result};
use crate::tensor::Tensor;

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

/// Per-position `cos`/`sin` tables, `positions.len() × d_head/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeTable {
    pub(crate) half: usize,
    pub(crate) cos: Vec<f64>,
    pub(crate) sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(positions: &[f64], head_dim: usize, base: f64) -> Result<Self> {
        if head_dim % 2 != 0 {
            return Err(NnError::OddHeadDim(head_dim));
        }
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(positions.len() * half);
        let mut sin = Vec::with_capacity(positions.len() * half);
        for &p in positions {
            for j in 0..half {
                let freq = base.powf(-((2 * j) as f64) / head_dim as f64);
                let (s, c) = (p * freq).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self { half, cos, sin })
    }

    pub fn positions(&self) -> usize {
        if self.half == 0 {
            0
        } else {
            self.cos.len() / self.half
        }
    }

    /// Rotates `data` (rows × heads·d_head) in place. `inverse` applies the
    /// transpose rotation, which is also the adjoint.
    pub(crate) fn rotate(&self, data: &mut [f64], cols: usize, inverse: bool) {
        let head_dim = 2 * self.half;
        let sign = if inverse { -1.0 } else { 1.0 };
        for (r, row) in data.chunks_mut(cols).enumerate() {
            let cs = &self.cos[r * self.half..(r + 1) * self.half];
            let sn = &self.sin[r * self.half..(r + 1) * self.half];
            for head in row.chunks_mut(head_dim) {
                for j in 0..self.half {
                    let (a, b) = (head[2 * j], head[2 * j + 1]);
                    let (c, s) = (cs[j], sign * sn[j]);
                    head[2 * j] = a * c - b * s;
                    head[2 * j + 1] = a * s + b * c;
                }
            }
        }
    }
}

/// Applies RoPE to a `[L, heads, d_head]` tensor.
pub fn rope_apply(x: &Tensor, positions: &[f64], base: f64) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(shape_err("rope_apply", format!("expected [L, heads, d_head], got {shape:?}")));
    }
    let (len, heads, head_dim) = (shape[0], shape[1], shape[2]);
    if positions.len() != len {
        return Err(shape_err(
            "rope_apply",
            format!("{} positions for {len} rows", positions.len()),
        ));
    }
    let table = RopeTable::new(positions, head_dim, base)?;
    let mut out = x.clone();
    table.rotate(out.values_mut(), heads * head_dim, false);
    Ok(out)
}
