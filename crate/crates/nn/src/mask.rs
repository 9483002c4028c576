/// Additive `L×L` attention mask: `0.0` where attention is allowed,
/// `f64::NEG_INFINITY` where it is blocked.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    len: usize,
    values: Vec<f64>,
}

impl AttentionMask {
    /// Mask that allows every pair.
    pub fn full(len: usize) -> Self {
        Self {
            len,
            values: vec![0.0; len * len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len + j]
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Band mask: token `i` may attend to token `j` iff `|i - j| <= half_width`.
pub fn banded_mask(len: usize, half_width: usize) -> AttentionMask {
    let mut values = vec![f64::NEG_INFINITY; len * len];
    for i in 0..len {
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width).min(len.saturating_sub(1));
        for j in lo..=hi {
            values[i * len + j] = 0.0;
        }
    }
    AttentionMask { len, values }
}
