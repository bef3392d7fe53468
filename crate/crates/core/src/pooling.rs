//! Global pooling over image tokens, including attention-masked max pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMethod {
    Avg,
    Max,
    MaskedMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledToken {
    pub vector: Vec<f64>,
    pub method: PoolMethod,
    /// Per-channel winning token index for the max methods.
    pub argmax: Option<Vec<usize>>,
}

impl PooledToken {
    pub fn as_row(&self) -> Matrix {
        Matrix::from_vec(1, self.vector.len(), self.vector.clone()).expect("1xC")
    }
}

/// Head-averaged attention, broadcast across channels on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    raw: Matrix,
    reduced: Vec<f64>,
    channels: usize,
    has_negative: bool,
}

impl AttentionMask {
    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    /// Mean over heads, one weight per token.
    pub fn reduced(&self) -> &[f64] {
        &self.reduced
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_tokens(&self) -> usize {
        self.reduced.len()
    }

    pub fn has_negative(&self) -> bool {
        self.has_negative
    }

    /// Materialized `N_i x C` view.
    pub fn expanded(&self) -> Matrix {
        let mut m = Matrix::zeros(self.reduced.len(), self.channels);
        for (p, &a) in self.reduced.iter().enumerate() {
            m.row_mut(p).iter_mut().for_each(|v| *v = a);
        }
        m
    }
}

/// Averages `N_h x N_i` attention over heads and broadcasts it to `C` channels.
pub fn prepare_attention(raw: &Matrix, channels: usize) -> Result<AttentionMask> {
    let heads = raw.rows();
    if heads == 0 || raw.cols() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "attention must be N_h x N_i with both >= 1, got {}x{}",
            heads,
            raw.cols()
        )));
    }
    if channels == 0 {
        return Err(Error::ShapeMismatch("channel count must be >= 1".into()));
    }
    let mut reduced = vec![0.0; raw.cols()];
    for h in 0..heads {
        for (acc, &v) in reduced.iter_mut().zip(raw.row(h)) {
            *acc += v;
        }
    }
    reduced.iter_mut().for_each(|v| *v /= heads as f64);
    let has_negative = raw.as_slice().iter().any(|&v| v < 0.0);
    if has_negative {
        log::warn!("attention map contains negative weights");
    }
    Ok(AttentionMask {
        raw: raw.clone(),
        reduced,
        channels,
        has_negative,
    })
}

fn non_empty(tokens: &Matrix) -> Result<()> {
    if tokens.rows() == 0 || tokens.cols() == 0 {
        return Err(Error::EmptyInput("pooling needs at least one token".into()));
    }
    Ok(())
}

pub fn avg_pool(tokens: &Matrix) -> Result<PooledToken> {
    non_empty(tokens)?;
    let mut v = vec![0.0; tokens.cols()];
    for p in 0..tokens.rows() {
        for (acc, &x) in v.iter_mut().zip(tokens.row(p)) {
            *acc += x;
        }
    }
    let n = tokens.rows() as f64;
    v.iter_mut().for_each(|x| *x /= n);
    Ok(PooledToken {
        vector: v,
        method: PoolMethod::Avg,
        argmax: None,
    })
}

/// Channel-wise max of `weight(p) * tokens[p, c]`; ties keep the lowest index.
fn weighted_max(tokens: &Matrix, weight: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<usize>) {
    let mut best = vec![f64::NEG_INFINITY; tokens.cols()];
    let mut arg = vec![0usize; tokens.cols()];
    for p in 0..tokens.rows() {
        let a = weight(p);
        for (c, &x) in tokens.row(p).iter().enumerate() {
            let v = x * a;
            if v > best[c] {
                best[c] = v;
                arg[c] = p;
            }
        }
    }
    (best, arg)
}

pub fn max_pool(tokens: &Matrix) -> Result<PooledToken> {
    non_empty(tokens)?;
    let (vector, argmax) = weighted_max(tokens, |_| 1.0);
    Ok(PooledToken {
        vector,
        method: PoolMethod::Max,
        argmax: Some(argmax),
    })
}

/// Max pooling of tokens weighted elementwise by the expanded attention mask.
/// Training-time only: the tokens themselves are never modified.
pub fn masked_max_pool(tokens: &Matrix, mask: &AttentionMask) -> Result<PooledToken> {
    non_empty(tokens)?;
    if mask.num_tokens() != tokens.rows() || mask.channels() != tokens.cols() {
        return Err(Error::ShapeMismatch(format!(
            "mask expands to {}x{}, tokens are {}x{}",
            mask.num_tokens(),
            mask.channels(),
            tokens.rows(),
            tokens.cols()
        )));
    }
    let (vector, argmax) = weighted_max(tokens, |p| mask.reduced[p]);
    Ok(PooledToken {
        vector,
        method: PoolMethod::MaskedMax,
        argmax: Some(argmax),
    })
}
