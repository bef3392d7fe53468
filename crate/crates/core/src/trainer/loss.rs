//! Symmetric InfoNCE over projected, normalized image/text pairs and its
//! analytic gradient.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

use super::ProjectionPair;

/// Paired rows: image row `i` matches text row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pooled_tokens: Matrix,
    pub text_embeddings: Matrix,
}

impl Batch {
    pub fn new(pooled_tokens: Matrix, text_embeddings: Matrix) -> Result<Self> {
        if pooled_tokens.rows() == 0 || pooled_tokens.rows() != text_embeddings.rows() {
            return Err(Error::ShapeMismatch(format!(
                "batch needs equal, nonzero row counts: {} images, {} texts",
                pooled_tokens.rows(),
                text_embeddings.rows()
            )));
        }
        Ok(Self {
            pooled_tokens,
            text_embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.pooled_tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `B x B`, image rows against text columns.
    pub logits: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub image: Matrix,
    pub text: Matrix,
    pub log_temperature: f64,
}

struct Forward {
    img: Matrix,
    img_norms: Vec<f64>,
    txt: Matrix,
    txt_norms: Vec<f64>,
    logits: Matrix,
    row_softmax: Matrix,
    col_softmax: Matrix,
    loss: f64,
}

fn forward(batch: &Batch, pair: &ProjectionPair) -> Result<Forward> {
    let (img, img_norms) = batch
        .pooled_tokens
        .matmul(&pair.image)?
        .normalize_rows("projected pooled token")?;
    let (txt, txt_norms) = batch
        .text_embeddings
        .matmul(&pair.text)?
        .normalize_rows("projected text embedding")?;
    let scale = pair.logit_scale();
    let mut logits = img.matmul_t(&txt)?;
    logits.as_mut_slice().iter_mut().for_each(|v| *v *= scale);

    let b = batch.len();
    let mut row_softmax = Matrix::zeros(b, b);
    let mut col_softmax = Matrix::zeros(b, b);
    let (mut row_loss, mut col_loss) = (0.0, 0.0);
    for i in 0..b {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for (j, &v) in row.iter().enumerate() {
            row_softmax.set(i, j, (v - max).exp() / z);
        }
        row_loss -= row[i] - max - z.ln();
    }
    for j in 0..b {
        let max = (0..b).map(|i| logits.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..b).map(|i| (logits.get(i, j) - max).exp()).sum();
        for i in 0..b {
            col_softmax.set(i, j, (logits.get(i, j) - max).exp() / z);
        }
        col_loss -= logits.get(j, j) - max - z.ln();
    }
    let loss = 0.5 * (row_loss + col_loss) / b as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("contrastive loss is not finite".into()));
    }
    Ok(Forward {
        img,
        img_norms,
        txt,
        txt_norms,
        logits,
        row_softmax,
        col_softmax,
        loss,
    })
}

pub fn contrastive_loss(batch: &Batch, pair: &ProjectionPair) -> Result<LossOutput> {
    let f = forward(batch, pair)?;
    Ok(LossOutput {
        loss: f.loss,
        logits: f.logits,
    })
}

/// Backward through `x / |x|` for every row: `(g - x̂ (x̂ . g)) / |x|`.
fn normalize_backward(unit: &Matrix, norms: &[f64], grad_unit: &Matrix) -> Matrix {
    let mut out = grad_unit.clone();
    for (i, &n) in norms.iter().enumerate() {
        let u = unit.row(i);
        let proj = dot(u, grad_unit.row(i));
        for (o, &ui) in out.row_mut(i).iter_mut().zip(u) {
            *o = (*o - ui * proj) / n;
        }
    }
    out
}

/// Loss and exact gradients with respect to both projections and the log scale.
pub fn loss_gradients(batch: &Batch, pair: &ProjectionPair) -> Result<(f64, Gradients)> {
    let f = forward(batch, pair)?;
    let b = batch.len();
    let inv = 0.5 / b as f64;

    // dL/dlogits
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let eye = if i == j { 2.0 } else { 0.0 };
            g.set(i, j, inv * (f.row_softmax.get(i, j) + f.col_softmax.get(i, j) - eye));
        }
    }
    let log_temperature: f64 = g.as_slice().iter().zip(f.logits.as_slice()).map(|(a, l)| a * l).sum();

    let scale = pair.logit_scale();
    let mut g_cos = g;
    g_cos.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    let g_img_unit = g_cos.matmul(&f.txt)?;
    let g_txt_unit = g_cos.t_matmul(&f.img)?;
    let g_img = normalize_backward(&f.img, &f.img_norms, &g_img_unit);
    let g_txt = normalize_backward(&f.txt, &f.txt_norms, &g_txt_unit);

    Ok((
        f.loss,
        Gradients {
            image: batch.pooled_tokens.t_matmul(&g_img)?,
            text: batch.text_embeddings.t_matmul(&g_txt)?,
            log_temperature,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_pair(c: usize, log_t: f64) -> ProjectionPair {
        ProjectionPair::new(Matrix::identity(c), Matrix::identity(c), log_t).unwrap()
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let x = Matrix::from_vec(1, 3, vec![0.3, -1.0, 2.0]).unwrap();
        let t = Matrix::from_vec(1, 3, vec![-4.0, 0.1, 0.0]).unwrap();
        let out = contrastive_loss(&Batch::new(x, t).unwrap(), &identity_pair(3, 1.0)).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn orthonormal_pairs_closed_form() {
        // logits = diag(tau) -> each CE term is ln(1 + e^{-tau})
        let x = Matrix::identity(2);
        for log_t in [0.0, 1.0, 2.659_260_036_932_778] {
            let out = contrastive_loss(&Batch::new(x.clone(), x.clone()).unwrap(), &identity_pair(2, log_t)).unwrap();
            let tau = f64::exp(log_t);
            assert_abs_diff_eq!(out.loss, (1.0 + (-tau).exp()).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn batch_shape_checked() {
        assert!(Batch::new(Matrix::zeros(2, 3), Matrix::zeros(3, 3)).is_err());
        assert!(Batch::new(Matrix::zeros(0, 3), Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn zero_projection_fails() {
        let pair = ProjectionPair::new(Matrix::zeros(2, 2), Matrix::identity(2), 0.0).unwrap();
        let b = Batch::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        assert!(matches!(contrastive_loss(&b, &pair), Err(Error::ZeroNormVector { .. })));
    }

    #[test]
    fn identical_rows_give_identical_gradient_rows() {
        // every pair identical: the loss is flat in the image/text directions
        let x = Matrix::from_vec(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let t = Matrix::from_vec(3, 2, vec![0.5, -1.0, 0.5, -1.0, 0.5, -1.0]).unwrap();
        let pair = ProjectionPair::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.2, -0.3, 0.8]).unwrap(),
            Matrix::from_vec(2, 2, vec![0.4, 1.0, 0.9, -0.1]).unwrap(),
            1.5,
        )
        .unwrap();
        let (loss, g) = loss_gradients(&Batch::new(x, t).unwrap(), &pair).unwrap();
        assert_abs_diff_eq!(loss, (3.0f64).ln(), epsilon = 1e-12);
        assert!(g.image.as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(g.text.as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(g.log_temperature.abs() < 1e-12);
    }
}
