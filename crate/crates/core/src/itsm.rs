//! Image-text similarity maps.
//!
//! Image tokens and text embeddings are projected, L2-normalized and
//! compared by cosine similarity. The resulting `N_i x N_t` matrix is
//! reshaped to the token grid, bilinearly resized to image resolution and
//! min-max normalized per class slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::FeatureTensor;

/// Max-min spans below this are treated as flat.
pub const FLAT_EPS: f64 = 1e-12;

/// Learnable `C_in x C_out` linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: Matrix,
}

impl Projection {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::ShapeMismatch("empty projection".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::Numeric("projection has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Matrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        features.matmul(&self.matrix)
    }

    /// Projects then L2-normalizes every row.
    pub fn embed(&self, features: &Matrix, what: &str) -> Result<Matrix> {
        Ok(self.apply(features)?.normalize_rows(what)?.0)
    }
}

fn check_pair(proj_i: &Projection, proj_t: &Projection) -> Result<()> {
    if proj_i.output_dim() != proj_t.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "projections disagree on output width: {} vs {}",
            proj_i.output_dim(),
            proj_t.output_dim()
        )));
    }
    Ok(())
}

/// Cosine similarity of the projected class token against each text row.
pub fn confidence_scores(
    class_token: &Matrix,
    text: &Matrix,
    proj_i: &Projection,
    proj_t: &Projection,
) -> Result<Vec<f64>> {
    if class_token.rows() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "class token must be 1xC, got {}x{}",
            class_token.rows(),
            class_token.cols()
        )));
    }
    Ok(itsm_raw(class_token, text, proj_i, proj_t)?.row(0).to_vec())
}

/// `N_i x N_t` cosine similarities between projected image tokens and
/// projected text rows.
pub fn itsm_raw(image_tokens: &Matrix, text: &Matrix, proj_i: &Projection, proj_t: &Projection) -> Result<Matrix> {
    check_pair(proj_i, proj_t)?;
    let img = proj_i.embed(image_tokens, "projected image token")?;
    let txt = proj_t.embed(text, "projected text embedding")?;
    img.matmul_t(&txt)
}

/// Which route produced a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Clip,
    Rclip,
    Eclip,
}

impl std::fmt::Display for MapSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapSource::Clip => "clip",
            MapSource::Rclip => "rclip",
            MapSource::Eclip => "eclip",
        })
    }
}

impl std::str::FromStr for MapSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(MapSource::Clip),
            "rclip" => Ok(MapSource::Rclip),
            "eclip" => Ok(MapSource::Eclip),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Normalized similarity map, stored class-major: one `H x W` slice per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Itsm {
    height: usize,
    width: usize,
    class_ids: Vec<usize>,
    source: MapSource,
    data: Vec<f32>,
}

impl Itsm {
    /// Builds a map from class-major data, checking the `[0, 1]` range.
    pub fn from_slices(
        height: usize,
        width: usize,
        class_ids: Vec<usize>,
        source: MapSource,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != height * width * class_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{} map with {} values",
                class_ids.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numeric("map values must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            class_ids,
            source,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn source(&self) -> MapSource {
        self.source
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn slice(&self, k: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn slice_for_class(&self, class: usize) -> Option<&[f32]> {
        self.class_ids.iter().position(|&c| c == class).map(|k| self.slice(k))
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// `H x W x N_t` interleaved tensor.
    pub fn to_tensor(&self) -> Result<FeatureTensor> {
        let n = self.height * self.width;
        let nt = self.class_ids.len();
        let mut out = vec![0.0f32; n * nt];
        for k in 0..nt {
            for (p, &v) in self.slice(k).iter().enumerate() {
                out[p * nt + k] = v;
            }
        }
        FeatureTensor::new(vec![self.height, self.width, nt], out)
    }

    pub fn from_tensor(t: &FeatureTensor, class_ids: Vec<usize>, source: MapSource) -> Result<Self> {
        let [h, w, nt] = t.shape()[..] else {
            return Err(Error::ShapeMismatch(format!("expected HxWxN_t, got {:?}", t.shape())));
        };
        if nt != class_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{nt} map channels for {} classes",
                class_ids.len()
            )));
        }
        let n = h * w;
        let mut data = vec![0.0f32; n * nt];
        for (i, &v) in t.data().iter().enumerate() {
            data[(i % nt) * n + i / nt] = v;
        }
        Self::from_slices(h, w, class_ids, source, data)
    }
}

/// Bilinear resize of one `src_h x src_w` plane with half-pixel centers:
/// `src = (dst + 0.5) * src_len / dst_len - 0.5`, clamped to the edges.
pub fn resize_bilinear(src: &[f64], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), src_h * src_w);
    let taps = |src_len: usize, dst_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = src_len as f64 / dst_len as f64;
        (0..dst_len)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(src_h, dst_h);
    let xs = taps(src_w, dst_w);
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * src_w..(y0 + 1) * src_w];
        let r1 = &src[y1 * src_w..(y1 + 1) * src_w];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

/// In-place min-max normalization to `[0, 1]`; flat planes become zeros.
pub fn min_max_normalize(plane: &mut [f64]) {
    let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if !(span >= FLAT_EPS) {
        plane.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    plane.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

/// Reshape, resize and normalize a raw `N_i x N_t` similarity matrix.
pub fn finalize_itsm(
    raw: &Matrix,
    grid: (usize, usize),
    out_size: (usize, usize),
    class_ids: Vec<usize>,
    source: MapSource,
) -> Result<Itsm> {
    let (h, w) = grid;
    let (hh, ww) = out_size;
    if h * w != raw.rows() || h == 0 || w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "grid {h}x{w} does not hold {} tokens",
            raw.rows()
        )));
    }
    if hh == 0 || ww == 0 {
        return Err(Error::ShapeMismatch("output size must be positive".into()));
    }
    if class_ids.len() != raw.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} class ids for {} columns",
            class_ids.len(),
            raw.cols()
        )));
    }
    let nt = raw.cols();
    let mut data = Vec::with_capacity(hh * ww * nt);
    let mut plane = vec![0.0f64; h * w];
    for k in 0..nt {
        for (p, v) in plane.iter_mut().enumerate() {
            *v = raw.get(p, k);
        }
        let mut resized = resize_bilinear(&plane, h, w, hh, ww);
        min_max_normalize(&mut resized);
        data.extend(resized.iter().map(|&v| v as f32));
    }
    Itsm::from_slices(hh, ww, class_ids, source, data)
}

/// `|1 - m|` elementwise; tags the result as RCLIP.
pub fn rclip_reverse(m: &Itsm) -> Itsm {
    Itsm {
        data: m.data.iter().map(|&v| (1.0 - v).abs()).collect(),
        source: MapSource::Rclip,
        ..m.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_and_orthogonal_scores() {
        let id = Projection::identity(3);
        let s = confidence_scores(
            &m(&[&[1.0, 2.0, 0.0]]),
            &m(&[&[2.0, 4.0, 0.0], &[-2.0, 1.0, 0.0]]),
            &id,
            &id,
        )
        .unwrap();
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_computed_scores() {
        // token (1,2,2,0) with norm 3; rows with norms 1, 2, sqrt(2)
        let token = m(&[&[1.0, 2.0, 2.0, 0.0]]);
        let text = m(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 2.0], &[0.0, 1.0, -1.0, 0.0]]);
        let id = Projection::identity(4);
        let s = confidence_scores(&token, &text, &id, &id).unwrap();
        assert_abs_diff_eq!(s[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_projection_fails() {
        let p = Projection::new(Matrix::zeros(2, 2)).unwrap();
        let id = Projection::identity(2);
        let err = confidence_scores(&m(&[&[1.0, 1.0]]), &m(&[&[1.0, 0.0]]), &p, &id).unwrap_err();
        assert!(matches!(err, Error::ZeroNormVector { .. }));
    }

    #[test]
    fn equal_tokens_give_equal_rows() {
        let tokens = m(&[&[0.3, -1.0], &[0.3, -1.0], &[0.3, -1.0]]);
        let text = m(&[&[1.0, 0.5], &[-0.2, 0.9]]);
        let id = Projection::identity(2);
        let raw = itsm_raw(&tokens, &text, &id, &id).unwrap();
        assert_eq!(raw.row(0), raw.row(1));
        assert_eq!(raw.row(1), raw.row(2));
    }

    #[test]
    fn constant_slice_becomes_zeros() {
        let raw = Matrix::from_vec(4, 1, vec![0.2; 4]).unwrap();
        let map = finalize_itsm(&raw, (2, 2), (3, 5), vec![0], MapSource::Clip).unwrap();
        assert!(map.slice(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_resize_keeps_spanning_slice() {
        let raw = Matrix::from_vec(4, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let map = finalize_itsm(&raw, (2, 2), (2, 2), vec![0], MapSource::Clip).unwrap();
        assert_eq!(map.slice(0), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let raw = Matrix::zeros(5, 1);
        assert!(matches!(
            finalize_itsm(&raw, (2, 2), (4, 4), vec![0], MapSource::Clip),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn reverse_values() {
        let map = Itsm::from_slices(1, 2, vec![0], MapSource::Clip, vec![0.3, 1.0]).unwrap();
        let r = rclip_reverse(&map);
        assert_abs_diff_eq!(r.slice(0)[0], 0.7, epsilon = 1e-7);
        assert_eq!(r.slice(0)[1], 0.0);
        assert_eq!(r.source(), MapSource::Rclip);
    }

    #[test]
    fn tensor_layout_round_trip() {
        let map = Itsm::from_slices(1, 2, vec![4, 9], MapSource::Eclip, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = map.to_tensor().unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.1, 0.3, 0.2, 0.4]);
        assert_eq!(Itsm::from_tensor(&t, vec![4, 9], MapSource::Eclip).unwrap(), map);
        assert_eq!(map.slice_for_class(9).unwrap(), &[0.3, 0.4]);
    }
}
