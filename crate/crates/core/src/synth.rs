//! Synthetic datasets with known foreground structure.
//!
//! Every image holds one labeled rectangle of tokens on a token grid.
//! In an [`FixtureKind::Aligned`] image, foreground tokens lie within a
//! fixed cosine of their class text embedding while background tokens are
//! isotropic Gaussian noise. [`FixtureKind::AntiCorrelated`] swaps the
//! roles so that raw similarity prefers the background.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{
    LabelGrid, Manifest, ProjectionFiles, SampleEntry, SampleRecord, DEFAULT_PROMPT, IGNORE_LABEL, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::tensor::{write_tensor, FeatureTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    Aligned,
    AntiCorrelated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    /// Foreground classes; index 0 is an extra "background" class.
    pub classes: usize,
    pub channels: usize,
    pub grid: (usize, usize),
    /// Pixels per token along each axis.
    pub scale: usize,
    pub heads: usize,
    /// Cosine range between a class-aligned token and its text embedding.
    pub cos_range: (f64, f64),
    /// Mark a one-pixel ring around the foreground as ignore.
    pub ignore_border: bool,
    /// Store random original projections instead of identities.
    pub random_projections: Option<usize>,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            kind: FixtureKind::Aligned,
            classes: 20,
            channels: 32,
            grid: (8, 8),
            scale: 4,
            heads: 4,
            cos_range: (0.8, 0.95),
            ignore_border: true,
            random_projections: None,
            seed: 0,
        }
    }
}

/// A text bank plus the generator state needed to draw samples for it.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub class_names: Vec<String>,
    /// `(classes + 1) x C`, unit rows.
    pub text: Matrix,
    pub projections: Option<(Matrix, Matrix)>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, n);
        let l = norm(&v);
        if l > 1e-6 {
            return v.into_iter().map(|x| x / l).collect();
        }
    }
}

/// Vector of length `len` at cosine `cos` to the unit vector `dir`.
fn at_cosine(rng: &mut ChaCha8Rng, dir: &[f64], cos: f64, len: f64) -> Vec<f64> {
    let n = dir.len();
    let ortho = loop {
        let mut v = gaussian(rng, n);
        let d = dot(&v, dir);
        v.iter_mut().zip(dir).for_each(|(x, &u)| *x -= d * u);
        let l = norm(&v);
        if l > 1e-6 {
            break v.into_iter().map(|x| x / l).collect::<Vec<_>>();
        }
    };
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    dir.iter()
        .zip(&ortho)
        .map(|(&u, &o)| len * (cos * u + sin * o))
        .collect()
}

impl Fixture {
    pub fn new(spec: FixtureSpec) -> Result<Self> {
        if spec.classes == 0 || spec.classes >= IGNORE_LABEL as usize || spec.channels < 2 {
            return Err(Error::InvalidConfig(
                "fixture needs 1..254 classes and >= 2 channels".into(),
            ));
        }
        if spec.grid.0 < 2 || spec.grid.1 < 2 || spec.scale == 0 || spec.heads == 0 {
            return Err(Error::InvalidConfig("fixture grid must be at least 2x2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut class_names = vec!["background".to_string()];
        class_names.extend((1..=spec.classes).map(|k| format!("class{k:02}")));
        let rows: Vec<Vec<f64>> = (0..=spec.classes).map(|_| unit(&mut rng, spec.channels)).collect();
        let text = Matrix::from_rows(&rows)?;
        let projections = spec.random_projections.map(|d| {
            let std = 1.0 / (spec.channels as f64).sqrt();
            let mut m = || {
                let data = gaussian(&mut rng, spec.channels * d)
                    .into_iter()
                    .map(|x| x * std)
                    .collect();
                Matrix::from_vec(spec.channels, d, data).expect("sized")
            };
            (m(), m())
        });
        Ok(Self {
            spec,
            class_names,
            text,
            projections,
        })
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.spec.grid.0 * self.spec.scale, self.spec.grid.1 * self.spec.scale)
    }

    /// `n` samples drawn from `seed`; sample `i` carries class `1 + i % classes`.
    pub fn samples(&self, n: usize, seed: u64) -> Result<Vec<SampleRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        (0..n).map(|i| self.sample(i, &mut rng)).collect()
    }

    fn sample(&self, i: usize, rng: &mut ChaCha8Rng) -> Result<SampleRecord> {
        let spec = &self.spec;
        let (h, w) = spec.grid;
        let c = spec.channels;
        let class = 1 + i % spec.classes;
        let dir = self.text.row(class);
        let radius = (c as f64).sqrt();

        // rectangle covering between a quarter and most of each axis
        let rh = rng.random_range((h / 4).max(1)..=h - 1);
        let rw = rng.random_range((w / 4).max(1)..=w - 1);
        let top = rng.random_range(0..=h - rh);
        let left = rng.random_range(0..=w - rw);
        let is_fg = |p: usize| {
            let (r, q) = (p / w, p % w);
            r >= top && r < top + rh && q >= left && q < left + rw
        };

        let mut tokens = Vec::with_capacity(h * w * c);
        let mut fg_sum = vec![0.0; c];
        for p in 0..h * w {
            let aligned = is_fg(p) == (spec.kind == FixtureKind::Aligned);
            let v = if aligned {
                let cos = rng.random_range(spec.cos_range.0..=spec.cos_range.1);
                let len = radius * rng.random_range(0.8..1.2);
                at_cosine(rng, dir, cos, len)
            } else {
                gaussian(rng, c)
            };
            if is_fg(p) {
                fg_sum.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            }
            tokens.extend(v);
        }
        let n_fg = (rh * rw) as f64;
        let class_token: Vec<f64> = fg_sum.iter().map(|v| v / n_fg).collect();

        let mut attention = Vec::with_capacity(spec.heads * h * w);
        for _ in 0..spec.heads {
            for p in 0..h * w {
                attention.push(if is_fg(p) {
                    rng.random_range(0.6..1.0)
                } else {
                    rng.random_range(0.0..0.1)
                });
            }
        }

        let (hh, ww) = self.image_size();
        let s = spec.scale;
        let mut labels = vec![0u8; hh * ww];
        for y in 0..hh {
            for x in 0..ww {
                if is_fg((y / s) * w + x / s) {
                    labels[y * ww + x] = class as u8;
                }
            }
        }
        if spec.ignore_border {
            let (y0, y1, x0, x1) = (top * s, (top + rh) * s, left * s, (left + rw) * s);
            for y in y0.saturating_sub(1)..(y1 + 1).min(hh) {
                for x in x0.saturating_sub(1)..(x1 + 1).min(ww) {
                    let inside = y >= y0 && y < y1 && x >= x0 && x < x1;
                    if !inside {
                        labels[y * ww + x] = IGNORE_LABEL;
                    }
                }
            }
        }

        let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        let record = SampleRecord {
            id: format!("s{i:05}"),
            image_tokens: FeatureTensor::new(vec![h * w, c], to_f32(&tokens))?,
            class_token: FeatureTensor::new(vec![1, c], to_f32(&class_token))?,
            attention: Some(FeatureTensor::new(vec![spec.heads, h * w], to_f32(&attention))?),
            gt_mask: LabelGrid::new(hh, ww, labels)?,
            present_classes: BTreeSet::from([class]),
            image_size: (hh, ww),
            grid_size: (h, w),
            image_path: None,
        };
        record.validate(self.class_names.len())?;
        Ok(record)
    }

    /// Text bank as stored (f32-rounded), matching what a loader sees.
    pub fn text_tensor(&self) -> Result<FeatureTensor> {
        FeatureTensor::from_matrix(&self.text)
    }

    /// Writes tensors, masks and `manifest.json` into `dir`; returns the
    /// manifest path.
    pub fn write_dataset(&self, dir: &Path, samples: &[SampleRecord], split: &str) -> Result<PathBuf> {
        let sample_dir = dir.join("samples");
        fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
        write_tensor(&self.text_tensor()?, dir.join("text.ften"))?;
        let projections = match &self.projections {
            Some((pi, pt)) => {
                write_tensor(&FeatureTensor::from_matrix(pi)?, dir.join("proj_image.ften"))?;
                write_tensor(&FeatureTensor::from_matrix(pt)?, dir.join("proj_text.ften"))?;
                Some(ProjectionFiles {
                    image: "proj_image.ften".into(),
                    text: "proj_text.ften".into(),
                })
            }
            None => None,
        };
        let mut entries = Vec::with_capacity(samples.len());
        for s in samples {
            let rel = |suffix: &str| format!("samples/{}_{suffix}", s.id);
            write_tensor(&s.image_tokens, dir.join(rel("tokens.ften")))?;
            write_tensor(&s.class_token, dir.join(rel("cls.ften")))?;
            let attention = match &s.attention {
                Some(a) => {
                    write_tensor(a, dir.join(rel("att.ften")))?;
                    Some(rel("att.ften"))
                }
                None => None,
            };
            s.gt_mask.write_png(&dir.join(rel("mask.png")))?;
            entries.push(SampleEntry {
                id: s.id.clone(),
                image_tokens: rel("tokens.ften"),
                class_token: rel("cls.ften"),
                attention,
                gt_mask: rel("mask.png"),
                image_size: [s.image_size.0, s.image_size.1],
                grid_size: [s.grid_size.0, s.grid_size.1],
                labels: s.present_classes.iter().copied().collect(),
                image: None,
            });
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            split: Some(split.to_string()),
            classes: self.class_names.clone(),
            prompt: DEFAULT_PROMPT.into(),
            text_embeddings: "text.ften".into(),
            projections,
            attention_kind: Some("synthetic".into()),
            samples: entries,
        };
        let path = dir.join("manifest.json");
        manifest.write(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_tokens_respect_cosine_floor() {
        let fx = Fixture::new(FixtureSpec {
            classes: 3,
            channels: 16,
            ..FixtureSpec::default()
        })
        .unwrap();
        for s in fx.samples(6, 1).unwrap() {
            let class = *s.present_classes.iter().next().unwrap();
            let tokens = s.image_tokens.to_matrix().unwrap();
            let (h, w) = s.grid_size;
            let scale = fx.spec.scale;
            for p in 0..h * w {
                let (y, x) = ((p / w) * scale + scale / 2, (p % w) * scale + scale / 2);
                if s.gt_mask.labels()[y * s.image_size.1 + x] as usize == class {
                    let t = tokens.row(p);
                    let cos = dot(t, fx.text.row(class)) / norm(t);
                    assert!(cos >= 0.8 - 1e-5, "cos {cos}");
                }
            }
        }
    }

    #[test]
    fn deterministic_generation() {
        let fx = Fixture::new(FixtureSpec::default()).unwrap();
        let a = fx.samples(3, 7).unwrap();
        let b = fx.samples(3, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image_tokens, y.image_tokens);
            assert_eq!(x.gt_mask, y.gt_mask);
        }
    }
}
