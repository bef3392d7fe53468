//! Dataset manifest, per-image sample bundles and ground-truth masks.
//!
//! A manifest is a single JSON document. Paths inside it are resolved
//! relative to the manifest's directory. Mask pixel values index into the
//! manifest's `classes` list, with [`IGNORE_LABEL`] marking void pixels.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itsm::Projection;
use crate::pngio;
use crate::tensor::{read_tensor, FeatureTensor};

pub const MANIFEST_VERSION: u32 = 1;
pub const IGNORE_LABEL: u8 = 255;
pub const DEFAULT_PROMPT: &str = "a photo of the";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub classes: Vec<String>,
    pub prompt: String,
    /// `N_t x C` text-bank tensor, one row per class.
    pub text_embeddings: String,
    /// Original image/text projections. Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<ProjectionFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_kind: Option<String>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFiles {
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub image_tokens: String,
    pub class_token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<String>,
    pub gt_mask: String,
    /// `[H, W]` in pixels.
    pub image_size: [usize; 2],
    /// `[h, w]` in tokens.
    pub grid_size: [usize; 2],
    pub labels: Vec<usize>,
    /// Optional RGB image used as overlay background.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// H x W grid of class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "label grid {height}x{width} with {} values",
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ignore_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == IGNORE_LABEL).collect()
    }

    pub fn class_mask(&self, class: usize) -> Vec<bool> {
        self.labels
            .iter()
            .map(|&l| l as usize == class && l != IGNORE_LABEL)
            .collect()
    }

    /// Pixels labeled with any class in `classes`.
    pub fn union_mask(&self, classes: &BTreeSet<usize>) -> Vec<bool> {
        self.labels
            .iter()
            .map(|&l| l != IGNORE_LABEL && classes.contains(&(l as usize)))
            .collect()
    }

    /// Classes present in the grid, ignore sentinel excluded.
    pub fn classes_present(&self) -> BTreeSet<usize> {
        self.labels
            .iter()
            .filter(|&&l| l != IGNORE_LABEL)
            .map(|&l| l as usize)
            .collect()
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let (h, w, data) = pngio::read_index_png(path)?;
        Self::new(h, w, data)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        pngio::write_gray_png(path, self.height, self.width, &self.labels)
    }
}

#[derive(Debug, Clone)]
pub struct TextBank {
    pub class_names: Vec<String>,
    pub embeddings: FeatureTensor,
    pub prompt: String,
}

impl TextBank {
    pub fn new(class_names: Vec<String>, embeddings: FeatureTensor, prompt: String) -> Result<Self> {
        let (rows, _) = embeddings.dims2()?;
        if class_names.is_empty() {
            return Err(Error::InconsistentClassList("no classes".into()));
        }
        if rows != class_names.len() {
            return Err(Error::InconsistentClassList(format!(
                "{} class names but {rows} text embeddings",
                class_names.len()
            )));
        }
        Ok(Self {
            class_names,
            embeddings,
            prompt,
        })
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn width(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

/// One image's exported bundle, validated on construction.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub id: String,
    pub image_tokens: FeatureTensor,
    pub class_token: FeatureTensor,
    pub attention: Option<FeatureTensor>,
    pub gt_mask: LabelGrid,
    pub present_classes: BTreeSet<usize>,
    pub image_size: (usize, usize),
    pub grid_size: (usize, usize),
    pub image_path: Option<PathBuf>,
}

impl SampleRecord {
    /// Checks every structural invariant of a sample against a class count.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidSample {
            id: self.id.clone(),
            reason,
        };
        let (n_i, c) = self.image_tokens.dims2()?;
        let (h, w) = self.grid_size;
        if h * w != n_i {
            return Err(bad(format!("grid {h}x{w} does not cover {n_i} image tokens")));
        }
        if self.class_token.shape() != [1, c] {
            return Err(bad(format!(
                "class token shape {:?}, expected [1, {c}]",
                self.class_token.shape()
            )));
        }
        if let Some(att) = &self.attention {
            let (_, att_tokens) = att.dims2()?;
            if att_tokens != n_i {
                return Err(bad(format!("attention covers {att_tokens} tokens, expected {n_i}")));
            }
        }
        let (hh, ww) = self.image_size;
        if (self.gt_mask.height(), self.gt_mask.width()) != (hh, ww) {
            return Err(bad(format!(
                "mask is {}x{}, image_size is {hh}x{ww}",
                self.gt_mask.height(),
                self.gt_mask.width()
            )));
        }
        let in_mask = self.gt_mask.classes_present();
        if let Some(&c) = in_mask.iter().find(|&&c| c >= num_classes) {
            return Err(Error::InconsistentClassList(format!(
                "sample {}: mask value {c} is not a class index (have {num_classes} classes)",
                self.id
            )));
        }
        if let Some(c) = self.present_classes.iter().find(|c| !in_mask.contains(c)) {
            return Err(bad(format!("label {c} does not appear in the mask")));
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        self.image_tokens.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.image_tokens.shape()[1]
    }

    /// Copy with the attention tensor removed, as seen at inference.
    pub fn without_attention(&self) -> Self {
        Self {
            attention: None,
            ..self.clone()
        }
    }
}

/// A loaded manifest together with its eagerly loaded text bank.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: Manifest,
    root: PathBuf,
    text_bank: TextBank,
    projections: Option<(Projection, Projection)>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::SchemaError(e.to_string()))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Dataset::from_manifest(manifest, root)
}

impl Dataset {
    pub fn from_manifest(manifest: Manifest, root: PathBuf) -> Result<Self> {
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::SchemaError(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        if manifest.classes.is_empty() {
            return Err(Error::InconsistentClassList("empty class list".into()));
        }
        if manifest.classes.len() > IGNORE_LABEL as usize {
            return Err(Error::InconsistentClassList(format!(
                "{} classes exceed the 8-bit mask range",
                manifest.classes.len()
            )));
        }
        let mut names = HashSet::new();
        if let Some(dup) = manifest.classes.iter().find(|c| !names.insert(c.as_str())) {
            return Err(Error::InconsistentClassList(format!("duplicate class {dup:?}")));
        }

        let mut ids = HashSet::new();
        for s in &manifest.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::SchemaError(format!("duplicate sample id {:?}", s.id)));
            }
            if let Some(&l) = s.labels.iter().find(|&&l| l >= manifest.classes.len()) {
                return Err(Error::InconsistentClassList(format!(
                    "sample {}: label {l} out of range",
                    s.id
                )));
            }
            let files = [
                Some(&s.image_tokens),
                Some(&s.class_token),
                s.attention.as_ref(),
                Some(&s.gt_mask),
                s.image.as_ref(),
            ];
            for f in files.into_iter().flatten() {
                let p = root.join(f);
                if !p.is_file() {
                    return Err(Error::MissingFile { path: p });
                }
            }
        }

        let embeddings = read_tensor(root.join(&manifest.text_embeddings))?;
        let text_bank = TextBank::new(manifest.classes.clone(), embeddings, manifest.prompt.clone())?;

        let projections = match &manifest.projections {
            Some(files) => {
                let image = Projection::new(read_tensor(root.join(&files.image))?.to_matrix()?)?;
                let text = Projection::new(read_tensor(root.join(&files.text))?.to_matrix()?)?;
                if image.output_dim() != text.output_dim() {
                    return Err(Error::ShapeMismatch(format!(
                        "image projection outputs {} dims, text projection {}",
                        image.output_dim(),
                        text.output_dim()
                    )));
                }
                if text.input_dim() != text_bank.width() {
                    return Err(Error::ShapeMismatch(format!(
                        "text projection expects {} inputs, text bank has width {}",
                        text.input_dim(),
                        text_bank.width()
                    )));
                }
                Some((image, text))
            }
            None => None,
        };

        Ok(Self {
            manifest,
            root,
            text_bank,
            projections,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn classes(&self) -> &[String] {
        &self.manifest.classes
    }

    pub fn text_bank(&self) -> &TextBank {
        &self.text_bank
    }

    /// The exporter-supplied projections, or identities over the text width.
    pub fn original_projections(&self) -> (Projection, Projection) {
        match &self.projections {
            Some(p) => p.clone(),
            None => {
                let c = self.text_bank.width();
                (Projection::identity(c), Projection::identity(c))
            }
        }
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.manifest.samples.iter().position(|s| s.id == id)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_sample(&self, index: usize) -> Result<SampleRecord> {
        let entry = self
            .manifest
            .samples
            .get(index)
            .ok_or_else(|| Error::MissingSample(format!("#{index}")))?;
        let attention = entry
            .attention
            .as_ref()
            .map(|p| read_tensor(self.resolve(p)))
            .transpose()?;
        let record = SampleRecord {
            id: entry.id.clone(),
            image_tokens: read_tensor(self.resolve(&entry.image_tokens))?,
            class_token: read_tensor(self.resolve(&entry.class_token))?,
            attention,
            gt_mask: LabelGrid::read_png(&self.resolve(&entry.gt_mask))?,
            present_classes: entry.labels.iter().copied().collect(),
            image_size: (entry.image_size[0], entry.image_size[1]),
            grid_size: (entry.grid_size[0], entry.grid_size[1]),
            image_path: entry.image.as_ref().map(|p| self.resolve(p)),
        };
        record.validate(self.manifest.classes.len())?;
        if record.channels() != self.text_bank.width() && self.projections.is_none() {
            return Err(Error::ShapeMismatch(format!(
                "sample {}: image width {} differs from text width {} and no projections are given",
                record.id,
                record.channels(),
                self.text_bank.width()
            )));
        }
        Ok(record)
    }

    /// Samples in manifest order, loaded on demand.
    pub fn samples(&self) -> impl Iterator<Item = Result<SampleRecord>> + '_ {
        (0..self.len()).map(move |i| self.load_sample(i))
    }
}
