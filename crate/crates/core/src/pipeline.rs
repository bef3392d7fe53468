//! Per-sample map generation for each explanation route.

use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::itsm::{confidence_scores, finalize_itsm, itsm_raw, rclip_reverse, Itsm, MapSource, Projection};
use crate::linalg::Matrix;
use crate::trainer::ProjectionPair;

/// Text bank and projections bound to one route.
///
/// Only image tokens feed the map; attention tensors are never read here.
#[derive(Debug, Clone)]
pub struct MapPipeline {
    source: MapSource,
    text: Matrix,
    proj_i: Projection,
    proj_t: Projection,
}

impl MapPipeline {
    /// `clip` and `rclip` use the original projections; `eclip` requires
    /// the trained pair.
    pub fn new(
        source: MapSource,
        text: Matrix,
        original: (Projection, Projection),
        trained: Option<&ProjectionPair>,
    ) -> Result<Self> {
        let (proj_i, proj_t) = match (source, trained) {
            (MapSource::Eclip, Some(pair)) => pair.projections()?,
            (MapSource::Eclip, None) => {
                return Err(Error::InvalidConfig("eclip needs a trained projection pair".into()))
            }
            (_, _) => original,
        };
        if proj_t.input_dim() != text.cols() {
            return Err(Error::ShapeMismatch(format!(
                "text projection expects {} inputs, text bank has {}",
                proj_t.input_dim(),
                text.cols()
            )));
        }
        Ok(Self {
            source,
            text,
            proj_i,
            proj_t,
        })
    }

    pub fn source(&self) -> MapSource {
        self.source
    }

    pub fn map(&self, record: &SampleRecord) -> Result<Itsm> {
        let tokens = record.image_tokens.to_matrix()?;
        let raw = itsm_raw(&tokens, &self.text, &self.proj_i, &self.proj_t)?;
        let class_ids = (0..self.text.rows()).collect();
        let base = match self.source {
            MapSource::Rclip => MapSource::Clip,
            s => s,
        };
        let map = finalize_itsm(&raw, record.grid_size, record.image_size, class_ids, base)?;
        Ok(match self.source {
            MapSource::Rclip => rclip_reverse(&map),
            _ => map,
        })
    }
}

/// Recognition scores of a sample's class token under `(proj_i, proj_t)`.
pub fn recognition_scores(
    record: &SampleRecord,
    text: &Matrix,
    proj_i: &Projection,
    proj_t: &Projection,
) -> Result<Vec<f64>> {
    confidence_scores(&record.class_token.to_matrix()?, text, proj_i, proj_t)
}
