//! Explainability toolkit for contrastive image-text models.
//!
//! Builds image-text similarity maps from exported features, corrects them
//! by reversal or by a projection pair retrained over masked-max-pooled
//! tokens, diagnoses pooling-induced channel shift and scores maps with
//! grid-search mIoU, mean score contrast and mAP.

// Validation compares as `!(x >= lo)` so NaN lands in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod itsm;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
mod pngio;
pub mod pooling;
pub mod render;
pub mod shift;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use dataset::{load_manifest, Dataset, LabelGrid, Manifest, SampleRecord, TextBank};
pub use error::{Error, Result};
pub use itsm::{confidence_scores, finalize_itsm, itsm_raw, rclip_reverse, Itsm, MapSource, Projection};
pub use linalg::Matrix;
pub use metrics::{best_threshold_iou, mean_ap, miou, msc, MetricsReport, ThresholdGrid};
pub use pipeline::MapPipeline;
pub use pooling::{avg_pool, masked_max_pool, max_pool, prepare_attention, AttentionMask, PoolMethod, PooledToken};
pub use shift::{aggregate_shift, classify_shift, point_map, PointMap, ShiftReport, ShiftTable};
pub use tensor::{read_tensor, write_tensor, FeatureTensor};
pub use trainer::{contrastive_loss, loss_gradients, train, Batch, ProjectionPair, TrainConfig};
