//! Window-level action segmentation: the multi-stage TCN, its loss with
//! truncated smoothing, argmax decoding, the count-based correction that
//! keeps the longest runs of each planned action, and overlap metrics.

mod decode;
mod loss;
mod mstcn;
mod overlap;

use thiserror::Error;

pub use decode::{correct_segments, decode_labels, CorrectedSegments, CountDeficit};
pub use loss::{
    segmentation_loss, segmentation_loss_grad, smoothing_loss, smoothing_loss_grad,
    SegmentationLoss, SmoothingConfig,
};
pub use mstcn::{mstcn_forward, MsTcn, MsTcnConfig, MsTcnTrace, ResidualLayer, Stage, CLASSES};
pub use overlap::{dice, iou};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentationError {
    #[error("labelings differ in length ({pred} predicted vs {truth} true windows)")]
    LengthMismatch { pred: usize, truth: usize },
}
