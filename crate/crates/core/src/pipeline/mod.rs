//! Joint training, inference and evaluation of the segmentation network and
//! the two score heads, plus the ablation variants that drop or swap the
//! interpretable intermediate outputs.

mod ablation;
mod evaluate;
mod infer;
mod model;
mod serialize;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::heads::HeadError;
use crate::kernel::KernelError;
use crate::metrics::MetricsError;
use crate::rubric::RubricError;
use crate::segmentation::SegmentationError;

pub use ablation::{run_ablation, AblationRow, AblationTable, FEATURES};
pub use evaluate::{
    evaluate, evaluate_predictions, Correlation, CorrelationRow, EvaluationReport,
    RecordEvaluation, Tertile, TertileRow,
};
pub use infer::{assign_segments, infer, predict, Prediction};
pub use model::{uniform_segments, Architecture, ModelParams};
pub use serialize::{decode_model, encode_model, read_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{
    composite_loss, train, train_with, EpochLoss, LossWeights, TrainConfig, TrainingLog,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("record {id} lacks {what}")]
    MissingTruth { id: String, what: &'static str },
    #[error("training diverged at epoch {epoch}: {component} loss is not finite")]
    Divergence {
        epoch: usize,
        component: &'static str,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("variant {variant} does not produce {what}")]
    Unsupported {
        variant: ModelVariant,
        what: &'static str,
    },
    #[error("model variant {found} does not match expected {expected}")]
    VariantMismatch {
        expected: ModelVariant,
        found: ModelVariant,
    },
    #[error("evaluation needs at least 3 records, got {0}")]
    TooFewRecords(usize),
    #[error("no prediction for record {0}")]
    MissingPrediction(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Rubric(#[from] RubricError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Which interpretable outputs a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Total score only.
    ScoreOnly,
    /// TES and PCS subtotals.
    TesPcs,
    /// Per-element TES and the five components.
    Subscores,
    /// As `Subscores`, slicing elements by predicted segments.
    SubscoresSegments,
    /// Per-element GOE added to known base values, and the five components.
    DeltaSubscores,
    /// As `DeltaSubscores`, slicing elements by predicted segments.
    Full,
}

/// What the element head regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementTarget {
    Tes,
    Goe,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::ScoreOnly,
        ModelVariant::TesPcs,
        ModelVariant::Subscores,
        ModelVariant::SubscoresSegments,
        ModelVariant::DeltaSubscores,
        ModelVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::ScoreOnly => "score-only",
            ModelVariant::TesPcs => "tes-pcs",
            ModelVariant::Subscores => "subscores",
            ModelVariant::SubscoresSegments => "subscores-segments",
            ModelVariant::DeltaSubscores => "delta-subscores",
            ModelVariant::Full => "full",
        }
    }

    pub fn tag(self) -> u8 {
        Self::ALL.iter().position(|&v| v == self).expect("listed") as u8
    }

    pub fn from_tag(tag: u8) -> Option<ModelVariant> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn uses_segments(self) -> bool {
        matches!(self, ModelVariant::SubscoresSegments | ModelVariant::Full)
    }

    pub fn element_target(self) -> Option<ElementTarget> {
        match self {
            ModelVariant::ScoreOnly | ModelVariant::TesPcs => None,
            ModelVariant::Subscores | ModelVariant::SubscoresSegments => Some(ElementTarget::Tes),
            ModelVariant::DeltaSubscores | ModelVariant::Full => Some(ElementTarget::Goe),
        }
    }

    /// Output width of the whole-sequence head.
    pub fn sequence_outputs(self) -> usize {
        match self {
            ModelVariant::ScoreOnly => 1,
            ModelVariant::TesPcs => 2,
            _ => crate::rubric::PCS_COMPONENTS,
        }
    }

    /// Only GOE-based variants yield a full score-sheet judgment.
    pub fn produces_judgment(self) -> bool {
        self.element_target() == Some(ElementTarget::Goe)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                format!(
                    "unknown variant '{s}' (expected one of {})",
                    names.join(", ")
                )
            })
    }
}
