//! Embedding sequences, window labelings, performance records and their
//! on-disk layout, plus the synthetic dataset generator.

mod blocks;
mod io;
mod synth;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::Tensor;
use crate::rubric::{element_counts, ActionType, RubricError, ScoreSheet, Segment};

pub use blocks::{pad_and_slice, SegmentBlock, DEFAULT_MAX_SEGMENT_WINDOWS};
pub use io::{
    load_dataset, load_record, read_embeddings, read_labels, read_manifest, write_embeddings,
    write_labels, write_manifest, write_record, Manifest, EMBEDDING_SUFFIX, LABELS_SUFFIX,
    MANIFEST_FILE, SHEET_SUFFIX,
};
pub use synth::{generate_synthetic, SyntheticConfig};

/// Seconds covered by one embedding window (16 frames at 29.97 fps).
pub const WINDOW_SECONDS: f64 = 0.534;
/// Longest sequence accepted, in windows.
pub const MAX_WINDOWS: usize = 356;
/// Default train partition size.
pub const DEFAULT_TRAIN_COUNT: usize = 120;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Sheet { path: PathBuf, source: RubricError },
    #[error("record {id}: missing {missing} file")]
    MissingPair { id: String, missing: &'static str },
    #[error(
        "record {id}: labels contain {labelled} {action} segment(s) but the sheet plans {planned}"
    )]
    CountMismatch {
        id: String,
        action: ActionType,
        planned: usize,
        labelled: usize,
    },
    #[error("record {id}: labelled element order does not match the sheet's plan")]
    OrderMismatch { id: String },
    #[error("record {id}: {message}")]
    Inconsistent { id: String, message: String },
    #[error(
        "embedding dimension {found} differs from {expected} used by earlier records (record {id})"
    )]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("need more than {needed} records, have {available}")]
    InsufficientRecords { needed: usize, available: usize },
    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleConfig(String),
    #[error("segment {start}..{end} lies outside the {valid} valid windows")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        valid: usize,
    },
    #[error("invalid labeling: {0}")]
    InvalidLabeling(String),
    #[error("invalid embeddings: {0}")]
    InvalidEmbeddings(String),
}

/// Per-window feature vectors; rows at or past `valid` are zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    windows: Tensor,
    valid: usize,
}

impl EmbeddingSequence {
    pub fn new(windows: Tensor, valid: usize) -> Result<Self, DataError> {
        if valid == 0 || valid > windows.rows() {
            return Err(DataError::InvalidEmbeddings(format!(
                "valid count {valid} outside 1..={}",
                windows.rows()
            )));
        }
        if windows.rows() > MAX_WINDOWS {
            return Err(DataError::InvalidEmbeddings(format!(
                "{} windows exceed the maximum of {MAX_WINDOWS}",
                windows.rows()
            )));
        }
        if !windows.is_finite() {
            return Err(DataError::InvalidEmbeddings(
                "non-finite feature value".into(),
            ));
        }
        if (valid..windows.rows()).any(|r| windows.row(r).iter().any(|&v| v != 0.0)) {
            return Err(DataError::InvalidEmbeddings(
                "padded windows must be exactly zero".into(),
            ));
        }
        Ok(EmbeddingSequence { windows, valid })
    }

    /// Treats every row as valid.
    pub fn unpadded(windows: Tensor) -> Result<Self, DataError> {
        let valid = windows.rows();
        EmbeddingSequence::new(windows, valid)
    }

    pub fn windows(&self) -> &Tensor {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid
    }

    pub fn dim(&self) -> usize {
        self.windows.cols()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.valid as f64 * WINDOW_SECONDS
    }

    /// The valid prefix as its own tensor.
    pub fn valid_windows(&self) -> Tensor {
        self.windows.slice_rows(0, self.valid)
    }

    pub fn validity_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|t| t < self.valid).collect()
    }

    /// Zero-pads to `length` windows.
    pub fn padded_to(&self, length: usize) -> Result<EmbeddingSequence, DataError> {
        if length < self.len() {
            return Err(DataError::InvalidEmbeddings(format!(
                "cannot pad {} windows down to {length}",
                self.len()
            )));
        }
        let mut data = self.windows.as_slice().to_vec();
        data.resize(length * self.dim(), 0.0);
        let windows = Tensor::from_vec(length, self.dim(), data)
            .map_err(|e| DataError::InvalidEmbeddings(e.to_string()))?;
        EmbeddingSequence::new(windows, self.valid)
    }
}

/// Per-window actions over the valid windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabeling {
    labels: Vec<ActionType>,
}

impl SegmentLabeling {
    pub fn new(labels: Vec<ActionType>) -> Self {
        SegmentLabeling { labels }
    }

    /// Rebuilds labels from segments that partition `[0, n)` into maximal runs.
    pub fn from_segments(segments: &[Segment]) -> Result<Self, DataError> {
        let mut labels = Vec::new();
        for (i, s) in segments.iter().enumerate() {
            if s.start != labels.len() {
                return Err(DataError::InvalidLabeling(format!(
                    "segment {i} starts at {} but the previous one ended at {}",
                    s.start,
                    labels.len()
                )));
            }
            if s.is_empty() {
                return Err(DataError::InvalidLabeling(format!("segment {i} is empty")));
            }
            if i > 0 && segments[i - 1].action == s.action {
                return Err(DataError::InvalidLabeling(format!(
                    "segments {} and {i} share action {}",
                    i - 1,
                    s.action
                )));
            }
            labels.extend(std::iter::repeat(s.action).take(s.len()));
        }
        Ok(SegmentLabeling { labels })
    }

    pub fn labels(&self) -> &[ActionType] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|a| a.index()).collect()
    }

    /// Maximal runs, in time order.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for (t, &a) in self.labels.iter().enumerate() {
            match out.last_mut() {
                Some(s) if s.action == a => s.end = t + 1,
                _ => out.push(Segment {
                    action: a,
                    start: t,
                    end: t + 1,
                }),
            }
        }
        out
    }

    /// Non-Transition runs, in time order.
    pub fn element_segments(&self) -> Vec<Segment> {
        self.segments()
            .into_iter()
            .filter(|s| s.action.is_element())
            .collect()
    }

    /// One character per window (T/J/S/Q).
    pub fn timeline(&self) -> String {
        self.labels.iter().map(|a| a.code()).collect()
    }
}

/// A score sheet with its embeddings and, for training data, window labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub sheet: ScoreSheet,
    pub embeddings: EmbeddingSequence,
    pub truth_labels: Option<SegmentLabeling>,
}

impl PerformanceRecord {
    pub fn id(&self) -> &str {
        &self.sheet.performance_id
    }

    /// Checks labels against the valid length and the sheet's element plan.
    pub fn validate(&self) -> Result<(), DataError> {
        let id = self.id().to_string();
        let Some(labels) = &self.truth_labels else {
            return Ok(());
        };
        if labels.len() != self.embeddings.valid_count() {
            return Err(DataError::Inconsistent {
                id,
                message: format!(
                    "{} labels for {} valid embedding windows",
                    labels.len(),
                    self.embeddings.valid_count()
                ),
            });
        }
        let runs = labels.element_segments();
        let planned = element_counts(&self.sheet);
        let labelled = crate::rubric::ElementCounts::of_actions(runs.iter().map(|s| s.action));
        for action in ActionType::ELEMENTS {
            if planned.get(action) != labelled.get(action) {
                return Err(DataError::CountMismatch {
                    id,
                    action,
                    planned: planned.get(action),
                    labelled: labelled.get(action),
                });
            }
        }
        if runs
            .iter()
            .zip(&self.sheet.elements)
            .any(|(s, e)| s.action != e.action)
        {
            return Err(DataError::OrderMismatch { id });
        }
        Ok(())
    }
}

/// Seeded partition into `train_count` training records and the rest.
pub fn split(
    records: Vec<PerformanceRecord>,
    train_count: usize,
    seed: u64,
) -> Result<(Vec<PerformanceRecord>, Vec<PerformanceRecord>), DataError> {
    if train_count >= records.len() {
        return Err(DataError::InsufficientRecords {
            needed: train_count,
            available: records.len(),
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; records.len()];
    for &i in &order[..train_count] {
        is_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = records.into_iter().zip(is_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(r, _)| r).collect(),
        test.into_iter().map(|(r, _)| r).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_segments() -> impl Strategy<Value = Vec<Segment>> {
        proptest::collection::vec((0usize..4, 1usize..6), 0..20).prop_map(|runs| {
            let mut out: Vec<Segment> = Vec::new();
            let mut t = 0;
            for (a, len) in runs {
                let action = ActionType::from_index(a).unwrap();
                if out.last().map(|s| s.action) == Some(action) {
                    continue;
                }
                out.push(Segment {
                    action,
                    start: t,
                    end: t + len,
                });
                t += len;
            }
            out
        })
    }

    proptest! {
        #[test]
        fn labels_and_segments_are_a_bijection(segs in arb_segments()) {
            let labeling = SegmentLabeling::from_segments(&segs).unwrap();
            prop_assert_eq!(labeling.segments(), segs);
        }
    }

    #[test]
    fn malformed_segment_lists_are_rejected() {
        let j = ActionType::Jump;
        let t = ActionType::Transition;
        let gap = [
            Segment {
                action: j,
                start: 0,
                end: 2,
            },
            Segment {
                action: t,
                start: 3,
                end: 4,
            },
        ];
        assert!(SegmentLabeling::from_segments(&gap).is_err());
        let same = [
            Segment {
                action: j,
                start: 0,
                end: 2,
            },
            Segment {
                action: j,
                start: 2,
                end: 4,
            },
        ];
        assert!(SegmentLabeling::from_segments(&same).is_err());
        let empty = [Segment {
            action: j,
            start: 0,
            end: 0,
        }];
        assert!(SegmentLabeling::from_segments(&empty).is_err());
    }

    #[test]
    fn padding_must_be_zero() {
        let mut t = Tensor::filled(4, 2, 1.0);
        assert!(EmbeddingSequence::new(t.clone(), 2).is_err());
        t.row_mut(2).fill(0.0);
        t.row_mut(3).fill(0.0);
        let e = EmbeddingSequence::new(t, 2).unwrap();
        assert_eq!(e.validity_mask(), vec![true, true, false, false]);
        let p = e.padded_to(10).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p.valid_windows(), e.valid_windows());
        assert!(EmbeddingSequence::unpadded(Tensor::zeros(MAX_WINDOWS + 1, 2)).is_err());
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let records = generate_synthetic(
            &SyntheticConfig {
                n_records: 150,
                ..SyntheticConfig::default()
            },
            1,
        )
        .unwrap();
        let (train, test) = split(records.clone(), 120, 42).unwrap();
        assert_eq!((train.len(), test.len()), (120, 30));
        let mut ids: Vec<&str> = train.iter().chain(&test).map(|r| r.id()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 150);
        let (train2, _) = split(records.clone(), 120, 42).unwrap();
        assert_eq!(train, train2);
        let (train3, _) = split(records.clone(), 120, 43).unwrap();
        assert_ne!(train, train3);
        assert!(matches!(
            split(records, 150, 1),
            Err(DataError::InsufficientRecords { .. })
        ));
    }
}
