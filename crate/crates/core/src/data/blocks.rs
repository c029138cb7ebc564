use super::{DataError, EmbeddingSequence};
use crate::kernel::Tensor;
use crate::rubric::Segment;

pub const DEFAULT_MAX_SEGMENT_WINDOWS: usize = 64;

/// Fixed-length slice of an embedding sequence covering one element.
///
/// Rows `len..` are zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBlock {
    pub windows: Tensor,
    pub len: usize,
}

impl SegmentBlock {
    /// The non-padding rows.
    pub fn content(&self) -> Tensor {
        self.windows.slice_rows(0, self.len)
    }
}

/// One block per element (non-Transition) segment, in the given order.
///
/// Segments longer than `max_windows` are centre-cropped (start offset
/// `(len - max) / 2`); shorter ones are zero-padded at the tail.
pub fn pad_and_slice(
    embeddings: &EmbeddingSequence,
    segments: &[Segment],
    max_windows: usize,
) -> Result<Vec<SegmentBlock>, DataError> {
    let valid = embeddings.valid_count();
    let dim = embeddings.dim();
    segments
        .iter()
        .filter(|s| s.action.is_element())
        .map(|s| {
            if s.is_empty() || s.end > valid {
                return Err(DataError::SegmentOutOfRange {
                    start: s.start,
                    end: s.end,
                    valid,
                });
            }
            let (start, len) = if s.len() > max_windows {
                (s.start + (s.len() - max_windows) / 2, max_windows)
            } else {
                (s.start, s.len())
            };
            let mut windows = Tensor::zeros(max_windows, dim);
            for r in 0..len {
                windows
                    .row_mut(r)
                    .copy_from_slice(embeddings.windows().row(start + r));
            }
            Ok(SegmentBlock { windows, len })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rubric::ActionType;

    fn ramp(t: usize) -> EmbeddingSequence {
        let rows: Vec<[f64; 2]> = (0..t)
            .map(|i| [i as f64 + 1.0, -(i as f64) - 1.0])
            .collect();
        EmbeddingSequence::unpadded(Tensor::from_rows(&rows).unwrap()).unwrap()
    }

    fn jump(start: usize, end: usize) -> Segment {
        Segment {
            action: ActionType::Jump,
            start,
            end,
        }
    }

    #[test]
    fn exact_length_block_is_the_raw_slice() {
        let e = ramp(12);
        let b = pad_and_slice(&e, &[jump(3, 8)], 5).unwrap().remove(0);
        assert_eq!(b.windows, e.windows().slice_rows(3, 8));
        assert_eq!(b.len, 5);
    }

    #[test]
    fn short_segment_is_zero_padded_at_the_tail() {
        let e = ramp(12);
        let b = pad_and_slice(&e, &[jump(0, 3)], 5).unwrap().remove(0);
        assert_eq!(b.windows.slice_rows(0, 3), e.windows().slice_rows(0, 3));
        assert!(b
            .windows
            .slice_rows(3, 5)
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(
            b.windows.slice_rows(3, 5).as_slice().iter().sum::<f64>(),
            0.0
        );
    }

    #[test]
    fn long_segment_is_centre_cropped() {
        let e = ramp(12);
        let b = pad_and_slice(&e, &[jump(0, 9)], 5).unwrap().remove(0);
        // crop rule: offset (9 - 5) / 2 = 2, rows 2..7
        assert_eq!(b.windows, e.windows().slice_rows(2, 7));
    }

    #[test]
    fn transitions_are_skipped_and_order_kept() {
        let e = ramp(12);
        let segs = [
            jump(0, 2),
            Segment {
                action: ActionType::Transition,
                start: 2,
                end: 4,
            },
            Segment {
                action: ActionType::Spin,
                start: 4,
                end: 7,
            },
        ];
        let blocks = pad_and_slice(&e, &segs, 4).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].windows.row(0), e.windows().row(4));
    }

    #[test]
    fn out_of_range_segment_is_rejected() {
        let e = ramp(6).padded_to(10).unwrap();
        assert!(matches!(
            pad_and_slice(&e, &[jump(4, 8)], 5),
            Err(DataError::SegmentOutOfRange { .. })
        ));
    }
}
