use crate::data::SegmentLabeling;
use crate::kernel::Tensor;
use crate::rubric::{ActionType, ElementCounts};

/// Per-window argmax over unmasked rows; ties go to the lowest class index.
pub fn decode_labels(logits: &Tensor, mask: &[bool]) -> SegmentLabeling {
    let labels = (0..logits.rows())
        .filter(|&t| mask.get(t).copied().unwrap_or(false))
        .map(|t| {
            let row = logits.row(t);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            ActionType::from_index(best).expect("logit column is a class index")
        })
        .collect();
    SegmentLabeling::new(labels)
}

/// Fewer runs of an action were found than the sheet plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountDeficit {
    pub action: ActionType,
    pub planned: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectedSegments {
    pub labeling: SegmentLabeling,
    pub deficits: Vec<CountDeficit>,
}

/// Keeps, for every element action `a`, the `counts[a]` longest runs of `a`
/// (earlier start wins ties) and relabels every other element window as
/// Transition. Kept runs keep their extent.
pub fn correct_segments(labels: &SegmentLabeling, counts: ElementCounts) -> CorrectedSegments {
    let segments = labels.segments();
    let mut keep = vec![false; segments.len()];
    let mut deficits = Vec::new();
    for action in ActionType::ELEMENTS {
        let mut runs: Vec<usize> = (0..segments.len())
            .filter(|&i| segments[i].action == action)
            .collect();
        runs.sort_by(|&a, &b| {
            segments[b]
                .len()
                .cmp(&segments[a].len())
                .then(segments[a].start.cmp(&segments[b].start))
        });
        let wanted = counts.get(action);
        if runs.len() < wanted {
            log::warn!(
                "found {} {action} segment(s) but {wanted} are planned",
                runs.len()
            );
            deficits.push(CountDeficit {
                action,
                planned: wanted,
                found: runs.len(),
            });
        }
        for &i in runs.iter().take(wanted) {
            keep[i] = true;
        }
    }
    let mut out = labels.labels().to_vec();
    for (s, kept) in segments.iter().zip(keep) {
        if s.action.is_element() && !kept {
            out[s.start..s.end].fill(ActionType::Transition);
        }
    }
    CorrectedSegments {
        labeling: SegmentLabeling::new(out),
        deficits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use ActionType::{Jump as J, Spin as S, StepSequence as Q, Transition as T};

    fn one_hot(labels: &[ActionType]) -> Tensor {
        let mut t = Tensor::zeros(labels.len().max(1), 4);
        for (r, a) in labels.iter().enumerate() {
            t.set(r, a.index(), 1.0);
        }
        t
    }

    #[test]
    fn one_hot_logits_decode_to_their_labels() {
        let labels = [T, J, J, S, Q, T];
        assert_eq!(
            decode_labels(&one_hot(&labels), &[true; 6]).labels(),
            &labels
        );
    }

    #[test]
    fn ties_go_to_the_lower_class() {
        let t = Tensor::from_rows(&[[0.0, 2.0, 2.0, 1.0], [5.0, 5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(decode_labels(&t, &[true, true]).labels(), &[J, T]);
    }

    #[test]
    fn padded_windows_are_not_decoded() {
        let t = one_hot(&[J, S, T]);
        assert_eq!(decode_labels(&t, &[true, true, false]).labels(), &[J, S]);
    }

    #[test]
    fn decode_matches_argmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut t = Tensor::zeros(200, 4);
        for v in t.as_mut_slice() {
            *v = rng.gen_range(-3.0..3.0);
        }
        let decoded = decode_labels(&t, &[true; 200]);
        for r in 0..200 {
            let row = t.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let oracle = row.iter().position(|&v| v == max).unwrap();
            assert_eq!(decoded.labels()[r].index(), oracle);
        }
    }

    #[test]
    fn short_and_unplanned_runs_are_relabelled() {
        let labels = SegmentLabeling::new(vec![J, J, T, J, T, S, S]);
        let out = correct_segments(&labels, ElementCounts::new(1, 0, 0));
        assert_eq!(out.labeling.labels(), &[J, J, T, T, T, T, T]);
        assert!(out.deficits.is_empty());
        // with one spin planned the spin run survives
        let out = correct_segments(&labels, ElementCounts::new(1, 1, 0));
        assert_eq!(out.labeling.labels(), &[J, J, T, T, T, S, S]);
    }

    #[test]
    fn consistent_labels_are_a_fixed_point() {
        let labels = SegmentLabeling::new(vec![T, J, J, T, S, T, Q, Q, Q, T, J]);
        let out = correct_segments(&labels, ElementCounts::new(2, 1, 1));
        assert_eq!(out.labeling, labels);
    }

    #[test]
    fn equal_length_tie_keeps_the_earlier_run() {
        let labels = SegmentLabeling::new(vec![T, J, J, T, J, J, T]);
        let out = correct_segments(&labels, ElementCounts::new(1, 0, 0));
        assert_eq!(out.labeling.labels(), &[T, J, J, T, T, T, T]);
    }

    #[test]
    fn deficit_keeps_everything_and_reports() {
        let labels = SegmentLabeling::new(vec![T, J, T, S, S]);
        let out = correct_segments(&labels, ElementCounts::new(3, 1, 1));
        assert_eq!(out.labeling, labels);
        assert_eq!(
            out.deficits,
            vec![
                CountDeficit {
                    action: J,
                    planned: 3,
                    found: 1
                },
                CountDeficit {
                    action: Q,
                    planned: 1,
                    found: 0
                }
            ]
        );
    }

    fn arb_labels() -> impl Strategy<Value = Vec<ActionType>> {
        proptest::collection::vec(
            (0usize..4).prop_map(|i| ActionType::from_index(i).unwrap()),
            0..40,
        )
    }

    proptest! {
        #[test]
        fn correction_properties(labels in arb_labels(), nj in 0usize..4, ns in 0usize..4, nq in 0usize..3) {
            let counts = ElementCounts::new(nj, ns, nq);
            let labeling = SegmentLabeling::new(labels);
            let once = correct_segments(&labeling, counts);
            let twice = correct_segments(&once.labeling, counts);
            prop_assert_eq!(&twice.labeling, &once.labeling);

            let element_windows = |l: &SegmentLabeling| l.labels().iter().filter(|a| a.is_element()).count();
            prop_assert!(element_windows(&once.labeling) <= element_windows(&labeling));

            let before = labeling.segments();
            for action in ActionType::ELEMENTS {
                let available = before.iter().filter(|s| s.action == action).count();
                let after = once.labeling.segments().iter().filter(|s| s.action == action).count();
                prop_assert_eq!(after, available.min(counts.get(action)));
            }
            // kept runs are unchanged in extent
            for s in once.labeling.element_segments() {
                prop_assert!(before.contains(&s));
            }
        }

        #[test]
        fn decode_inverts_one_hot(labels in arb_labels()) {
            prop_assume!(!labels.is_empty());
            let mask = vec![true; labels.len()];
            let decoded = decode_labels(&one_hot(&labels), &mask);
            prop_assert_eq!(decoded.labels(), &labels[..]);
        }
    }
}
