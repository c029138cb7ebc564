use serde::{Deserialize, Serialize};

use super::model::{uniform_segments, ModelParams};
use super::{ElementTarget, ModelVariant, PipelineError};
use crate::data::{EmbeddingSequence, SegmentLabeling};
use crate::rubric::{compose_judgment, element_counts, ActionType, Judgment, ScoreSheet, Segment};
use crate::segmentation::{correct_segments, decode_labels};

/// Everything one model predicts for one performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub variant: ModelVariant,
    /// `None` where the variant does not predict the subtotal.
    pub tes: Option<f64>,
    pub pcs: Option<f64>,
    pub total: f64,
    /// Corrected predicted segmentation (segmenting variants only).
    pub segments: Option<Vec<Segment>>,
    pub judgment: Option<Judgment>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Prediction {
    pub fn labeling(&self) -> Option<SegmentLabeling> {
        self.segments
            .as_ref()
            .and_then(|s| SegmentLabeling::from_segments(s).ok())
    }
}

/// Matches detected element runs to planned elements: for each action type,
/// the k-th run of that type (in time) goes to the k-th planned element of
/// that type (in plan order). Unmatched planned elements get `None`.
pub fn assign_segments(labeling: &SegmentLabeling, sheet: &ScoreSheet) -> Vec<Option<Segment>> {
    let runs = labeling.element_segments();
    let mut next = [0usize; ActionType::COUNT];
    sheet
        .elements
        .iter()
        .map(|e| {
            let k = &mut next[e.action.index()];
            let found = runs
                .iter()
                .filter(|s| s.action == e.action)
                .nth(*k)
                .copied();
            *k += 1;
            found
        })
        .collect()
}

struct Segmentation {
    labeling: SegmentLabeling,
    assigned: Vec<Option<Segment>>,
    warnings: Vec<String>,
}

fn segment(
    model: &ModelParams,
    embeddings: &EmbeddingSequence,
    sheet: &ScoreSheet,
) -> Result<Segmentation, PipelineError> {
    let net = model
        .segmenter
        .as_ref()
        .expect("segmenting variants carry a segmenter");
    let trace = net.forward(&embeddings.valid_windows())?;
    let logits = trace.final_logits();
    let decoded = decode_labels(logits, &vec![true; logits.rows()]);
    let corrected = correct_segments(&decoded, element_counts(sheet));
    let warnings = corrected
        .deficits
        .iter()
        .map(|d| {
            format!(
                "detected {} {} segment(s) but {} are planned",
                d.found, d.action, d.planned
            )
        })
        .collect();
    let assigned = assign_segments(&corrected.labeling, sheet);
    Ok(Segmentation {
        labeling: corrected.labeling,
        assigned,
        warnings,
    })
}

/// Runs the variant's full inference path. Ground-truth fields of `sheet`
/// are never read.
pub fn infer(
    model: &ModelParams,
    embeddings: &EmbeddingSequence,
    sheet: &ScoreSheet,
) -> Result<Prediction, PipelineError> {
    model.check_input(embeddings)?;
    let sheet = sheet.without_truth();
    let sequence = model.sequence.predict(embeddings)?;
    let variant = model.variant;
    let mut prediction = Prediction {
        id: sheet.performance_id.clone(),
        variant,
        tes: None,
        pcs: None,
        total: 0.0,
        segments: None,
        judgment: None,
        warnings: Vec::new(),
    };
    let Some(target) = variant.element_target() else {
        match variant {
            ModelVariant::ScoreOnly => prediction.total = sequence[0],
            _ => {
                prediction.tes = Some(sequence[0]);
                prediction.pcs = Some(sequence[1]);
                prediction.total = sequence[0] + sequence[1];
            }
        }
        return Ok(prediction);
    };

    let (assigned, timeline) = if variant.uses_segments() {
        let seg = segment(model, embeddings, &sheet)?;
        prediction.warnings.extend(seg.warnings);
        let timeline = seg.labeling.segments();
        prediction.segments = Some(timeline.clone());
        (seg.assigned, timeline)
    } else {
        let chunks = uniform_segments(&sheet, embeddings.valid_count());
        (chunks.iter().copied().map(Some).collect(), chunks)
    };

    let head = model
        .element
        .as_ref()
        .expect("element variants carry an element head");
    let mut values = Vec::with_capacity(sheet.elements.len());
    let mut missing = Vec::new();
    for (i, (element, seg)) in sheet.elements.iter().zip(&assigned).enumerate() {
        match seg {
            Some(s) => {
                let block = &model.blocks(embeddings, std::slice::from_ref(s))?[0];
                values.push(head.predict(block, element.action)?);
            }
            None => {
                // an undetected element scores its base value (GOE 0)
                values.push(if target == ElementTarget::Goe {
                    0.0
                } else {
                    element.base
                });
                missing.push(i);
                prediction.warnings.push(format!(
                    "element {} ({}) was not detected; GOE set to 0",
                    element.seq, element.name
                ));
            }
        }
    }
    for w in &prediction.warnings {
        log::warn!("{}: {w}", sheet.performance_id);
    }

    match target {
        ElementTarget::Goe => {
            let mut judgment = compose_judgment(&sheet, &values, &sequence, timeline)?;
            for &i in &missing {
                judgment.mark_missing(i);
            }
            judgment.warnings = prediction.warnings.clone();
            prediction.tes = Some(judgment.tes_total);
            prediction.pcs = Some(judgment.pcs_total);
            prediction.total = judgment.total_score;
            prediction.judgment = Some(judgment);
        }
        ElementTarget::Tes => {
            let tes = values.iter().sum::<f64>();
            let pcs = sheet.composed_pcs(&sequence);
            prediction.tes = Some(tes);
            prediction.pcs = Some(pcs);
            prediction.total = tes + pcs;
        }
    }
    Ok(prediction)
}

/// The explainable score sheet. Only GOE-based variants support this.
pub fn predict(
    model: &ModelParams,
    embeddings: &EmbeddingSequence,
    sheet: &ScoreSheet,
) -> Result<Judgment, PipelineError> {
    if !model.variant.produces_judgment() {
        return Err(PipelineError::Unsupported {
            variant: model.variant,
            what: "a score-sheet judgment",
        });
    }
    Ok(infer(model, embeddings, sheet)?
        .judgment
        .expect("GOE variants compose a judgment"))
}
