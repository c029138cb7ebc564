use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ElementTarget, ModelVariant, PipelineError};
use crate::data::{pad_and_slice, EmbeddingSequence, SegmentBlock, DEFAULT_MAX_SEGMENT_WINDOWS};
use crate::heads::{Bounds, ElementHead, HeadConfig, SequenceHead};
use crate::kernel::{KernelError, Parameters, Tensor};
use crate::rubric::{ScoreSheet, Segment};
use crate::segmentation::{MsTcn, MsTcnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub mstcn: MsTcnConfig,
    pub head: HeadConfig,
    pub max_segment_windows: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            mstcn: MsTcnConfig::default(),
            head: HeadConfig::default(),
            max_segment_windows: DEFAULT_MAX_SEGMENT_WINDOWS,
        }
    }
}

/// Trainable state of one variant. Components the variant does not use are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: ModelVariant,
    pub architecture: Architecture,
    pub segmenter: Option<MsTcn>,
    pub element: Option<ElementHead>,
    pub sequence: SequenceHead,
}

fn element_bounds(target: ElementTarget) -> Bounds {
    match target {
        ElementTarget::Goe => Bounds::GOE,
        ElementTarget::Tes => Bounds::NONE,
    }
}

pub(crate) fn sequence_bounds(variant: ModelVariant) -> Bounds {
    if variant.sequence_outputs() == crate::rubric::PCS_COMPONENTS {
        Bounds::PCS
    } else {
        Bounds::NONE
    }
}

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(
        variant: ModelVariant,
        input_dim: usize,
        architecture: Architecture,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        let segmenter = if variant.uses_segments() {
            Some(MsTcn::new(input_dim, architecture.mstcn, rng)?)
        } else {
            None
        };
        let element = match variant.element_target() {
            Some(t) => Some(ElementHead::new(
                input_dim,
                architecture.head,
                element_bounds(t),
                rng,
            )?),
            None => None,
        };
        let sequence = SequenceHead::new(
            input_dim,
            variant.sequence_outputs(),
            architecture.head,
            sequence_bounds(variant),
            rng,
        )?;
        Ok(ModelParams {
            variant,
            architecture,
            segmenter,
            element,
            sequence,
        })
    }

    /// All-zero parameters with the shapes `new` would produce.
    pub fn zeros(
        variant: ModelVariant,
        input_dim: usize,
        architecture: Architecture,
    ) -> Result<Self, KernelError> {
        let segmenter = if variant.uses_segments() {
            Some(MsTcn::zeros(input_dim, architecture.mstcn)?)
        } else {
            None
        };
        let element = match variant.element_target() {
            Some(t) => Some(ElementHead::zeros(
                input_dim,
                architecture.head,
                element_bounds(t),
            )?),
            None => None,
        };
        let sequence = SequenceHead::zeros(
            input_dim,
            variant.sequence_outputs(),
            architecture.head,
            sequence_bounds(variant),
        )?;
        Ok(ModelParams {
            variant,
            architecture,
            segmenter,
            element,
            sequence,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sequence.input_dim()
    }

    /// Element blocks in sheet order from explicit element segments.
    pub(crate) fn blocks(
        &self,
        embeddings: &EmbeddingSequence,
        segments: &[Segment],
    ) -> Result<Vec<SegmentBlock>, PipelineError> {
        Ok(pad_and_slice(
            embeddings,
            segments,
            self.architecture.max_segment_windows,
        )?)
    }

    pub(crate) fn check_input(&self, embeddings: &EmbeddingSequence) -> Result<(), PipelineError> {
        if embeddings.dim() != self.input_dim() {
            return Err(KernelError::DimensionMismatch {
                op: "model input",
                expected: self.input_dim(),
                found: embeddings.dim(),
            }
            .into());
        }
        Ok(())
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        if let Some(s) = &self.segmenter {
            v.extend(s.tensors());
        }
        if let Some(e) = &self.element {
            v.extend(e.tensors());
        }
        v.extend(self.sequence.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        if let Some(s) = &mut self.segmenter {
            v.extend(s.tensors_mut());
        }
        if let Some(e) = &mut self.element {
            v.extend(e.tensors_mut());
        }
        v.extend(self.sequence.tensors_mut());
        v
    }
}

/// Splits `[0, valid)` into one equal-width chunk per planned element, in
/// plan order. Used by variants that do not segment.
pub fn uniform_segments(sheet: &ScoreSheet, valid: usize) -> Vec<Segment> {
    let n = sheet.elements.len();
    sheet
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| Segment {
            action: e.action,
            start: i * valid / n,
            end: (i + 1) * valid / n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn components_match_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for v in ModelVariant::ALL {
            let m = ModelParams::new(v, 8, Architecture::default(), &mut rng).unwrap();
            assert_eq!(m.segmenter.is_some(), v.uses_segments());
            assert_eq!(m.element.is_some(), v.element_target().is_some());
            assert_eq!(m.sequence.outputs(), v.sequence_outputs());
            let z = ModelParams::zeros(v, 8, Architecture::default()).unwrap();
            assert_eq!(z.parameter_count(), m.parameter_count());
        }
    }

    #[test]
    fn uniform_chunks_cover_the_valid_range() {
        let config = SyntheticConfig {
            n_records: 3,
            ..SyntheticConfig::default()
        };
        for r in generate_synthetic(&config, 2).unwrap() {
            let valid = r.embeddings.valid_count();
            let segs = uniform_segments(&r.sheet, valid);
            assert_eq!(segs.len(), r.sheet.elements.len());
            assert_eq!(segs[0].start, 0);
            assert_eq!(segs.last().unwrap().end, valid);
            for w in segs.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }
}
