//! Score regression heads: the action-conditioned element head that predicts
//! a GOE from one segment block, and the multi-output sequence head that
//! predicts the five program components from a whole performance.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EmbeddingSequence, PerformanceRecord, SegmentBlock};
use crate::kernel::{
    mean_pool, mean_pool_backward, relu, relu_backward, Conv1d, Dense, KernelError, Parameters,
    Tensor,
};
use crate::rubric::{ActionType, GOE_MAX, GOE_MIN, PCS_COMPONENTS, PCS_MAX, PCS_MIN};

/// One-hot width of the action condition (Jump, Spin, StepSequence).
pub const CONDITION_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("the element head cannot be conditioned on Transition")]
    TransitionCondition,
    #[error("empty input: a head needs at least one window")]
    EmptyInput,
    #[error("record {id} carries no ground truth")]
    MissingTruth { id: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub channels: usize,
    pub kernel: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            channels: 32,
            kernel: 3,
        }
    }
}

/// Closed output interval; infinite ends leave that side unclamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const GOE: Bounds = Bounds {
        lo: GOE_MIN,
        hi: GOE_MAX,
    };
    pub const PCS: Bounds = Bounds {
        lo: PCS_MIN,
        hi: PCS_MAX,
    };
    pub const NONE: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    fn clamp(self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    /// Gradient passes only where the clamp is inactive.
    fn passes(self, raw: f64) -> bool {
        raw >= self.lo && raw <= self.hi
    }
}

/// Two ReLU convolutions followed by a mean over all input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTrunk {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

struct TrunkTrace {
    input: Tensor,
    pre1: Tensor,
    act1: Tensor,
    pre2: Tensor,
}

impl ConvTrunk {
    fn new<R: Rng + ?Sized>(
        input_dim: usize,
        config: HeadConfig,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        Ok(ConvTrunk {
            conv1: Conv1d::new(input_dim, config.channels, config.kernel, 1, rng)?,
            conv2: Conv1d::new(config.channels, config.channels, config.kernel, 1, rng)?,
        })
    }

    fn zeros(input_dim: usize, config: HeadConfig) -> Result<Self, KernelError> {
        Ok(ConvTrunk {
            conv1: Conv1d::zeros(input_dim, config.channels, config.kernel, 1)?,
            conv2: Conv1d::zeros(config.channels, config.channels, config.kernel, 1)?,
        })
    }

    fn forward(&self, input: &Tensor) -> Result<(Tensor, TrunkTrace), KernelError> {
        let pre1 = self.conv1.forward(input)?;
        let act1 = relu(&pre1);
        let pre2 = self.conv2.forward(&act1)?;
        let pooled = mean_pool(&relu(&pre2), input.rows())?;
        Ok((
            pooled,
            TrunkTrace {
                input: input.clone(),
                pre1,
                act1,
                pre2,
            },
        ))
    }

    fn backward(&self, trace: &TrunkTrace, grad_pooled: &Tensor, grads: &mut ConvTrunk) {
        let rows = trace.input.rows();
        let g_act2 = mean_pool_backward(rows, rows, grad_pooled);
        let g_pre2 = relu_backward(&trace.pre2, &g_act2);
        let g_act1 = self.conv2.backward(&trace.act1, &g_pre2, &mut grads.conv2);
        let g_pre1 = relu_backward(&trace.pre1, &g_act1);
        self.conv1
            .accumulate_param_grads(&trace.input, &g_pre1, &mut grads.conv1);
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.conv1.tensors();
        v.extend(self.conv2.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.conv1.tensors_mut();
        v.extend(self.conv2.tensors_mut());
        v
    }
}

/// Action-conditioned scalar regressor over one segment block.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementHead {
    pub trunk: ConvTrunk,
    pub hidden: Dense,
    pub output: Dense,
    pub bounds: Bounds,
}

/// Forward intermediates of [`ElementHead`].
pub struct ElementTrace {
    trunk: TrunkTrace,
    features: Tensor,
    pre_hidden: Tensor,
    hidden: Tensor,
    raw: f64,
    value: f64,
}

impl ElementTrace {
    pub fn value(&self) -> f64 {
        self.value
    }
}

fn condition(action: ActionType) -> Result<Tensor, HeadError> {
    let i = action
        .element_index()
        .ok_or(HeadError::TransitionCondition)?;
    let mut c = Tensor::zeros(1, CONDITION_WIDTH);
    c.set(0, i, 1.0);
    Ok(c)
}

impl ElementHead {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        config: HeadConfig,
        bounds: Bounds,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        let trunk = ConvTrunk::new(input_dim, config, rng)?;
        let hidden = Dense::new(config.channels + CONDITION_WIDTH, config.channels, rng);
        let output = Dense::new(config.channels, 1, rng);
        Ok(ElementHead {
            trunk,
            hidden,
            output,
            bounds,
        })
    }

    pub fn zeros(
        input_dim: usize,
        config: HeadConfig,
        bounds: Bounds,
    ) -> Result<Self, KernelError> {
        Ok(ElementHead {
            trunk: ConvTrunk::zeros(input_dim, config)?,
            hidden: Dense::zeros(config.channels + CONDITION_WIDTH, config.channels),
            output: Dense::zeros(config.channels, 1),
            bounds,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.conv1.in_channels()
    }

    /// Runs on the non-padding rows of a block.
    pub fn forward(&self, content: &Tensor, action: ActionType) -> Result<ElementTrace, HeadError> {
        let cond = condition(action)?;
        let (pooled, trunk) = self.trunk.forward(content)?;
        let features = pooled.hcat(&cond)?;
        let pre_hidden = self.hidden.forward(&features)?;
        let hidden = relu(&pre_hidden);
        let raw = self.output.forward(&hidden)?.get(0, 0);
        Ok(ElementTrace {
            trunk,
            features,
            pre_hidden,
            hidden,
            raw,
            value: self.bounds.clamp(raw),
        })
    }

    pub fn backward(&self, trace: &ElementTrace, grad_value: f64, grads: &mut ElementHead) {
        if !self.bounds.passes(trace.raw) {
            return;
        }
        let g_out = Tensor::filled(1, 1, grad_value);
        let g_hidden = self
            .output
            .backward(&trace.hidden, &g_out, &mut grads.output);
        let g_pre = relu_backward(&trace.pre_hidden, &g_hidden);
        let g_features = self
            .hidden
            .backward(&trace.features, &g_pre, &mut grads.hidden);
        let channels = self.trunk.conv2.out_channels();
        let g_pooled = Tensor::from_vec(1, channels, g_features.as_slice()[..channels].to_vec())
            .expect("pooled width matches trunk channels");
        self.trunk
            .backward(&trace.trunk, &g_pooled, &mut grads.trunk);
    }

    pub fn predict(&self, block: &SegmentBlock, action: ActionType) -> Result<f64, HeadError> {
        if block.len == 0 {
            return Err(HeadError::EmptyInput);
        }
        if block.windows.cols() != self.input_dim() {
            return Err(KernelError::DimensionMismatch {
                op: "element head input",
                expected: self.input_dim(),
                found: block.windows.cols(),
            }
            .into());
        }
        Ok(self.forward(&block.content(), action)?.value())
    }
}

impl Parameters for ElementHead {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.trunk.tensors();
        v.extend(self.hidden.tensors());
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.trunk.tensors_mut();
        v.extend(self.hidden.tensors_mut());
        v.extend(self.output.tensors_mut());
        v
    }
}

/// Multi-output regressor over the valid windows of a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceHead {
    pub trunk: ConvTrunk,
    pub hidden: Dense,
    pub output: Dense,
    pub bounds: Bounds,
}

/// Forward intermediates of [`SequenceHead`].
pub struct SequenceTrace {
    trunk: TrunkTrace,
    pooled: Tensor,
    pre_hidden: Tensor,
    hidden: Tensor,
    raw: Vec<f64>,
    values: Vec<f64>,
}

impl SequenceTrace {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SequenceHead {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        outputs: usize,
        config: HeadConfig,
        bounds: Bounds,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        let trunk = ConvTrunk::new(input_dim, config, rng)?;
        let hidden = Dense::new(config.channels, config.channels, rng);
        let output = Dense::new(config.channels, outputs, rng);
        Ok(SequenceHead {
            trunk,
            hidden,
            output,
            bounds,
        })
    }

    pub fn zeros(
        input_dim: usize,
        outputs: usize,
        config: HeadConfig,
        bounds: Bounds,
    ) -> Result<Self, KernelError> {
        Ok(SequenceHead {
            trunk: ConvTrunk::zeros(input_dim, config)?,
            hidden: Dense::zeros(config.channels, config.channels),
            output: Dense::zeros(config.channels, outputs),
            bounds,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.conv1.in_channels()
    }

    pub fn outputs(&self) -> usize {
        self.output.out_features()
    }

    /// Runs on valid windows only; padding must already be stripped.
    pub fn forward(&self, windows: &Tensor) -> Result<SequenceTrace, HeadError> {
        let (pooled, trunk) = self.trunk.forward(windows)?;
        let pre_hidden = self.hidden.forward(&pooled)?;
        let hidden = relu(&pre_hidden);
        let raw = self.output.forward(&hidden)?.into_vec();
        let values = raw.iter().map(|&v| self.bounds.clamp(v)).collect();
        Ok(SequenceTrace {
            trunk,
            pooled,
            pre_hidden,
            hidden,
            raw,
            values,
        })
    }

    pub fn backward(&self, trace: &SequenceTrace, grad_values: &[f64], grads: &mut SequenceHead) {
        let g: Vec<f64> = grad_values
            .iter()
            .zip(&trace.raw)
            .map(|(&g, &r)| if self.bounds.passes(r) { g } else { 0.0 })
            .collect();
        if g.iter().all(|&v| v == 0.0) {
            return;
        }
        let g_out = Tensor::from_vec(1, g.len(), g).expect("one gradient per output");
        let g_hidden = self
            .output
            .backward(&trace.hidden, &g_out, &mut grads.output);
        let g_pre = relu_backward(&trace.pre_hidden, &g_hidden);
        let g_pooled = self
            .hidden
            .backward(&trace.pooled, &g_pre, &mut grads.hidden);
        self.trunk
            .backward(&trace.trunk, &g_pooled, &mut grads.trunk);
    }

    pub fn predict(&self, embeddings: &EmbeddingSequence) -> Result<Vec<f64>, HeadError> {
        if embeddings.valid_count() == 0 {
            return Err(HeadError::EmptyInput);
        }
        if embeddings.dim() != self.input_dim() {
            return Err(KernelError::DimensionMismatch {
                op: "sequence head input",
                expected: self.input_dim(),
                found: embeddings.dim(),
            }
            .into());
        }
        Ok(self.forward(&embeddings.valid_windows())?.values)
    }
}

impl Parameters for SequenceHead {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.trunk.tensors();
        v.extend(self.hidden.tensors());
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.trunk.tensors_mut();
        v.extend(self.hidden.tensors_mut());
        v.extend(self.output.tensors_mut());
        v
    }
}

/// GOE prediction in `[-5, 5]` for one element block.
pub fn predict_goe(
    block: &SegmentBlock,
    action: ActionType,
    head: &ElementHead,
) -> Result<f64, HeadError> {
    head.predict(block, action)
}

/// The five program components, each in `[0, 10]`.
pub fn predict_pcs(
    embeddings: &EmbeddingSequence,
    head: &SequenceHead,
) -> Result<[f64; PCS_COMPONENTS], HeadError> {
    let v = head.predict(embeddings)?;
    v.try_into().map_err(|v: Vec<f64>| {
        KernelError::DimensionMismatch {
            op: "pcs head outputs",
            expected: PCS_COMPONENTS,
            found: v.len(),
        }
        .into()
    })
}

/// GOE truths in sheet order and the unfactored component truths.
pub fn training_targets(
    record: &PerformanceRecord,
) -> Result<(Vec<f64>, [f64; PCS_COMPONENTS]), HeadError> {
    let truth = record
        .sheet
        .truth
        .as_ref()
        .ok_or_else(|| HeadError::MissingTruth {
            id: record.id().to_string(),
        })?;
    Ok((truth.goe.clone(), truth.pcs))
}
