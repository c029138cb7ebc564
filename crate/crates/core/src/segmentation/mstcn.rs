use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSequence;
use crate::kernel::{
    relu, relu_backward, softmax_backward, softmax_rows, Conv1d, KernelError, Parameters, Tensor,
};
use crate::rubric::ActionType;

/// Number of output classes (Transition, Jump, Spin, StepSequence).
pub const CLASSES: usize = ActionType::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsTcnConfig {
    pub stages: usize,
    /// Dilated layers per stage; layer `l` uses dilation `2^l`.
    pub layers: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl Default for MsTcnConfig {
    fn default() -> Self {
        MsTcnConfig {
            stages: 2,
            layers: 6,
            channels: 32,
            kernel: 3,
        }
    }
}

/// `h + W_1x1 · relu(dilated_conv(h))`
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayer {
    pub dilated: Conv1d,
    pub pointwise: Conv1d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub input: Conv1d,
    pub layers: Vec<ResidualLayer>,
    pub output: Conv1d,
}

/// Multi-stage temporal convolutional network producing per-window class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MsTcn {
    pub stages: Vec<Stage>,
}

struct LayerTrace {
    input: Tensor,
    pre_activation: Tensor,
    activation: Tensor,
}

struct StageTrace {
    input: Tensor,
    layers: Vec<LayerTrace>,
    last_hidden: Tensor,
    logits: Tensor,
    probs: Tensor,
}

/// Intermediate values of one forward pass, consumed by [`MsTcn::backward`].
pub struct MsTcnTrace {
    stages: Vec<StageTrace>,
}

impl MsTcnTrace {
    pub fn logits(&self) -> Vec<&Tensor> {
        self.stages.iter().map(|s| &s.logits).collect()
    }

    pub fn final_logits(&self) -> &Tensor {
        &self.stages.last().expect("at least one stage").logits
    }
}

impl MsTcn {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        config: MsTcnConfig,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        Self::build(input_dim, config, |c_in, c_out, k, d| {
            Conv1d::new(c_in, c_out, k, d, rng)
        })
    }

    pub fn zeros(input_dim: usize, config: MsTcnConfig) -> Result<Self, KernelError> {
        Self::build(input_dim, config, Conv1d::zeros)
    }

    fn build(
        input_dim: usize,
        config: MsTcnConfig,
        mut conv: impl FnMut(usize, usize, usize, usize) -> Result<Conv1d, KernelError>,
    ) -> Result<Self, KernelError> {
        if config.stages == 0 {
            return Err(KernelError::Geometry(
                "MS-TCN needs at least one stage".into(),
            ));
        }
        let f = config.channels;
        let mut stages = Vec::with_capacity(config.stages);
        for s in 0..config.stages {
            let c_in = if s == 0 { input_dim } else { CLASSES };
            let input = conv(c_in, f, 1, 1)?;
            let layers = (0..config.layers)
                .map(|l| {
                    Ok(ResidualLayer {
                        dilated: conv(f, f, config.kernel, 1 << l)?,
                        pointwise: conv(f, f, 1, 1)?,
                    })
                })
                .collect::<Result<_, KernelError>>()?;
            let output = conv(f, CLASSES, 1, 1)?;
            stages.push(Stage {
                input,
                layers,
                output,
            });
        }
        Ok(MsTcn { stages })
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].input.in_channels()
    }

    /// Runs every stage over `windows` (valid windows only).
    pub fn forward(&self, windows: &Tensor) -> Result<MsTcnTrace, KernelError> {
        let mut traces: Vec<StageTrace> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = match traces.last() {
                None => windows.clone(),
                Some(prev) => prev.probs.clone(),
            };
            let mut h = stage.input.forward(&input)?;
            let mut layers = Vec::with_capacity(stage.layers.len());
            for layer in &stage.layers {
                let pre = layer.dilated.forward(&h)?;
                let act = relu(&pre);
                let mut next = layer.pointwise.forward(&act)?;
                next.add_assign(&h);
                layers.push(LayerTrace {
                    input: h,
                    pre_activation: pre,
                    activation: act,
                });
                h = next;
            }
            let logits = stage.output.forward(&h)?;
            let probs = softmax_rows(&logits);
            traces.push(StageTrace {
                input,
                layers,
                last_hidden: h,
                logits,
                probs,
            });
        }
        Ok(MsTcnTrace { stages: traces })
    }

    /// Backpropagates per-stage logit gradients, accumulating into `grads`.
    pub fn backward(&self, trace: &MsTcnTrace, grad_logits: &[Tensor], grads: &mut MsTcn) {
        assert_eq!(
            grad_logits.len(),
            self.stages.len(),
            "one logit gradient per stage"
        );
        let mut carried: Option<Tensor> = None;
        for s in (0..self.stages.len()).rev() {
            let stage = &self.stages[s];
            let st = &trace.stages[s];
            let g_stage = &mut grads.stages[s];
            let mut g_logits = grad_logits[s].clone();
            if let Some(c) = carried.take() {
                g_logits.add_assign(&c);
            }
            let mut g_h = stage
                .output
                .backward(&st.last_hidden, &g_logits, &mut g_stage.output);
            for (l, layer) in stage.layers.iter().enumerate().rev() {
                let lt = &st.layers[l];
                let g_act = layer.pointwise.backward(
                    &lt.activation,
                    &g_h,
                    &mut g_stage.layers[l].pointwise,
                );
                let g_pre = relu_backward(&lt.pre_activation, &g_act);
                let g_in =
                    layer
                        .dilated
                        .backward(&lt.input, &g_pre, &mut g_stage.layers[l].dilated);
                g_h.add_assign(&g_in);
            }
            if s == 0 {
                stage
                    .input
                    .accumulate_param_grads(&st.input, &g_h, &mut g_stage.input);
            } else {
                let g_probs = stage.input.backward(&st.input, &g_h, &mut g_stage.input);
                carried = Some(softmax_backward(&trace.stages[s - 1].probs, &g_probs));
            }
        }
    }
}

impl Parameters for MsTcn {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.input.tensors());
            for l in &s.layers {
                out.extend(l.dilated.tensors());
                out.extend(l.pointwise.tensors());
            }
            out.extend(s.output.tensors());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.extend(s.input.tensors_mut());
            for l in &mut s.layers {
                out.extend(l.dilated.tensors_mut());
                out.extend(l.pointwise.tensors_mut());
            }
            out.extend(s.output.tensors_mut());
        }
        out
    }
}

/// Per-stage `T x 4` logits for a padded sequence. The network sees only
/// the valid windows; padded rows of every output are zero.
pub fn mstcn_forward(
    embeddings: &EmbeddingSequence,
    params: &MsTcn,
) -> Result<Vec<Tensor>, KernelError> {
    if embeddings.dim() != params.input_dim() {
        return Err(KernelError::DimensionMismatch {
            op: "mstcn input",
            expected: params.input_dim(),
            found: embeddings.dim(),
        });
    }
    let trace = params.forward(&embeddings.valid_windows())?;
    Ok(trace
        .logits()
        .into_iter()
        .map(|l| {
            let mut full = Tensor::zeros(embeddings.len(), CLASSES);
            for t in 0..l.rows() {
                full.row_mut(t).copy_from_slice(l.row(t));
            }
            full
        })
        .collect())
}
