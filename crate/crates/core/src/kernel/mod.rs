//! Minimal double-precision kernel: tensors, same-padded dilated 1-D
//! convolution, dense layers, activations, losses, Adam and a
//! finite-difference gradient checker.
//!
//! Every operation is a pure function of its inputs. Backward passes are
//! hand-written and accumulate into a gradient container with the same
//! layout as the parameters.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, FD_STEP, GRAD_FLOOR};
pub use layers::{
    log_softmax_backward, log_softmax_rows, mean_pool, mean_pool_backward, relu, relu_backward,
    softmax_backward, softmax_rows, Conv1d, Dense,
};
pub use loss::{cross_entropy, mse, softmax_cross_entropy};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: shape mismatch (expected {expected:?}, found {found:?})")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("tensor dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid layer geometry: {0}")]
    Geometry(String),
}

/// A model whose trainable state is an ordered list of tensors.
///
/// Gradient containers are values of the same type, so the tensor order of
/// `tensors()` lines up between a model and its gradients.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for t in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    /// Overwrites every parameter from a flat vector in `tensors()` order.
    fn assign_flat(&mut self, values: &[f64]) -> Result<(), KernelError> {
        let count = self.parameter_count();
        if values.len() != count {
            return Err(KernelError::DimensionMismatch {
                op: "assign_flat",
                expected: count,
                found: values.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.as_mut_slice()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += other` over all tensors.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    fn scale_all(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

impl Parameters for Conv1d {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
