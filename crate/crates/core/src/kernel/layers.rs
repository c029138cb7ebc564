use rand::Rng;

use super::{KernelError, Tensor};

fn uniform_init<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(rows, cols);
    for v in t.as_mut_slice() {
        *v = rng.gen_range(-bound..=bound);
    }
    t
}

/// Same-padded dilated 1-D convolution over the time axis.
///
/// `weight` is stored tap-major: rows `j * c_in .. (j + 1) * c_in` hold the
/// `c_in x c_out` matrix for tap `j`. Tap `j` reads window
/// `t + dilation * (j - (kernel - 1) / 2)`; reads outside the sequence are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    kernel: usize,
    dilation: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        let mut conv = Conv1d::zeros(c_in, c_out, kernel, dilation)?;
        conv.weight = uniform_init(kernel * c_in, c_out, kernel * c_in, rng);
        Ok(conv)
    }

    pub fn zeros(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
    ) -> Result<Self, KernelError> {
        if kernel % 2 == 0 || dilation == 0 || c_in == 0 || c_out == 0 {
            return Err(KernelError::Geometry(format!(
                "conv1d needs an odd kernel, positive dilation and channels (kernel {kernel}, dilation {dilation}, {c_in}->{c_out})"
            )));
        }
        Ok(Conv1d {
            weight: Tensor::zeros(kernel * c_in, c_out),
            bias: Tensor::zeros(1, c_out),
            kernel,
            dilation,
        })
    }

    /// Builds a layer from explicit weights (`kernel * c_in` rows, tap-major) and bias.
    pub fn from_parts(
        weight: Tensor,
        bias: Vec<f64>,
        kernel: usize,
        dilation: usize,
    ) -> Result<Self, KernelError> {
        if kernel % 2 == 0 || dilation == 0 || weight.rows() % kernel != 0 {
            return Err(KernelError::Geometry(format!(
                "weight with {} rows does not fit kernel {kernel} (dilation {dilation})",
                weight.rows()
            )));
        }
        if bias.len() != weight.cols() {
            return Err(KernelError::DimensionMismatch {
                op: "conv1d bias",
                expected: weight.cols(),
                found: bias.len(),
            });
        }
        let bias = Tensor::from_vec(1, bias.len(), bias)?;
        Ok(Conv1d {
            weight,
            bias,
            kernel,
            dilation,
        })
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn in_channels(&self) -> usize {
        self.weight.rows() / self.kernel
    }

    pub fn out_channels(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    fn tap_offset(&self, j: usize) -> isize {
        self.dilation as isize * (j as isize - (self.kernel as isize - 1) / 2)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, KernelError> {
        let c_in = self.in_channels();
        let c_out = self.out_channels();
        if input.cols() != c_in {
            return Err(KernelError::DimensionMismatch {
                op: "conv1d",
                expected: c_in,
                found: input.cols(),
            });
        }
        let t_len = input.rows() as isize;
        let mut out = Tensor::zeros(input.rows(), c_out);
        let bias = self.bias.row(0);
        for t in 0..input.rows() {
            out.row_mut(t).copy_from_slice(bias);
        }
        for j in 0..self.kernel {
            let off = self.tap_offset(j);
            for t in 0..input.rows() {
                let s = t as isize + off;
                if s < 0 || s >= t_len {
                    continue;
                }
                let x = input.row(s as usize);
                let out_row = &mut out.as_mut_slice()[t * c_out..(t + 1) * c_out];
                for (ci, &xv) in x.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let w = self.weight.row(j * c_in + ci);
                    for (o, &wv) in out_row.iter_mut().zip(w) {
                        *o += xv * wv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to `input`.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut Conv1d) -> Tensor {
        self.accumulate_param_grads(input, grad_out, grads);
        self.input_grad(input.rows(), grad_out)
    }

    pub fn accumulate_param_grads(&self, input: &Tensor, grad_out: &Tensor, grads: &mut Conv1d) {
        let c_in = self.in_channels();
        let c_out = self.out_channels();
        debug_assert_eq!(grad_out.shape(), (input.rows(), c_out));
        let t_len = input.rows() as isize;
        {
            let gb = grads.bias.as_mut_slice();
            for t in 0..grad_out.rows() {
                for (b, g) in gb.iter_mut().zip(grad_out.row(t)) {
                    *b += g;
                }
            }
        }
        for j in 0..self.kernel {
            let off = self.tap_offset(j);
            for t in 0..input.rows() {
                let s = t as isize + off;
                if s < 0 || s >= t_len {
                    continue;
                }
                let go = grad_out.row(t);
                for (ci, &xv) in input.row(s as usize).iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let gw = grads.weight.row_mut(j * c_in + ci);
                    for (w, &g) in gw.iter_mut().zip(go) {
                        *w += xv * g;
                    }
                }
            }
        }
    }

    pub fn input_grad(&self, rows: usize, grad_out: &Tensor) -> Tensor {
        let c_in = self.in_channels();
        let t_len = rows as isize;
        let mut grad_in = Tensor::zeros(rows, c_in);
        for j in 0..self.kernel {
            let off = self.tap_offset(j);
            for t in 0..rows {
                let s = t as isize + off;
                if s < 0 || s >= t_len {
                    continue;
                }
                let go = grad_out.row(t);
                let gi = grad_in.row_mut(s as usize);
                for (ci, g) in gi.iter_mut().enumerate() {
                    let w = self.weight.row(j * c_in + ci);
                    *g += dot(w, go);
                }
            }
        }
        grad_in
    }
}

/// Fully connected layer `input · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Dense {
            weight: uniform_init(c_in, c_out, c_in, rng),
            bias: Tensor::zeros(1, c_out),
        }
    }

    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Dense {
            weight: Tensor::zeros(c_in, c_out),
            bias: Tensor::zeros(1, c_out),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Vec<f64>) -> Result<Self, KernelError> {
        if bias.len() != weight.cols() {
            return Err(KernelError::DimensionMismatch {
                op: "dense bias",
                expected: weight.cols(),
                found: bias.len(),
            });
        }
        let bias = Tensor::from_vec(1, bias.len(), bias)?;
        Ok(Dense { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, KernelError> {
        if input.cols() != self.in_features() {
            return Err(KernelError::DimensionMismatch {
                op: "dense",
                expected: self.in_features(),
                found: input.cols(),
            });
        }
        let mut out = Tensor::zeros(input.rows(), self.out_features());
        for r in 0..input.rows() {
            let out_row = out.row_mut(r);
            out_row.copy_from_slice(self.bias.row(0));
            for (i, &xv) in input.row(r).iter().enumerate() {
                for (o, &w) in out_row.iter_mut().zip(self.weight.row(i)) {
                    *o += xv * w;
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut Dense) -> Tensor {
        let mut grad_in = Tensor::zeros(input.rows(), self.in_features());
        for r in 0..input.rows() {
            let go = grad_out.row(r);
            for (b, g) in grads.bias.as_mut_slice().iter_mut().zip(go) {
                *b += g;
            }
            for (i, &xv) in input.row(r).iter().enumerate() {
                for (w, &g) in grads.weight.row_mut(i).iter_mut().zip(go) {
                    *w += xv * g;
                }
                grad_in.set(r, i, dot(self.weight.row(i), go));
            }
        }
        grad_in
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given its pre-activation input.
pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &p) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub fn log_softmax_rows(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Gradient through row softmax: `dx = p ⊙ (g - <g, p>)`.
pub fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let go = grad_out.row(r);
        let inner = dot(p, go);
        for ((o, &pv), &gv) in g.row_mut(r).iter_mut().zip(p).zip(go) {
            *o = pv * (gv - inner);
        }
    }
    g
}

/// Gradient through row log-softmax: `dx = g - p * sum(g)`.
pub fn log_softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let go = grad_out.row(r);
        let total: f64 = go.iter().sum();
        for ((o, &pv), &gv) in g.row_mut(r).iter_mut().zip(probs.row(r)).zip(go) {
            *o = gv - pv * total;
        }
    }
    g
}

/// Mean over the first `valid` rows, as a `1 x C` tensor.
pub fn mean_pool(input: &Tensor, valid: usize) -> Result<Tensor, KernelError> {
    if valid == 0 || valid > input.rows() {
        return Err(KernelError::DimensionMismatch {
            op: "mean_pool",
            expected: input.rows(),
            found: valid,
        });
    }
    let mut out = Tensor::zeros(1, input.cols());
    for r in 0..valid {
        for (o, v) in out.as_mut_slice().iter_mut().zip(input.row(r)) {
            *o += v;
        }
    }
    out.scale(1.0 / valid as f64);
    Ok(out)
}

pub fn mean_pool_backward(rows: usize, valid: usize, grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(rows, grad_out.cols());
    let inv = 1.0 / valid as f64;
    for r in 0..valid {
        for (o, &v) in g.row_mut(r).iter_mut().zip(grad_out.row(0)) {
            *o = v * inv;
        }
    }
    g
}
