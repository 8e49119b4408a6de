//! Feed-forward networks with hand-written reverse-mode gradients, and Adam.
//!
//! Parameters of each layer are stored contiguously as the weight matrix
//! (`in x out`, row-major) followed by the bias vector (`out`). Hidden layers
//! use ReLU, the output layer is affine.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

use crate::linalg::Matrix;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs recorded by [`Mlp::forward_traced`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    output: Matrix,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl Mlp {
    pub fn param_count(layer_sizes: &[usize]) -> usize {
        layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::precondition(
                "an MLP needs at least two non-zero layer sizes",
            ));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; Self::param_count(layer_sizes)],
        })
    }

    /// Truncated-Gaussian fan-in initialization (std = 1/sqrt(fan_in)), zero biases.
    pub fn new<R: rand::Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = std * rng::truncated_normal(rng);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::dims(
                "mlp parameters",
                net.params.len(),
                params.len(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight block and bias of layer `l`.
    fn layer(&self, l: usize) -> (&[f64], &[f64], usize, usize) {
        let offset: usize = self.layer_sizes[..=l]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum();
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
        (w, b, n_in, n_out)
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::dims(
                "network input width",
                self.input_dim(),
                input.cols(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut x = input.clone();
        for l in 0..n_layers {
            x = self.affine(l, &x, l + 1 < n_layers);
        }
        Ok(x)
    }

    pub fn forward_traced(&self, input: &Matrix) -> Result<Trace> {
        self.check_input(input)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut x = input.clone();
        for l in 0..n_layers {
            let y = self.affine(l, &x, l + 1 < n_layers);
            inputs.push(x);
            x = y;
        }
        Ok(Trace { inputs, output: x })
    }

    fn affine(&self, l: usize, x: &Matrix, relu: bool) -> Matrix {
        let (w, b, n_in, n_out) = self.layer(l);
        let mut out = Matrix::zeros(x.rows(), n_out);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let yr = out.row_mut(r);
            yr.copy_from_slice(b);
            for (i, &a) in xr.iter().enumerate().take(n_in) {
                if a == 0.0 {
                    continue;
                }
                let wi = &w[i * n_out..(i + 1) * n_out];
                for (y, &wv) in yr.iter_mut().zip(wi) {
                    *y += a * wv;
                }
            }
            if relu {
                for y in yr.iter_mut() {
                    if *y < 0.0 {
                        *y = 0.0;
                    }
                }
            }
        }
        out
    }

    /// Back-propagates `grad_output` (dL/d output) through the traced pass.
    /// Parameter gradients are accumulated into `param_grad`; the gradient
    /// with respect to the network input is returned.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &Matrix,
        param_grad: &mut [f64],
    ) -> Result<Matrix> {
        if param_grad.len() != self.params.len() {
            return Err(Error::dims(
                "parameter gradient",
                self.params.len(),
                param_grad.len(),
            ));
        }
        self.backprop(trace, grad_output, Some(param_grad), true)
    }

    /// Input gradient only; parameters are treated as constants.
    pub fn input_gradient(&self, trace: &Trace, grad_output: &Matrix) -> Result<Matrix> {
        self.backprop(trace, grad_output, None, true)
    }

    fn backprop(
        &self,
        trace: &Trace,
        grad_output: &Matrix,
        mut param_grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Matrix> {
        if grad_output.rows() != trace.output.rows() || grad_output.cols() != self.output_dim() {
            return Err(Error::dims(
                "output gradient width",
                self.output_dim(),
                grad_output.cols(),
            ));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        let mut delta = grad_output.clone();
        for l in (0..n_layers).rev() {
            let (w, _, n_in, n_out) = self.layer(l);
            let x = &trace.inputs[l];
            if let Some(pg) = param_grad.as_deref_mut() {
                let (gw, gb) =
                    pg[offsets[l]..offsets[l] + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
                for r in 0..x.rows() {
                    let dr = delta.row(r);
                    for (g, &d) in gb.iter_mut().zip(dr) {
                        *g += d;
                    }
                    for (i, &a) in x.row(r).iter().enumerate() {
                        if a != 0.0 {
                            for (g, &d) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(dr) {
                                *g += a * d;
                            }
                        }
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let mut grad_in = Matrix::zeros(x.rows(), n_in);
            for r in 0..x.rows() {
                let dr = delta.row(r);
                let xr = x.row(r);
                let gi = grad_in.row_mut(r);
                for i in 0..n_in {
                    // ReLU: the recorded input of layer l is the activation of layer l-1.
                    if l > 0 && xr[i] <= 0.0 {
                        continue;
                    }
                    gi[i] = dot(&w[i * n_out..(i + 1) * n_out], dr);
                }
            }
            delta = grad_in;
        }
        Ok(delta)
    }

    /// Gradient of a scalar loss of the network output with respect to the
    /// parameters. `loss` returns the loss value and dL/d output.
    pub fn grad<F>(&self, input: &Matrix, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Matrix) -> (f64, Matrix),
    {
        let trace = self.forward_traced(input)?;
        let (value, grad_out) = loss(trace.output());
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                index: 0,
            });
        }
        let mut g = vec![0.0; self.params.len()];
        self.backprop(&trace, &grad_out, Some(&mut g), false)?;
        Ok((value, g))
    }

    /// `self <- (1 - tau) * self + tau * source`, elementwise over parameters.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        debug_assert_eq!(self.params.len(), source.params.len());
        for (t, &s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra
        .iter()
        .zip(&b[a.len() - ra.len()..])
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Bias-corrected adaptive-moment optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::dims(
                "adam parameters",
                self.first_moment.len(),
                params.len(),
            ));
        }
        if grad.len() != params.len() {
            return Err(Error::dims("adam gradient", params.len(), grad.len()));
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let step = self.learning_rate / bc1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / ((*v / bc2).sqrt() + eps);
        }
        Ok(())
    }
}
