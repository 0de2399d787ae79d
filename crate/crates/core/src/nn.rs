//! Small dense networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat [`ParamVector`]. For every layer `l` the
//! weight block (row-major, shape `out x in`) comes first, then the bias
//! block (`out x 1`). Hidden layers apply the network's activation; the
//! final layer is left linear so each model head can apply its own link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z`, given the activated value `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Flat parameter storage plus the block shapes it is made of.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    manifest: Vec<(usize, usize)>,
}

impl ParamVector {
    pub fn zeros(manifest: Vec<(usize, usize)>) -> Self {
        let n = manifest.iter().map(|(r, c)| r * c).sum();
        Self {
            values: vec![0.0; n],
            manifest,
        }
    }

    pub fn from_values(values: Vec<f64>, manifest: Vec<(usize, usize)>) -> Result<Self> {
        let n: usize = manifest.iter().map(|(r, c)| r * c).sum();
        if n != values.len() {
            return Err(Error::dim("parameter vector", n, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(Self { values, manifest })
    }

    /// Rebuilds a vector from per-block row-major data.
    pub fn flatten(blocks: &[Vec<f64>], manifest: Vec<(usize, usize)>) -> Result<Self> {
        if blocks.len() != manifest.len() {
            return Err(Error::dim("block count", manifest.len(), blocks.len()));
        }
        let mut values = Vec::with_capacity(manifest.iter().map(|(r, c)| r * c).sum());
        for (block, &(r, c)) in blocks.iter().zip(&manifest) {
            if block.len() != r * c {
                return Err(Error::dim("parameter block", r * c, block.len()));
            }
            values.extend_from_slice(block);
        }
        Self::from_values(values, manifest)
    }

    /// Splits the flat values back into row-major blocks.
    pub fn unflatten(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.manifest.len());
        let mut offset = 0;
        for &(r, c) in &self.manifest {
            out.push(self.values[offset..offset + r * c].to_vec());
            offset += r * c;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn manifest(&self) -> &[(usize, usize)] {
        &self.manifest
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A gradient with the same flat layout as its [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Layer inputs: `inputs[0]` is the network input, `inputs[l]` the
    /// activated output of hidden layer `l - 1`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: ParamVector,
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn manifest_for(layer_sizes: &[usize]) -> Vec<(usize, usize)> {
    layer_sizes
        .windows(2)
        .flat_map(|w| [(w[1], w[0]), (w[1], 1)])
        .collect()
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Size(format!(
            "need at least an input and an output size, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Size(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(z * scale);
            }
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: ParamVector::from_values(values, manifest_for(layer_sizes))?,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: ParamVector::zeros(manifest_for(layer_sizes)),
        })
    }

    pub fn from_params(
        layer_sizes: &[usize],
        activation: Activation,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: ParamVector::from_values(values, manifest_for(layer_sizes))?,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Replaces the flat parameter values, keeping the architecture.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::dim("parameter vector", self.params.len(), values.len()));
        }
        self.params.values.copy_from_slice(values);
        Ok(())
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), input.len()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let p = self.params.values();
        let mut offset = 0;
        let mut h = input.to_vec();
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &p[offset..offset + n_in * n_out];
            let b = &p[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + dot(&w[o * n_in..(o + 1) * n_in], &h))
                .collect();
            if l != last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps the intermediates needed by [`Mlp::backward_trace`].
    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let p = self.params.values();
        let mut offset = 0;
        let n_layers = self.num_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        inputs.push(input.to_vec());
        let mut output = Vec::new();
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &p[offset..offset + n_in * n_out];
            let b = &p[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let h = &inputs[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + dot(&w[o * n_in..(o + 1) * n_in], h))
                .collect();
            if l + 1 == n_layers {
                output = z;
            } else {
                let a = z.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(z);
                inputs.push(a);
            }
        }
        Ok(Trace {
            inputs,
            pre,
            output,
        })
    }

    /// Accumulates `scale * dL/dparams` into `grad` and returns `dL/dinput`,
    /// for an upstream gradient `output_grad = dL/doutput`.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        grad: &mut [f64],
        scale: f64,
    ) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::dim("output gradient", self.output_dim(), output_grad.len()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::dim("gradient buffer", self.params.len(), grad.len()));
        }
        let p = self.params.values();
        let n_layers = self.num_layers();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
        }
        let mut delta: Vec<f64> = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let h = &trace.inputs[l];
            for o in 0..n_out {
                let d = delta[o] * scale;
                if d != 0.0 {
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, &x) in row.iter_mut().zip(h) {
                        *g += d * x;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            let w = &p[off..off + n_in * n_out];
            let mut back = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (bk, &wv) in back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *bk += d * wv;
                    }
                }
            }
            if l > 0 {
                let z = &trace.pre[l - 1];
                for ((bk, &zv), &yv) in back.iter_mut().zip(z).zip(h) {
                    *bk *= self.activation.derivative(zv, yv);
                }
            }
            delta = back;
        }
        Ok(delta)
    }

    /// Gradient of `output_grad . net(input)` with respect to the parameters
    /// and to the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Gradient, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grad = Gradient::zeros(self.params.len());
        let dx = self.backward_trace(&trace, output_grad, &mut grad.values, 1.0)?;
        Ok((grad, dx))
    }

    /// Forward-mode directional derivative with respect to the parameters:
    /// returns `(net(input), J . tangent)`.
    pub fn jvp(&self, input: &[f64], tangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(input)?;
        if tangent.len() != self.params.len() {
            return Err(Error::dim("parameter tangent", self.params.len(), tangent.len()));
        }
        let p = self.params.values();
        let mut offset = 0;
        let mut h = input.to_vec();
        let mut dh = vec![0.0; input.len()];
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &p[offset..offset + n_in * n_out];
            let dw = &tangent[offset..offset + n_in * n_out];
            let db = &tangent[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let b = &p[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut z = Vec::with_capacity(n_out);
            let mut dz = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let wr = &w[o * n_in..(o + 1) * n_in];
                let dwr = &dw[o * n_in..(o + 1) * n_in];
                z.push(b[o] + dot(wr, &h));
                dz.push(db[o] + dot(dwr, &h) + dot(wr, &dh));
            }
            if l != last {
                for (zv, dzv) in z.iter_mut().zip(dz.iter_mut()) {
                    let pre = *zv;
                    *zv = self.activation.apply(pre);
                    *dzv *= self.activation.derivative(pre, *zv);
                }
            }
            h = z;
            dh = dz;
        }
        Ok((h, dh))
    }
}

/// Floor on the denominator of the relative error, so coordinates whose
/// true gradient is zero are judged by absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between an analytic gradient and central
/// differences of the loss. `loss_fn` returns `(loss, analytic_gradient)`.
///
/// Coordinates where both gradients vanish count as zero error. A
/// non-finite loss anywhere yields `f64::INFINITY`.
pub fn grad_check<F>(loss_fn: F, params: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    worst_relative_error(&loss_fn, params, |f| (f(eps) - f(-eps)) / (2.0 * eps))
}

/// Like [`grad_check`] but with the five-point central stencil, whose
/// truncation error is `O(eps^4)`. Better on losses with large curvature,
/// where the three-point rule has no step that is both small enough for
/// truncation and large enough for roundoff.
pub fn grad_check_fourth_order<F>(loss_fn: F, params: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    worst_relative_error(&loss_fn, params, |f| {
        (8.0 * (f(eps) - f(-eps)) - (f(2.0 * eps) - f(-2.0 * eps))) / (12.0 * eps)
    })
}

fn worst_relative_error<F, D>(loss_fn: &F, params: &[f64], derivative: D) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    D: Fn(&mut dyn FnMut(f64) -> f64) -> f64,
{
    let (loss, analytic) = loss_fn(params);
    if !loss.is_finite() || analytic.len() != params.len() {
        return f64::INFINITY;
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let mut finite = true;
        let numeric = derivative(&mut |h| {
            probe[i] = params[i] + h;
            let v = loss_fn(&probe).0;
            finite &= v.is_finite();
            v
        });
        probe[i] = params[i];
        if !finite {
            return f64::INFINITY;
        }
        let a = analytic[i];
        if a == 0.0 && numeric == 0.0 {
            continue;
        }
        let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
