//! Dense networks with exact reverse-mode gradients, VAE helpers and Adam.

pub mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Linear,
    Softmax,
}

#[inline]
pub fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Fully connected layer; `weight` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            inputs,
            outputs,
            activation,
        }
    }

    /// Uniform(-sqrt(6/(in+out)), +sqrt(6/(in+out))) weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight,
            bias: vec![0.0; outputs],
            inputs,
            outputs,
            activation,
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.inputs..(o + 1) * self.inputs]
    }

    pub fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.bias
                .iter()
                .enumerate()
                .map(|(o, b)| b + dot(self.row(o), x)),
        );
        match self.activation {
            Activation::Elu => out.iter_mut().for_each(|v| *v = elu(*v)),
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(out),
        }
    }

    /// Back-propagates `dy` given the layer input and output, accumulating
    /// parameter gradients into `grad` and returning dL/dx.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        let dz: Vec<f64> = match self.activation {
            Activation::Linear => dy.to_vec(),
            Activation::Elu => dy
                .iter()
                .zip(y)
                .map(|(g, &yv)| if yv > 0.0 { *g } else { g * (yv + 1.0) })
                .collect(),
            Activation::Softmax => {
                let s = dot(dy, y);
                dy.iter().zip(y).map(|(g, yv)| yv * (g - s)).collect()
            }
        };
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            axpy(g, x, &mut grad.weight[o * self.inputs..(o + 1) * self.inputs]);
            axpy(g, self.row(o), &mut dx);
        }
        dx
    }
}

/// Layer inputs and outputs recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Network `input -> widths[0] -> ... -> widths[n-1]` with ELU on the
    /// hidden layers and `last` on the output layer.
    pub fn new<R: Rng + ?Sized>(input: usize, widths: &[usize], last: Activation, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for (i, &w) in widths.iter().enumerate() {
            let act = if i + 1 == widths.len() { last } else { Activation::Elu };
            layers.push(DenseLayer::init(prev, w, act, rng));
            prev = w;
        }
        DenseNet { layers }
    }

    pub fn zeros_like(&self) -> Self {
        DenseNet {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for l in &self.layers {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward_into(values.last().expect("input pushed"), &mut out);
            values.push(out);
        }
        Ok(Trace { values })
    }

    pub fn backward(&self, trace: &Trace, dy: &[f64], grad: &mut DenseNet) -> Vec<f64> {
        let mut g = dy.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            g = l.backward(&trace.values[i], &trace.values[i + 1], &g, &mut grad.layers[i]);
        }
        g
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::DimMismatch {
                context: "dense network input",
                expected: self.input_size(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.input_size())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }
}

/// Named parameter tensors in a fixed order. Gradient containers share the
/// parameter type, so optimizers pair the two lists positionally.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("weight".into(), vec![self.outputs, self.inputs], &self.weight[..]),
            ("bias".into(), vec![self.outputs], &self.bias[..]),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight[..], &mut self.bias[..]]
    }
}

impl Parameters for DenseNet {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        prefixed(self.layers.iter().enumerate().map(|(i, l)| (format!("layer{i}"), l as &dyn Parameters)))
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Concatenates the tensors of several parts under `prefix.` names.
pub(crate) fn prefixed<'a>(
    parts: impl IntoIterator<Item = (String, &'a dyn Parameters)>,
) -> Vec<(String, Vec<usize>, &'a [f64])> {
    parts
        .into_iter()
        .flat_map(|(prefix, p)| {
            p.tensors()
                .into_iter()
                .map(move |(n, s, d)| (format!("{prefix}.{n}"), s, d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl GaussianLatent {
    pub fn standard(n: usize) -> Self {
        Self {
            mu: vec![0.0; n],
            log_sigma: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// KL(N(mu, sigma^2) || N(0, I)).
pub fn kl_standard_normal(z: &GaussianLatent) -> f64 {
    0.5 * z
        .mu
        .iter()
        .zip(&z.log_sigma)
        .map(|(m, ls)| m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

/// Gradients of [`kl_standard_normal`] w.r.t. (mu, log_sigma).
pub fn kl_grad(z: &GaussianLatent) -> (Vec<f64>, Vec<f64>) {
    (
        z.mu.clone(),
        z.log_sigma.iter().map(|ls| (2.0 * ls).exp() - 1.0).collect(),
    )
}

pub fn reparameterize(z: &GaussianLatent, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != z.len() {
        return Err(Error::DimMismatch {
            context: "latent noise",
            expected: z.len(),
            actual: eps.len(),
        });
    }
    Ok(z
        .mu
        .iter()
        .zip(&z.log_sigma)
        .zip(eps)
        .map(|((m, ls), e)| {
            let s = ls.exp();
            if s == 0.0 {
                *m
            } else {
                m + s * e
            }
        })
        .collect())
}

pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Adam with a learning rate that decays linearly to zero over
/// `total_epochs`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub total_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, total_epochs: usize) -> Self {
        Self {
            learning_rate,
            total_epochs,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Learning rate after `epochs_done` completed epochs.
    pub fn effective_rate(&self, epochs_done: usize) -> f64 {
        if self.total_epochs == 0 {
            return self.learning_rate;
        }
        self.learning_rate * (1.0 - epochs_done as f64 / self.total_epochs as f64).max(0.0)
    }

    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &P, epochs_done: usize) -> Result<()> {
        let grads = grads.tensors();
        if grads.iter().any(|(_, _, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteGradient);
        }
        let lr = self.effective_rate(epochs_done);
        if lr == 0.0 {
            return Ok(());
        }
        let mut targets = params.tensors_mut();
        if targets.len() != grads.len() {
            return Err(Error::DimMismatch {
                context: "optimizer tensors",
                expected: targets.len(),
                actual: grads.len(),
            });
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.2.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, p) in targets.iter_mut().enumerate() {
            let g = grads[k].2;
            if g.len() != p.len() {
                return Err(Error::DimMismatch {
                    context: "optimizer tensor",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Maximum relative error between an analytic gradient and central
/// differences, used by tests and the acceptance suite.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / denom
    }
}
