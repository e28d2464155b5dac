//! Feed-forward networks built from spectral (orthonormalized) dense layers,
//! plain dense layers, GroupSort2 and ReLU, with reverse-mode gradients for
//! both parameters and inputs.
//!
//! Weights are stored `out x in` so a layer computes `y = W x + b`. Batched
//! inputs are `batch x in` matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::linalg::{project_weight, unit_start, ProjectionConfig};
use crate::tensor::gemm;
use crate::{Error, Result, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LayerKind {
    SpectralDense,
    PlainDense,
    Groupsort2,
    Relu,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::SpectralDense => "spectral_dense",
            LayerKind::PlainDense => "plain_dense",
            LayerKind::Groupsort2 => "groupsort2",
            LayerKind::Relu => "relu",
        }
    }
}

/// Weight, bias and the cached power-iteration vector of a dense layer.
/// Equality ignores the cache.
#[derive(Debug, Clone)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
    power_vector: Vec<f64>,
}

impl PartialEq for Dense {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight && self.bias == other.bias
    }
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out, inp) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(Error::dim(format!(
                "bias shape {:?} does not match {out} outputs",
                bias.shape()
            )));
        }
        let v = 1.0 / libm::sqrt(inp as f64);
        Ok(Dense {
            weight,
            bias,
            power_vector: vec![v; inp],
        })
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let w = (0..inputs * outputs).map(|_| rng.uniform_in(-limit, limit)).collect();
        Dense {
            weight: Tensor::from_parts(vec![outputs, inputs], w),
            bias: Tensor::zeros(&[outputs]),
            power_vector: unit_start(inputs, rng),
        }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn project(&mut self, cfg: &ProjectionConfig) -> Result<()> {
        self.weight = project_weight(&self.weight, &mut self.power_vector, cfg)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    SpectralDense(Dense),
    PlainDense(Dense),
    GroupSort2 { width: usize },
    Relu { width: usize },
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::SpectralDense(_) => LayerKind::SpectralDense,
            Layer::PlainDense(_) => LayerKind::PlainDense,
            Layer::GroupSort2 { .. } => LayerKind::Groupsort2,
            Layer::Relu { .. } => LayerKind::Relu,
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Layer::SpectralDense(d) | Layer::PlainDense(d) => d.inputs(),
            Layer::GroupSort2 { width } | Layer::Relu { width } => *width,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Layer::SpectralDense(d) | Layer::PlainDense(d) => d.outputs(),
            Layer::GroupSort2 { width } | Layer::Relu { width } => *width,
        }
    }

    pub fn dense(&self) -> Option<&Dense> {
        match self {
            Layer::SpectralDense(d) | Layer::PlainDense(d) => Some(d),
            _ => None,
        }
    }

    fn dense_mut(&mut self) -> Option<&mut Dense> {
        match self {
            Layer::SpectralDense(d) | Layer::PlainDense(d) => Some(d),
            _ => None,
        }
    }
}

/// Architecture description used to build a randomly initialized network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum LayerSpec {
    SpectralDense { units: usize },
    PlainDense { units: usize },
    Groupsort2,
    Relu,
}

/// Scalar read out of the network's score vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Score {
    /// `f_k`.
    Output(usize),
    /// `f_positive − f_negative`.
    Difference { positive: usize, negative: usize },
}

impl Score {
    pub fn eval(&self, scores: &[f64]) -> f64 {
        match *self {
            Score::Output(k) => scores[k],
            Score::Difference { positive, negative } => scores[positive] - scores[negative],
        }
    }

    /// Seed vector `∂score/∂f` for the backward pass.
    pub fn seed(&self, q: usize) -> Vec<f64> {
        let mut s = vec![0.0; q];
        match *self {
            Score::Output(k) => s[k] = 1.0,
            Score::Difference { positive, negative } => {
                s[positive] += 1.0;
                s[negative] -= 1.0;
            }
        }
        s
    }

    fn check(&self, q: usize) -> Result<()> {
        let ok = match *self {
            Score::Output(k) => k < q,
            Score::Difference { positive, negative } => positive < q && negative < q && positive != negative,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("score {self:?} is invalid for {q} outputs")))
        }
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Ordered stack of layers producing `out_dim` class scores.
#[derive(Debug)]
pub struct LipNet {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Changes whenever parameters change; traces remember it.
    version: u64,
}

impl Clone for LipNet {
    fn clone(&self) -> Self {
        LipNet {
            input_dim: self.input_dim,
            layers: self.layers.clone(),
            version: fresh_version(),
        }
    }
}

impl PartialEq for LipNet {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

/// Activations recorded by [`LipNet::forward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    version: u64,
    batch: usize,
    /// Input to every layer, then the final output.
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Scores, `batch x out_dim` row-major.
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One entry per layer; `None` for parameter-free layers.
    pub by_parameter: Vec<Option<ParamGrad>>,
    /// Same shape as the traced input.
    pub by_input: Tensor,
}

impl LipNet {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 || layers.is_empty() {
            return Err(Error::dim(
                "a network needs a positive input width and at least one layer",
            ));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs() != width {
                return Err(Error::dim(format!(
                    "layer {i} ({}) expects width {}, previous width is {width}",
                    layer.kind().name(),
                    layer.inputs()
                )));
            }
            if matches!(layer, Layer::GroupSort2 { .. }) && width % 2 != 0 {
                return Err(Error::dim(format!(
                    "groupsort2 at layer {i} needs an even width, got {width}"
                )));
            }
            width = layer.outputs();
        }
        Ok(LipNet {
            input_dim,
            layers,
            version: fresh_version(),
        })
    }

    /// Random initialization followed by a projection of every spectral layer.
    pub fn from_spec(input_dim: usize, spec: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let mut width = input_dim;
        let mut layers = Vec::with_capacity(spec.len());
        for s in spec {
            let layer = match *s {
                LayerSpec::SpectralDense { units } => Layer::SpectralDense(Dense::init(width, units, rng)),
                LayerSpec::PlainDense { units } => Layer::PlainDense(Dense::init(width, units, rng)),
                LayerSpec::Groupsort2 => Layer::GroupSort2 { width },
                LayerSpec::Relu => Layer::Relu { width },
            };
            width = layer.outputs();
            layers.push(layer);
        }
        let mut net = LipNet::new(input_dim, layers)?;
        net.project_with(&ProjectionConfig::for_init())?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// True when every layer is 1-Lipschitz by construction.
    pub fn is_lipschitz(&self) -> bool {
        self.layers.iter().all(|l| !matches!(l, Layer::PlainDense(_)))
    }

    /// Number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::dense)
            .map(|d| d.weight.len() + d.bias.len())
            .sum()
    }

    /// Scores for a single input (`[d]` → `[q]`) or a batch (`[n, d]` → `[n, q]`).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (batch, single) = self.batch_of(x)?;
        let out = self.run(x.data(), batch, None);
        let q = self.out_dim();
        let shape = if single { vec![q] } else { vec![batch, q] };
        finite_tensor(shape, out, "forward")
    }

    /// Scores of a row-major batch given as a slice.
    pub fn forward_batch(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.is_empty() || x.len() % self.input_dim != 0 {
            return Err(Error::dim(format!(
                "input of length {} is not a batch of width {}",
                x.len(),
                self.input_dim
            )));
        }
        let out = self.run(x, x.len() / self.input_dim, None);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite("forward"))
        }
    }

    /// Forward pass that keeps every intermediate activation for [`backward`](Self::backward).
    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        let (batch, _) = self.batch_of(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let out = self.run(x.data(), batch, Some(&mut acts));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward"));
        }
        acts.push(out);
        Ok(Trace {
            version: self.version,
            batch,
            activations: acts,
        })
    }

    /// Reverse-mode derivative of `Σ_rows seed_rowᵀ f(x_row)` with respect to
    /// every parameter and to the input. `seed` is `[q]` for a single input
    /// or `[n, q]` for a batch.
    pub fn backward(&self, trace: &Trace, seed: &Tensor) -> Result<Gradients> {
        if trace.version != self.version {
            return Err(Error::StaleTrace);
        }
        let q = self.out_dim();
        if seed.len() != trace.batch * q {
            return Err(Error::dim(format!(
                "seed has {} entries, expected {} x {q}",
                seed.len(),
                trace.batch
            )));
        }
        let batch = trace.batch;
        let mut grad = seed.data().to_vec();
        let mut by_parameter = vec![None; self.layers.len()];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[idx];
            grad = match layer {
                Layer::SpectralDense(d) | Layer::PlainDense(d) => {
                    let (out, inp) = (d.outputs(), d.inputs());
                    let mut dw = vec![0.0; out * inp];
                    // dW = dZᵀ X
                    gemm(
                        out,
                        batch,
                        inp,
                        1.0,
                        (&grad, 1, out as isize),
                        (input, inp as isize, 1),
                        0.0,
                        (&mut dw, inp as isize, 1),
                    );
                    let mut db = vec![0.0; out];
                    for row in grad.chunks_exact(out) {
                        db.iter_mut().zip(row).for_each(|(b, g)| *b += g);
                    }
                    let mut dx = vec![0.0; batch * inp];
                    // dX = dZ W
                    gemm(
                        batch,
                        out,
                        inp,
                        1.0,
                        (&grad, out as isize, 1),
                        (d.weight.data(), inp as isize, 1),
                        0.0,
                        (&mut dx, inp as isize, 1),
                    );
                    by_parameter[idx] = Some(ParamGrad {
                        weight: Tensor::from_parts(vec![out, inp], dw),
                        bias: Tensor::from_parts(vec![out], db),
                    });
                    dx
                }
                Layer::GroupSort2 { .. } => {
                    let mut dx = grad;
                    for (pair, g) in input.chunks_exact(2).zip(dx.chunks_exact_mut(2)) {
                        if pair[0] > pair[1] {
                            g.swap(0, 1);
                        }
                    }
                    dx
                }
                Layer::Relu { .. } => {
                    let mut dx = grad;
                    for (g, &z) in dx.iter_mut().zip(input) {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    dx
                }
            };
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        let in_shape = if seed.ndim() == 1 {
            vec![self.input_dim]
        } else {
            vec![batch, self.input_dim]
        };
        Ok(Gradients {
            by_parameter,
            by_input: Tensor::from_parts(in_shape, grad),
        })
    }

    /// Value and input gradient of a scalar score at a single point.
    pub fn score_gradient(&self, x: &[f64], score: Score) -> Result<(f64, Vec<f64>)> {
        let (values, grads) = self.score_gradients(x, score)?;
        Ok((values[0], grads))
    }

    /// Values and input gradients of a scalar score over a row-major batch.
    /// Gradients come back row-major, same layout as `x`.
    pub fn score_gradients(&self, x: &[f64], score: Score) -> Result<(Vec<f64>, Vec<f64>)> {
        let q = self.out_dim();
        score.check(q)?;
        if x.is_empty() || x.len() % self.input_dim != 0 {
            return Err(Error::dim(format!(
                "input length {} vs width {}",
                x.len(),
                self.input_dim
            )));
        }
        let batch = x.len() / self.input_dim;
        let xt = Tensor::from_parts(vec![batch, self.input_dim], x.to_vec());
        let trace = self.forward_trace(&xt)?;
        let values = trace.output().chunks_exact(q).map(|s| score.eval(s)).collect();
        let row = score.seed(q);
        let seed = Tensor::from_parts(vec![batch, q], row.repeat(batch));
        let g = self.backward(&trace, &seed)?;
        Ok((values, g.by_input.into_data()))
    }

    /// Replaces every spectral weight by its orthonormal projection.
    pub fn project(&mut self) -> Result<()> {
        self.project_with(&ProjectionConfig::default())
    }

    pub fn project_with(&mut self, cfg: &ProjectionConfig) -> Result<()> {
        for layer in &mut self.layers {
            if let Layer::SpectralDense(d) = layer {
                d.project(cfg)?;
            }
        }
        self.version = fresh_version();
        Ok(())
    }

    /// Mutable `(weight, bias)` slices of dense layer `idx`; invalidates traces.
    pub fn params_mut(&mut self, idx: usize) -> Option<(&mut [f64], &mut [f64])> {
        self.version = fresh_version();
        self.layers[idx]
            .dense_mut()
            .map(|d| (d.weight.data_mut(), d.bias.data_mut()))
    }

    fn batch_of(&self, x: &Tensor) -> Result<(usize, bool)> {
        match *x.shape() {
            [d] if d == self.input_dim => Ok((1, true)),
            [n, d] if d == self.input_dim => Ok((n, false)),
            _ => Err(Error::dim(format!(
                "input shape {:?} does not match network width {}",
                x.shape(),
                self.input_dim
            ))),
        }
    }

    fn run(&self, x: &[f64], batch: usize, mut keep: Option<&mut Vec<Vec<f64>>>) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let next = match layer {
                Layer::SpectralDense(d) | Layer::PlainDense(d) => {
                    let (out, inp) = (d.outputs(), d.inputs());
                    let mut z = d.bias.data().repeat(batch);
                    // Z = X Wᵀ + b
                    gemm(
                        batch,
                        inp,
                        out,
                        1.0,
                        (&cur, inp as isize, 1),
                        (d.weight.data(), 1, inp as isize),
                        1.0,
                        (&mut z, out as isize, 1),
                    );
                    z
                }
                Layer::GroupSort2 { .. } => {
                    let mut z = cur.clone();
                    for pair in z.chunks_exact_mut(2) {
                        if pair[0] > pair[1] {
                            pair.swap(0, 1);
                        }
                    }
                    z
                }
                Layer::Relu { .. } => cur.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            };
            if let Some(acts) = keep.as_deref_mut() {
                acts.push(core::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        cur
    }
}

fn finite_tensor(shape: Vec<usize>, data: Vec<f64>, op: &'static str) -> Result<Tensor> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(Tensor::from_parts(shape, data))
    } else {
        Err(Error::NonFinite(op))
    }
}
