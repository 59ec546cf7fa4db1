//! Fully-connected ReLU classifier with hand-written forward/backward passes
//! and SGD with momentum.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::LogitVector;
use crate::rng;
use crate::{Error, Result};

/// Weights (row-major, `outputs x inputs`) and biases of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerTensors {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn same_shape(&self, other: &LayerTensors) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Network parameters. The generation stamp changes whenever the values do,
/// so an activation cache can be matched against the parameters that made it.
#[derive(Debug, Clone)]
pub struct ModelParams {
    dims: Vec<usize>,
    layers: Vec<LayerTensors>,
    generation: u64,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.layers == other.layers
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "need at least an input and an output dimension, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!("zero layer width in {dims:?}")));
    }
    Ok(())
}

/// He-normal initialization: weights ~ N(0, 2 / fan_in), zero biases.
pub fn init_params(dims: &[usize], seed: u64) -> Result<ModelParams> {
    validate_dims(dims)?;
    let mut rng = rng::seeded(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .expect("positive standard deviation");
            let mut layer = LayerTensors::zeros(fan_in, fan_out);
            for v in &mut layer.weights {
                *v = normal.sample(&mut rng);
            }
            layer
        })
        .collect();
    Ok(ModelParams {
        dims: dims.to_vec(),
        layers,
        generation: fresh_generation(),
    })
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            layers: dims
                .windows(2)
                .map(|w| LayerTensors::zeros(w[0], w[1]))
                .collect(),
            generation: fresh_generation(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    pub fn layers(&self) -> &[LayerTensors] {
        &self.layers
    }

    /// Mutable access for direct edits (tests, finite differences). Bumps the
    /// generation, invalidating outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [LayerTensors] {
        self.generation = fresh_generation();
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened in layer order (weights, then bias, per layer).
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut it = values.iter().copied();
        for layer in self.layers_mut() {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if self.flatten().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite parameter".into()))
        }
    }

    /// Checkpoint bytes: `u32` dimension count, the `u32` dimensions, then
    /// every parameter as an `f64`, all little-endian, in layer order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * (self.dims.len() + 1) + 8 * self.param_count());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::Parse {
            line: None,
            message: format!("checkpoint: {msg}"),
        };
        let read_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| corrupt("truncated header"))
        };
        let count = read_u32(0)? as usize;
        if !(2..=64).contains(&count) {
            return Err(corrupt(&format!("implausible layer count {count}")));
        }
        let dims = (0..count)
            .map(|i| read_u32(4 + 4 * i).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        validate_dims(&dims).map_err(|e| corrupt(&e.to_string()))?;
        let expected = dims
            .windows(2)
            .try_fold(0usize, |acc, w| {
                w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc)
            })
            .and_then(|n| n.checked_mul(8));
        let body = &bytes[4 * (count + 1)..];
        if expected != Some(body.len()) {
            return Err(corrupt(&format!(
                "parameter block of {} bytes does not fit dims {dims:?}",
                body.len()
            )));
        }
        let mut params = Self::zeros(&dims)?;
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.set_flat(&values)?;
        params
            .check_finite()
            .map_err(|_| corrupt("non-finite parameter"))?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn flatten_layers(layers: &[LayerTensors]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Activations recorded by [`forward`] for the matching [`backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer: the raw features, then each post-ReLU hidden output.
    layer_inputs: Vec<Vec<f64>>,
}

/// Computes the logits. Hidden layers use ReLU; the last layer is linear.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<(LogitVector, ForwardCache)> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut current = x.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut out = layer.bias.clone();
        for (o, row) in out.iter_mut().zip(layer.weights.chunks_exact(layer.inputs)) {
            *o += row.iter().zip(&current).map(|(w, a)| w * a).sum::<f64>();
        }
        if i != last {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        layer_inputs.push(std::mem::replace(&mut current, out));
    }
    let logits = LogitVector::new(current)
        .map_err(|e| Error::Numeric(format!("forward pass produced {e}")))?;
    Ok((
        logits,
        ForwardCache {
            generation: params.generation,
            layer_inputs,
        },
    ))
}

/// Parameter gradients, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerTensors>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerTensors::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerTensors] {
        &self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        check_layer_shapes(&self.layers, &other.layers)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn check_layer_shapes(a: &[LayerTensors], b: &[LayerTensors]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !x.same_shape(y)) {
        return Err(Error::Shape("parameter shapes do not match".into()));
    }
    Ok(())
}

/// Backpropagates `grad_logits` (dL/dh) and adds `scale * dL/dtheta` into `into`.
pub fn backward_accumulate(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_logits: &[f64],
    scale: f64,
    into: &mut Gradients,
) -> Result<()> {
    if cache.generation != params.generation || cache.layer_inputs.len() != params.layers.len() {
        return Err(Error::Contract(
            "activation cache was produced by different parameters".into(),
        ));
    }
    if grad_logits.len() != params.classes() {
        return Err(Error::Shape(format!(
            "logit gradient has {} entries, model has {} classes",
            grad_logits.len(),
            params.classes()
        )));
    }
    check_layer_shapes(&params.layers, &into.layers)?;

    let mut delta: Vec<f64> = grad_logits.to_vec();
    for i in (0..params.layers.len()).rev() {
        let layer = &params.layers[i];
        let input = &cache.layer_inputs[i];
        let g = &mut into.layers[i];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let sd = scale * d;
            g.bias[o] += sd;
            for (gw, a) in g.weights[o * layer.inputs..(o + 1) * layer.inputs]
                .iter_mut()
                .zip(input)
            {
                *gw += sd * a;
            }
        }
        if i > 0 {
            // The layer input is a post-ReLU activation; its derivative is
            // 1 where the activation is positive.
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(())
}

/// dL/dtheta for one sample given dL/dh.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_logits: &[f64],
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    backward_accumulate(params, cache, grad_logits, 1.0, &mut grads)?;
    Ok(grads)
}

/// Piecewise-constant learning rate: the initial rate divided by every
/// milestone divisor whose epoch has already passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    /// `(epoch, divisor)` pairs; the divisor applies from `epoch + 1` on.
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(initial: f64, milestones: Vec<(usize, f64)>) -> Result<Self> {
        let schedule = Self {
            initial,
            milestones,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn constant(initial: f64) -> Self {
        Self {
            initial,
            milestones: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0) || !self.initial.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.initial
            )));
        }
        if self.milestones.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(
                "learning-rate milestones must be strictly increasing".into(),
            ));
        }
        if self.milestones.iter().any(|(_, d)| !(*d > 0.0)) {
            return Err(Error::Config("milestone divisors must be positive".into()));
        }
        Ok(())
    }

    pub fn first_milestone(&self) -> Option<usize> {
        self.milestones.first().map(|m| m.0)
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    schedule
        .milestones
        .iter()
        .filter(|(at, _)| *at < epoch)
        .fold(schedule.initial, |lr, (_, div)| lr / div)
}

/// Momentum buffers and optimizer hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr: f64,
    buffers: Gradients,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            lr,
            buffers: Gradients::zeros_like(params),
        }
    }

    pub fn buffers(&self) -> &Gradients {
        &self.buffers
    }
}

/// One SGD step with coupled weight decay (weights only):
/// `buf = momentum * buf + grad + wd * w; w -= lr * buf`.
pub fn sgd_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    grads: &Gradients,
) -> Result<()> {
    check_layer_shapes(&params.layers, &grads.layers)?;
    check_layer_shapes(&params.layers, &state.buffers.layers)?;
    let (m, wd, lr) = (state.momentum, state.weight_decay, state.lr);
    for ((p, g), b) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.buffers.layers)
    {
        for ((w, gw), bw) in p.weights.iter_mut().zip(&g.weights).zip(&mut b.weights) {
            *bw = m * *bw + (gw + wd * *w);
            *w -= lr * *bw;
        }
        for ((v, gv), bv) in p.bias.iter_mut().zip(&g.bias).zip(&mut b.bias) {
            *bv = m * *bv + gv;
            *v -= lr * *bv;
        }
    }
    params.generation = fresh_generation();
    params.check_finite()
}
