//! Dense feedforward networks trained by per-presentation backpropagation.
//!
//! A network is a chain of affine layers, each followed by an element-wise
//! activation. The loss is half the squared error summed over the output
//! units whose mask flag is set; unmasked units never touch the target
//! vector, so their target values cannot influence gradients.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed in terms of the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::structural(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer widths (input first) and one activation per non-input layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::structural(format!(
                "a network needs at least 2 layers, got {}",
                sizes.len()
            )));
        }
        if let Some(pos) = sizes.iter().position(|&w| w == 0) {
            return Err(Error::structural(format!("layer {pos} has width 0")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::structural(format!(
                "{} layers need {} activations, got {}",
                sizes.len(),
                sizes.len() - 1,
                activations.len()
            )));
        }
        Ok(Self { sizes, activations })
    }

    /// Every non-input layer uses the same activation.
    pub fn uniform(sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        Self::new(sizes, vec![activation; n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("validated non-empty")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::structural(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }
}

/// Weights and biases of a [`LayerSpec`] chain.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: LayerSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn from_parts(spec: LayerSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let depth = spec.depth();
        if weights.len() != depth || biases.len() != depth {
            return Err(Error::structural(format!(
                "expected {depth} weight layers, got {} matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in spec.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            if weights[l].rows != fan_out || weights[l].cols != fan_in {
                return Err(Error::structural(format!(
                    "layer {l}: weight matrix is {}x{}, expected {fan_out}x{fan_in}",
                    weights[l].rows, weights[l].cols
                )));
            }
            if biases[l].len() != fan_out {
                return Err(Error::structural(format!(
                    "layer {l}: bias length {}, expected {fan_out}",
                    biases[l].len()
                )));
            }
        }
        let params = Self {
            spec,
            weights,
            biases,
        };
        if !params.values().all(f64::is_finite) {
            return Err(Error::structural("parameters contain non-finite values"));
        }
        Ok(params)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data.iter().chain(b.iter()).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data.iter_mut().chain(b.iter_mut()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        forward(self, input)
    }
}

/// Gradient of the loss with respect to every parameter of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data.iter().chain(b.iter()).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data.iter_mut().chain(b.iter_mut()))
    }

    fn check_shape(&self, params: &NetworkParams) -> Result<()> {
        let ok = self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(g, w)| g.rows == w.rows && g.cols == w.cols)
            && self
                .biases
                .iter()
                .zip(&params.biases)
                .all(|(g, b)| g.len() == b.len());
        if ok {
            Ok(())
        } else {
            Err(Error::structural("gradient shapes do not match parameters"))
        }
    }

    pub fn negated(&self) -> Self {
        let mut g = self.clone();
        g.values_mut().for_each(|v| *v = -*v);
        g
    }
}

/// Which output units contribute to the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMask(Vec<bool>);

impl OutputMask {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn all(width: usize) -> Self {
        Self(vec![true; width])
    }

    pub fn none(width: usize) -> Self {
        Self(vec![false; width])
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&f| f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::structural(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub fn init_network(spec: &LayerSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(spec.depth());
    let mut biases = Vec::with_capacity(spec.depth());
    for w in spec.sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        weights.push(Matrix {
            rows: fan_out,
            cols: fan_in,
            data,
        });
        biases.push(vec![0.0; fan_out]);
    }
    NetworkParams {
        spec: spec.clone(),
        weights,
        biases,
    }
}

/// Activations of every layer, input included.
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<Vec<Vec<f64>>> {
    if input.len() != params.spec.input_width() {
        return Err(Error::structural(format!(
            "input has length {}, network expects {}",
            input.len(),
            params.spec.input_width()
        )));
    }
    let mut acts = Vec::with_capacity(params.spec.sizes.len());
    acts.push(input.to_vec());
    for ((w, b), act) in params
        .weights
        .iter()
        .zip(&params.biases)
        .zip(&params.spec.activations)
    {
        let mut z = vec![0.0; w.rows];
        w.mul_vec(acts.last().expect("non-empty"), &mut z);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi = act.apply(*zi + bi);
        }
        acts.push(z);
    }
    Ok(acts)
}

fn check_target(params: &NetworkParams, target: &[f64], mask: &OutputMask) -> Result<()> {
    let out = params.spec.output_width();
    if target.len() != out {
        return Err(Error::structural(format!(
            "target has length {}, network output is {out}",
            target.len()
        )));
    }
    if mask.len() != out {
        return Err(Error::structural(format!(
            "mask has length {}, network output is {out}",
            mask.len()
        )));
    }
    Ok(())
}

fn loss_from_output(output: &[f64], target: &[f64], mask: &OutputMask) -> f64 {
    output
        .iter()
        .zip(mask.flags())
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .map(|(i, (o, _))| {
            let d = o - target[i];
            0.5 * d * d
        })
        .sum()
}

/// `½ Σ_{mask} (out − target)²`
pub fn masked_loss(
    params: &NetworkParams,
    input: &[f64],
    target: &[f64],
    mask: &OutputMask,
) -> Result<f64> {
    check_target(params, target, mask)?;
    let acts = forward(params, input)?;
    Ok(loss_from_output(acts.last().expect("non-empty"), target, mask))
}

/// Gradients of the masked loss, plus the loss itself.
pub fn backward_with_loss(
    params: &NetworkParams,
    input: &[f64],
    target: &[f64],
    mask: &OutputMask,
) -> Result<(Gradients, f64)> {
    check_target(params, target, mask)?;
    let acts = forward(params, input)?;
    Ok(backward_from_activations(params, &acts, target, mask))
}

/// Backpropagation from an already computed forward pass.
///
/// `acts` must come from [`forward`] on the same parameters.
pub fn backward_from_activations(
    params: &NetworkParams,
    acts: &[Vec<f64>],
    target: &[f64],
    mask: &OutputMask,
) -> (Gradients, f64) {
    let depth = params.spec.depth();
    let output = &acts[depth];
    let out_act = params.spec.activations[depth - 1];

    let mut delta: Vec<f64> = output
        .iter()
        .zip(mask.flags())
        .enumerate()
        .map(|(i, (&y, &m))| {
            if m {
                (y - target[i]) * out_act.derivative_from_output(y)
            } else {
                0.0
            }
        })
        .collect();
    let loss = loss_from_output(output, target, mask);

    let mut grads = Gradients::zeros_like(params);
    for l in (0..depth).rev() {
        let below = &acts[l];
        let gw = &mut grads.weights[l];
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut gw.data[r * gw.cols..(r + 1) * gw.cols];
            for (g, &a) in row.iter_mut().zip(below) {
                *g = d * a;
            }
        }
        grads.biases[l].copy_from_slice(&delta);

        if l > 0 {
            let w = &params.weights[l];
            let act = params.spec.activations[l - 1];
            let mut next = vec![0.0; w.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (n, wv) in next.iter_mut().zip(w.row(r)) {
                    *n += d * wv;
                }
            }
            for (n, &a) in next.iter_mut().zip(below) {
                *n *= act.derivative_from_output(a);
            }
            delta = next;
        }
    }
    (grads, loss)
}

pub fn backward(
    params: &NetworkParams,
    input: &[f64],
    target: &[f64],
    mask: &OutputMask,
) -> Result<Gradients> {
    backward_with_loss(params, input, target, mask).map(|(g, _)| g)
}

/// `p ← p − learning_rate · g` for every parameter.
pub fn sgd_step(params: &mut NetworkParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    grads.check_shape(params)?;
    for (p, g) in params.values_mut().zip(grads.values()) {
        *p -= learning_rate * g;
    }
    Ok(())
}

/// Central-difference estimate of the masked-loss gradient.
pub fn numerical_gradient(
    params: &NetworkParams,
    input: &[f64],
    target: &[f64],
    mask: &OutputMask,
    eps: f64,
) -> Result<Gradients> {
    if !(eps > 0.0) {
        return Err(Error::structural(format!("eps must be positive, got {eps}")));
    }
    check_target(params, target, mask)?;
    let mut probe = params.clone();
    let mut grads = Gradients::zeros_like(params);
    let n = params.spec.param_count();
    for k in 0..n {
        let orig = *probe.values_mut().nth(k).expect("index in range");
        *probe.values_mut().nth(k).expect("index in range") = orig + eps;
        let plus = masked_loss(&probe, input, target, mask)?;
        *probe.values_mut().nth(k).expect("index in range") = orig - eps;
        let minus = masked_loss(&probe, input, target, mask)?;
        *probe.values_mut().nth(k).expect("index in range") = orig;
        *grads.values_mut().nth(k).expect("index in range") = (plus - minus) / (2.0 * eps);
    }
    Ok(grads)
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over all parameters.
pub fn max_relative_error(a: &Gradients, b: &Gradients, floor: f64) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Outcome of [`random_gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub networks: usize,
    pub max_error: f64,
}

/// Compares analytic and central-difference gradients on `networks` random
/// nets of 2 to 4 layers, widths 1 to 8, mixed activations and random masks.
pub fn random_gradient_check(networks: usize, seed: u64, eps: f64, floor: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Sigmoid, Activation::Tanh, Activation::Linear];
    let mut max_error = 0.0f64;
    for _ in 0..networks {
        let depth = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
        let activations = (0..depth).map(|_| acts[rng.random_range(0..acts.len())]).collect();
        let spec = LayerSpec::new(sizes.clone(), activations)?;
        let mut params = init_network(&spec, rng.random());
        for b in params.biases_mut().iter_mut().flatten() {
            *b = rng.random_range(-0.5..0.5);
        }
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = sizes[depth];
        let target: Vec<f64> = (0..out).map(|_| rng.random_range(0.0..1.0)).collect();
        let mask = OutputMask::new((0..out).map(|_| rng.random_bool(0.7)).collect());
        let analytic = backward(&params, &input, &target, &mask)?;
        let numeric = numerical_gradient(&params, &input, &target, &mask, eps)?;
        max_error = max_error.max(max_relative_error(&analytic, &numeric, floor));
    }
    Ok(GradCheck { networks, max_error })
}

/// Loss trace of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean per-presentation loss of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    /// Number of parameter updates performed.
    pub updates: u64,
}

/// Deterministic Fisher-Yates order for one epoch.
pub(crate) fn epoch_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}
