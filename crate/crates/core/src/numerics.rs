//! Dense linear algebra and hand-written backpropagation for the NCF tower.
//!
//! Everything here is double precision and single-threaded. The MLP is a
//! fixed topology: rectifier hidden layers followed by one logistic output
//! unit. Weights are stored `n_in × n_out` row-major so a forward pass is
//! `out = x · W + b`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::rng::{domain, keyed_rng};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]` before the logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "matrix entries must be finite, got {bad}"
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(format!("row of {cols}"), format!("row of {}", r.len())));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }
}

/// `x · w + b` for a batch `x` of shape `B × n`.
pub fn affine_forward(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if x.cols != w.rows {
        return Err(Error::shape(
            format!("x {}", x.shape_str()),
            format!("w {}", w.shape_str()),
        ));
    }
    if b.len() != w.cols {
        return Err(Error::shape(
            format!("w {}", w.shape_str()),
            format!("b {}", b.len()),
        ));
    }
    let mut out = Matrix::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        affine_row(x.row(i), w, b, out.row_mut(i));
    }
    Ok(out)
}

fn affine_row(x: &[f64], w: &Matrix, b: &[f64], out: &mut [f64]) {
    out.copy_from_slice(b);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        for (o, &wkj) in out.iter_mut().zip(w.row(k)) {
            *o += xk * wkj;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Rectifier,
    Logistic,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Value and local derivative at `x`.
    pub fn eval(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Rectifier => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Logistic => {
                let p = logistic(x);
                (p, p * (1.0 - p))
            }
        }
    }
}

/// Element-wise activation returning `(value, local_derivative)`.
pub fn activations(x: &Matrix, kind: Activation) -> (Matrix, Matrix) {
    let mut value = Matrix::zeros(x.rows, x.cols);
    let mut deriv = Matrix::zeros(x.rows, x.cols);
    for ((v, d), &xi) in value
        .values
        .iter_mut()
        .zip(deriv.values.iter_mut())
        .zip(&x.values)
    {
        (*v, *d) = kind.eval(xi);
    }
    (value, deriv)
}

/// Binary cross-entropy and its derivative with respect to `p`.
///
/// `p` is clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]`; inside the clamped
/// region the derivative is that of the clamped function, i.e. zero.
pub fn bce_loss(p: f64, y: f64) -> Result<(f64, f64)> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::InvalidLabel(y));
    }
    let clamped = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
    let loss = -(y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln());
    let grad = if clamped != p {
        0.0
    } else {
        -y / p + (1.0 - y) / (1.0 - p)
    };
    Ok((loss.max(0.0), grad))
}

/// Loss derivative with respect to the output logit, given `p = logistic(z)`.
pub(crate) fn bce_logit_grad(p: f64, y: f64) -> f64 {
    if p < PROB_EPSILON || p > 1.0 - PROB_EPSILON {
        0.0
    } else {
        p - y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            weight: Matrix::zeros(n_in, n_out),
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.rows
    }

    pub fn n_out(&self) -> usize {
        self.weight.cols
    }
}

/// Rectifier hidden layers with a single logistic output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.n_out() {
                return Err(Error::shape(
                    format!("layer {i} weight {}", l.weight.shape_str()),
                    format!("bias {}", l.bias.len()),
                ));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::shape(
                    format!("layer {i} {}", pair[0].weight.shape_str()),
                    format!("layer {} {}", i + 1, pair[1].weight.shape_str()),
                ));
            }
        }
        let last = layers.last().expect("nonempty");
        if last.n_out() != 1 {
            return Err(Error::shape(
                format!("output layer {}", last.weight.shape_str()),
                "n_out 1",
            ));
        }
        Ok(MlpParams { layers })
    }

    /// All-zero network with layer widths `[n_in, h1, ..., 1]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("widths need input and output".into()));
        }
        Self::new(widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect())
    }

    /// Glorot-uniform weights in `±sqrt(6 / (n_in + n_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in() + layer.n_out()) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for w in layer.weight.as_mut_slice() {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].n_in()
    }

    /// `[n_in, h1, ..., 1]`
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Layer::n_out))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.n_in(), l.n_out()))
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.values.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::shape(
                format!("input {}", input.len()),
                format!("layer 0 {}", self.layers[0].weight.shape_str()),
            ));
        }
        Ok(())
    }

    pub fn workspace(&self) -> MlpWorkspace {
        MlpWorkspace {
            acts: self
                .widths()
                .iter()
                .map(|&w| vec![0.0; w])
                .collect(),
            delta: Vec::new(),
            delta_next: Vec::new(),
        }
    }

    /// Output probability for one input.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        let mut ws = self.workspace();
        Ok(self.forward_with(input, &mut ws))
    }

    /// Forward pass reusing `ws`; the input length must already be validated.
    pub fn forward_with(&self, input: &[f64], ws: &mut MlpWorkspace) -> f64 {
        ws.acts[0].copy_from_slice(input);
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let out = &mut tail[0];
            affine_row(&head[i], &layer.weight, &layer.bias, out);
            if i + 1 < n {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        logistic(ws.acts[n][0])
    }

    /// Backward pass after [`forward_with`](Self::forward_with).
    ///
    /// `d_logit` is the upstream derivative with respect to the output
    /// pre-activation. Parameter gradients are *added* into `grads`, the
    /// input gradient is written to `d_input`.
    pub fn backward_with(
        &self,
        ws: &mut MlpWorkspace,
        d_logit: f64,
        grads: &mut MlpParams,
        d_input: &mut [f64],
    ) {
        let MlpWorkspace {
            acts,
            delta,
            delta_next,
        } = ws;
        delta.clear();
        delta.push(d_logit);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let x = &acts[i];
            for (gb, &d) in g.bias.iter_mut().zip(delta.iter()) {
                *gb += d;
            }
            for (k, &xk) in x.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (gw, &d) in g.weight.row_mut(k).iter_mut().zip(delta.iter()) {
                    *gw += xk * d;
                }
            }
            delta_next.clear();
            delta_next.extend(layer.weight.values.chunks_exact(layer.n_out()).map(|wrow| {
                wrow.iter().zip(delta.iter()).map(|(w, d)| w * d).sum::<f64>()
            }));
            if i > 0 {
                // rectifier derivative: acts[i] is max(0, z), so z > 0 iff acts[i] > 0
                for (dn, &a) in delta_next.iter_mut().zip(x.iter()) {
                    if a <= 0.0 {
                        *dn = 0.0;
                    }
                }
            }
            std::mem::swap(delta, delta_next);
        }
        d_input.copy_from_slice(delta);
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct MlpWorkspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

/// Result of a single-sample forward/backward pass.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub prob: f64,
    pub loss: f64,
    /// Same shapes as the parameters.
    pub params: MlpParams,
    pub input: Vec<f64>,
}

/// Probability, BCE loss and exact gradients of the loss with respect to
/// every weight, bias and input coordinate.
pub fn mlp_forward_backward(params: &MlpParams, input: &[f64], label: f64) -> Result<MlpGradients> {
    params.check_input(input)?;
    let mut ws = params.workspace();
    let prob = params.forward_with(input, &mut ws);
    let (loss, _) = bce_loss(prob, label)?;
    let mut grads = params.zeros_like();
    let mut d_input = vec![0.0; input.len()];
    params.backward_with(&mut ws, bce_logit_grad(prob, label), &mut grads, &mut d_input);
    Ok(MlpGradients {
        prob,
        loss,
        params: grads,
        input: d_input,
    })
}

/// Gradients of the output probability itself (no loss attached).
pub fn mlp_prob_gradients(params: &MlpParams, input: &[f64]) -> Result<(f64, MlpParams, Vec<f64>)> {
    params.check_input(input)?;
    let mut ws = params.workspace();
    let prob = params.forward_with(input, &mut ws);
    let mut grads = params.zeros_like();
    let mut d_input = vec![0.0; input.len()];
    params.backward_with(&mut ws, prob * (1.0 - prob), &mut grads, &mut d_input);
    Ok((prob, grads, d_input))
}

/// A collection of flat parameter tensors in a fixed order.
///
/// The optimizer and the gradient checker walk parameters through this view.
pub trait Tensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_lengths(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }
}

impl Tensors for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.values.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new<T: Tensors + ?Sized>(config: AdamConfig, params: &T) -> Self {
        Self::with_lengths(config, &params.tensor_lengths())
    }

    pub fn with_lengths(config: AdamConfig, lengths: &[usize]) -> Self {
        AdamState {
            config,
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One update of every tensor in `params` from the matching tensor in `grads`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} optimizer tensors", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape(
                    format!("tensor {i}: moment {}", m.len()),
                    format!("param {} / grad {}", p.len(), g.len()),
                ));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pj, &gj), mj), vj) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                *pj -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Apply one Adam step to a parameter collection.
pub fn adam_step<P: Tensors, G: Tensors>(params: &mut P, grads: &G, state: &mut AdamState) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.step(&mut p, &g)
}

/// Symmetric relative error with an absolute floor so that two near-zero
/// gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-7);
    (analytic - numeric).abs() / denom
}

fn loss_at(net: &MlpParams, input: &[f64], label: f64, ws: &mut MlpWorkspace) -> f64 {
    let p = net.forward_with(input, ws);
    bce_loss(p, label).expect("label validated").0
}

/// Compare analytic gradients against central finite differences on
/// `samples` coordinates drawn uniformly from all parameters and the input.
/// Returns the worst relative error.
pub fn grad_check(
    net: &MlpParams,
    input: &[f64],
    label: f64,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {h}")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("grad_check needs at least one sample".into()));
    }
    let analytic = mlp_forward_backward(net, input, label)?;
    let param_lengths = net.tensor_lengths();
    let param_total: usize = param_lengths.iter().sum();
    let total = param_total + input.len();

    let mut rng = keyed_rng(seed, &[domain::GRAD_CHECK]);
    let mut probe = net.clone();
    let mut x = input.to_vec();
    let mut ws = net.workspace();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let flat = rng.random_range(0..total);
        let (a, numeric) = if flat < param_total {
            let (t, j) = locate(&param_lengths, flat);
            let a = analytic.params.tensors()[t][j];
            let orig = probe.tensors()[t][j];
            probe.tensors_mut()[t][j] = orig + h;
            let up = loss_at(&probe, &x, label, &mut ws);
            probe.tensors_mut()[t][j] = orig - h;
            let down = loss_at(&probe, &x, label, &mut ws);
            probe.tensors_mut()[t][j] = orig;
            (a, (up - down) / (2.0 * h))
        } else {
            let j = flat - param_total;
            let orig = x[j];
            x[j] = orig + h;
            let up = loss_at(&probe, &x, label, &mut ws);
            x[j] = orig - h;
            let down = loss_at(&probe, &x, label, &mut ws);
            x[j] = orig;
            (analytic.input[j], (up - down) / (2.0 * h))
        };
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

pub(crate) fn locate(lengths: &[usize], mut flat: usize) -> (usize, usize) {
    for (t, &n) in lengths.iter().enumerate() {
        if flat < n {
            return (t, flat);
        }
        flat -= n;
    }
    panic!("flat index beyond tensor lengths");
}
