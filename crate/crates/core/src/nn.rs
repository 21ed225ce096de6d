//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Weights are stored `out × in`, row-major, so a layer computes
//! `y = W x + b`. Hidden layers apply their activation; the last layer is
//! always affine.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    LinearLogits,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_dims: Vec<usize>,
    /// One entry per hidden layer (`layer_dims.len() - 2`).
    pub activations: Vec<Activation>,
    pub output_head: OutputHead,
}

impl NetworkSpec {
    /// Every hidden layer uses the same activation.
    pub fn uniform(layer_dims: Vec<usize>, activation: Activation, output_head: OutputHead) -> Self {
        let hidden = layer_dims.len().saturating_sub(2);
        NetworkSpec {
            layer_dims,
            activations: vec![activation; hidden],
            output_head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::param("layer_dims", "need at least input and output widths"));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::param("layer_dims", "every width must be >= 1"));
        }
        if self.activations.len() != self.layer_dims.len() - 2 {
            return Err(Error::param(
                "activations",
                format!(
                    "expected {} hidden activations, got {}",
                    self.layer_dims.len() - 2,
                    self.activations.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<RealMatrix>,
    biases: Vec<Vec<f64>>,
    frozen: bool,
    id: u64,
    version: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            spec: self.spec.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            frozen: self.frozen,
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.weights == other.weights && self.biases == other.biases
    }
}

/// Activations recorded by [`Network::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    network_id: u64,
    version: u64,
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub weight_grads: Vec<RealMatrix>,
    pub bias_grads: Vec<Vec<f64>>,
    pub input_grad: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(net: &Network) -> Self {
        GradBundle {
            weight_grads: net
                .weights
                .iter()
                .map(|w| RealMatrix::zeros(w.rows, w.cols))
                .collect(),
            bias_grads: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input_grad: vec![0.0; net.spec.input_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &GradBundle) {
        for (a, b) in self.weight_grads.iter_mut().zip(&other.weight_grads) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        for (a, b) in self.bias_grads.iter_mut().zip(&other.bias_grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.input_grad.iter_mut().zip(&other.input_grad) {
            *x += y;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weight_grads {
            w.data.iter_mut().for_each(|x| *x *= c);
        }
        for b in &mut self.bias_grads {
            b.iter_mut().for_each(|x| *x *= c);
        }
        self.input_grad.iter_mut().for_each(|x| *x *= c);
    }

    pub fn is_finite(&self) -> bool {
        self.weight_grads
            .iter()
            .all(|w| w.data.iter().all(|v| v.is_finite()))
            && self.bias_grads.iter().flatten().all(|v| v.is_finite())
            && self.input_grad.iter().all(|v| v.is_finite())
    }
}

impl Network {
    /// He-normal weights, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for w in spec.layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.standard_normal() * scale)
                .collect();
            weights.push(RealMatrix {
                rows: fan_out,
                cols: fan_in,
                data,
            });
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Network {
            spec,
            weights,
            biases,
            frozen: false,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn from_params(spec: NetworkSpec, weights: Vec<RealMatrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.num_layers() || biases.len() != spec.num_layers() {
            return Err(Error::Shape(format!(
                "expected {} layers of parameters, got {} weights / {} biases",
                spec.num_layers(),
                weights.len(),
                biases.len()
            )));
        }
        for (l, dims) in spec.layer_dims.windows(2).enumerate() {
            let w = &weights[l];
            if w.rows != dims[1] || w.cols != dims[0] {
                return Err(Error::Shape(format!(
                    "layer {l} weight is {}x{}, expected {}x{}",
                    w.rows, w.cols, dims[1], dims[0]
                )));
            }
            if biases[l].len() != dims[1] {
                return Err(Error::Shape(format!(
                    "layer {l} bias has {} entries, expected {}",
                    biases[l].len(),
                    dims[1]
                )));
            }
            if biases[l].iter().any(|v| !v.is_finite()) || w.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Network {
            spec,
            weights,
            biases,
            frozen: false,
            id: fresh_id(),
            version: 0,
        })
    }

    /// Single affine layer `x ↦ x` of width `n`.
    pub fn identity(n: usize, output_head: OutputHead) -> Self {
        Network::from_params(
            NetworkSpec::uniform(vec![n, n], Activation::Identity, output_head),
            vec![RealMatrix::identity(n)],
            vec![vec![0.0; n]],
        )
        .expect("identity network is well-formed")
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[RealMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Mutable parameter access; fails once frozen.
    pub fn params_mut(&mut self) -> Result<(&mut [RealMatrix], &mut [Vec<f64>])> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        self.version += 1;
        Ok((&mut self.weights, &mut self.biases))
    }

    /// All parameters flattened layer by layer: weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat_params(spec: NetworkSpec, flat: &[f64]) -> Result<Self> {
        spec.validate()?;
        if flat.len() != spec.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                spec.num_params(),
                flat.len()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut at = 0;
        for w in spec.layer_dims.windows(2) {
            let n = w[0] * w[1];
            weights.push(RealMatrix::from_vec(w[1], w[0], flat[at..at + n].to_vec())?);
            at += n;
            biases.push(flat[at..at + w[1]].to_vec());
            at += w[1];
        }
        Network::from_params(spec, weights, biases)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        self.spec
            .activations
            .get(layer)
            .copied()
            .unwrap_or(Activation::Identity)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let layers = self.spec.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = input.to_vec();
        for l in 0..layers {
            let mut z = self.weights[l].mul_vec(&a);
            for (zi, bi) in z.iter_mut().zip(&self.biases[l]) {
                *zi += bi;
            }
            let act = self.layer_activation(l);
            let next: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((
            a,
            ForwardCache {
                network_id: self.id,
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for l in 0..self.spec.num_layers() {
            let act = self.layer_activation(l);
            let z = self.weights[l].mul_vec(&a);
            a = z
                .iter()
                .zip(&self.biases[l])
                .map(|(v, b)| act.apply(v + b))
                .collect();
        }
        Ok(a)
    }

    fn check_cache(&self, cache: &ForwardCache, dout: &[f64]) -> Result<()> {
        if cache.network_id != self.id || cache.version != self.version {
            return Err(Error::Cache(
                "cache was produced by a different network or before a parameter update".into(),
            ));
        }
        if cache.inputs.len() != self.spec.num_layers() {
            return Err(Error::Cache("layer count differs".into()));
        }
        if dout.len() != self.output_dim() {
            return Err(Error::InputShape {
                expected: self.output_dim(),
                got: dout.len(),
            });
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, dloss_doutput: &[f64]) -> Result<GradBundle> {
        self.check_cache(cache, dloss_doutput)?;
        let layers = self.spec.num_layers();
        let mut weight_grads = vec![RealMatrix::zeros(0, 0); layers];
        let mut bias_grads = vec![Vec::new(); layers];
        let mut delta_out = dloss_doutput.to_vec();
        for l in (0..layers).rev() {
            let act = self.layer_activation(l);
            let delta: Vec<f64> = delta_out
                .iter()
                .zip(&cache.pre[l])
                .map(|(d, &p)| d * act.derivative(p))
                .collect();
            let input = &cache.inputs[l];
            let mut gw = RealMatrix::zeros(delta.len(), input.len());
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw.data[r * input.len()..(r + 1) * input.len()];
                for (g, x) in row.iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            delta_out = self.weights[l].tmul_vec(&delta);
            weight_grads[l] = gw;
            bias_grads[l] = delta;
        }
        Ok(GradBundle {
            weight_grads,
            bias_grads,
            input_grad: delta_out,
        })
    }

    /// Gradient with respect to the input only.
    pub fn input_grad(&self, cache: &ForwardCache, dloss_doutput: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache, dloss_doutput)?;
        let mut delta = dloss_doutput.to_vec();
        for l in (0..self.spec.num_layers()).rev() {
            let act = self.layer_activation(l);
            for (d, &p) in delta.iter_mut().zip(&cache.pre[l]) {
                *d *= act.derivative(p);
            }
            delta = self.weights[l].tmul_vec(&delta);
        }
        Ok(delta)
    }
}

/// Momentum buffers for [`sgd_step`].
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(net: &Network) -> Self {
        SgdState {
            velocity_w: net.weights.iter().map(|w| vec![0.0; w.data.len()]).collect(),
            velocity_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// `v ← momentum·v + g; θ ← θ − lr·v`
pub fn sgd_step(net: &mut Network, grads: &GradBundle, lr: f64, momentum: f64, state: &mut SgdState) -> Result<()> {
    if net.frozen {
        return Err(Error::Frozen);
    }
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::param("lr", "must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::param("momentum", "must be in [0, 1)"));
    }
    if grads.weight_grads.len() != net.weights.len() || state.velocity_w.len() != net.weights.len() {
        return Err(Error::Shape("gradient bundle does not match network".into()));
    }
    let (weights, biases) = net.params_mut()?;
    for l in 0..weights.len() {
        let vw = &mut state.velocity_w[l];
        for ((p, v), g) in weights[l].data.iter_mut().zip(vw.iter_mut()).zip(&grads.weight_grads[l].data) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
        let vb = &mut state.velocity_b[l];
        for ((p, v), g) in biases[l].iter_mut().zip(vb.iter_mut()).zip(&grads.bias_grads[l]) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Cross-entropy of `softmax(logits)` against `label`, with its logit gradient.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Label {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = (sum.ln() - (logits[label] - max)).max(0.0);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// `ln(1 + eˣ)` in overflow-safe form.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`]: the logistic function.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(dims: &[usize], seed: u64) -> Network {
        let spec = NetworkSpec::uniform(dims.to_vec(), Activation::Relu, OutputHead::LinearLogits);
        let mut net = Network::init(spec, &mut Rng::new(seed, 0)).unwrap();
        // non-zero biases so relu kinks are off the sample points
        let (_, biases) = net.params_mut().unwrap();
        let mut rng = Rng::new(seed, 1);
        for b in biases.iter_mut() {
            for v in b.iter_mut() {
                *v = 0.1 * rng.standard_normal();
            }
        }
        net
    }

    /// Straight-line evaluator that shares nothing with `forward`.
    fn reference_eval(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let layers = net.weights().len();
        for l in 0..layers {
            let w = &net.weights()[l];
            let mut next = Vec::new();
            for r in 0..w.rows() {
                let mut s = net.biases()[l][r];
                for c in 0..w.cols() {
                    s += w.get(r, c) * a[c];
                }
                if l + 1 < layers && net.spec().activations[l] == Activation::Relu && s < 0.0 {
                    s = 0.0;
                }
                next.push(s);
            }
            a = next;
        }
        a
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = Network::identity(2, OutputHead::Feature);
        let (out, _) = net.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn relu_clips_negative() {
        let spec = NetworkSpec::uniform(vec![2, 2, 2], Activation::Relu, OutputHead::Feature);
        let net = Network::from_params(
            spec,
            vec![RealMatrix::identity(2), RealMatrix::identity(2)],
            vec![vec![0.0; 2], vec![0.0; 2]],
        )
        .unwrap();
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap().0, vec![0.0, 2.0]);
    }

    #[test]
    fn forward_matches_reference_evaluator() {
        let net = random_net(&[5, 7, 3], 11);
        let mut rng = Rng::new(3, 3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
            let (out, _) = net.forward(&x).unwrap();
            let expect = reference_eval(&net, &x);
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(net.predict(&x).unwrap(), out);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = random_net(&[3, 2], 1);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::InputShape { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let (loss, _) = softmax_cross_entropy(&[0.25; 10], 3).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn saturated_logits() {
        let (loss, g) = softmax_cross_entropy(&[30.0, -30.0], 0).unwrap();
        assert!(loss < 1e-20);
        assert!(g.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 1.0], 2),
            Err(Error::Label { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Rng::new(17, 0);
        for trial in 0..20 {
            let logits: Vec<f64> = (0..6).map(|_| 3.0 * rng.standard_normal()).collect();
            let label = trial % 6;
            let (_, g) = softmax_cross_entropy(&logits, label).unwrap();
            for i in 0..logits.len() {
                let h = 1e-4;
                let mut p = logits.clone();
                p[i] += h;
                let mut m = logits.clone();
                m[i] -= h;
                let fd = (softmax_cross_entropy(&p, label).unwrap().0
                    - softmax_cross_entropy(&m, label).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-4);
                assert!(rel < 1e-6, "rel err {rel} at {i}");
            }
        }
    }

    #[test]
    fn cross_entropy_shift_invariant() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.4).collect();
        let a = softmax_cross_entropy(&logits, 1).unwrap().0;
        let b = softmax_cross_entropy(&shifted, 1).unwrap().0;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = random_net(&[4, 5, 3], 2);
        let (_, cache) = net.forward(&[0.5, -0.1, 0.2, 1.0]).unwrap();
        let g = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.weight_grads.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
        assert!(g.bias_grads.iter().flatten().all(|&v| v == 0.0));
        assert!(g.input_grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_input_grad_is_transpose_product() {
        let w = RealMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let net = Network::from_params(
            NetworkSpec::uniform(vec![3, 2], Activation::Identity, OutputHead::Feature),
            vec![w],
            vec![vec![0.0; 2]],
        )
        .unwrap();
        let (_, cache) = net.forward(&[1.0, 1.0, 1.0]).unwrap();
        let g = net.backward(&cache, &[1.0, -1.0]).unwrap();
        assert_eq!(g.input_grad, vec![-3.0, -3.0, -3.0]);
        assert_eq!(net.input_grad(&cache, &[1.0, -1.0]).unwrap(), g.input_grad);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = random_net(&[3, 2], 4);
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        let g = net.backward(&cache, &[1.0, 0.0]).unwrap();
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &g, 0.1, 0.0, &mut st).unwrap();
        assert!(matches!(net.backward(&cache, &[1.0, 0.0]), Err(Error::Cache(_))));

        let other = random_net(&[3, 2], 4);
        let (_, foreign) = other.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(net.backward(&foreign, &[1.0, 0.0]), Err(Error::Cache(_))));
    }

    #[test]
    fn sgd_zero_lr_is_noop() {
        let mut net = random_net(&[3, 4, 2], 5);
        let before = net.flat_params();
        let (_, cache) = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        let g = net.backward(&cache, &[1.0, 2.0]).unwrap();
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &g, 0.0, 0.9, &mut st).unwrap();
        assert_eq!(net.flat_params(), before);
    }

    fn scalar_net(w: f64) -> Network {
        Network::from_params(
            NetworkSpec::uniform(vec![1, 1], Activation::Identity, OutputHead::Feature),
            vec![RealMatrix::from_vec(1, 1, vec![w]).unwrap()],
            vec![vec![0.0]],
        )
        .unwrap()
    }

    fn scalar_grad(net: &Network, g: f64) -> GradBundle {
        let mut b = GradBundle::zeros_like(net);
        b.weight_grads[0].set(0, 0, g);
        b
    }

    #[test]
    fn sgd_single_scalar_step() {
        let mut net = scalar_net(1.0);
        let g = scalar_grad(&net, 2.0);
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &g, 0.1, 0.0, &mut st).unwrap();
        assert!((net.weights()[0].get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_two_steps_unrolled() {
        let mut net = scalar_net(1.0);
        let mut st = SgdState::new(&net);
        let (lr, mu) = (0.1, 0.9);
        let (g1, g2) = (scalar_grad(&net, 2.0), scalar_grad(&net, -1.0));
        sgd_step(&mut net, &g1, lr, mu, &mut st).unwrap();
        sgd_step(&mut net, &g2, lr, mu, &mut st).unwrap();
        // v1 = 2, w1 = 1 - 0.2 = 0.8; v2 = 0.9*2 - 1 = 0.8, w2 = 0.8 - 0.08 = 0.72
        assert!((net.weights()[0].get(0, 0) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn frozen_network_rejects_updates() {
        let mut net = scalar_net(1.0);
        net.freeze();
        let g = scalar_grad(&net, 1.0);
        let mut st = SgdState::new(&net);
        assert!(matches!(sgd_step(&mut net, &g, 0.1, 0.0, &mut st), Err(Error::Frozen)));
        assert!(matches!(net.params_mut(), Err(Error::Frozen)));
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        // exp(-50) computed independently; log1p(e) = e - e²/2 + ... ≈ e at this scale
        let e = (-50f64).exp();
        assert!(((softplus(-50.0) - e) / e).abs() < 1e-12);
        assert!(softplus_grad(-50.0) > 0.0);
        assert!(((softplus_grad(-50.0) - e) / e).abs() < 1e-12);
        assert!((softplus_grad(0.0) - 0.5).abs() < 1e-15);
        for x in [-700.0, -30.0, -1.0, 0.0, 1.0, 30.0, 700.0] {
            assert!(softplus(x) > 0.0 && softplus(x).is_finite());
        }
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn flat_params_roundtrip() {
        let net = random_net(&[3, 4, 2], 8);
        let back = Network::from_flat_params(net.spec().clone(), &net.flat_params()).unwrap();
        assert_eq!(back, net);
    }
}
