//! Minimal dense network: forward pass, analytic backprop, Adam, and a
//! finite-difference gradient oracle for tests.
//!
//! All math is f64. Weight matrices are row-major with shape
//! `(out_dim, in_dim)`; the flattened parameter order is, per layer,
//! weights then biases.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    // Derivative as a function of the pre-activation z. ReLU subgradient
    // at 0 is 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense multilayer perceptron with one activation for hidden layers and
/// one for the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    // weights[k] is row-major (layer_sizes[k+1] x layer_sizes[k]).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Per-layer parameter gradients, shape-congruent with the producing `Mlp`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w.iter_mut() {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Activation record from `forward`, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    // post_activations[0] is the input; post_activations[k+1] the output of layer k.
    post_activations: Vec<Vec<f64>>,
    // pre_activations[k] is z = W a + b for layer k.
    pre_activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// Fan-in-scaled uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// biases zero. Deterministic for a fixed seed.
    pub fn init(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Mlp> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[k], layer_sizes[k + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
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

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn activation_for_layer(&self, k: usize) -> Activation {
        if k + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.layer_sizes[0] {
            return Err(Error::InvalidArgument(format!(
                "input length {} != expected {}",
                input.len(),
                self.layer_sizes[0]
            )));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut post = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        post.push(input.to_vec());
        for k in 0..n_layers {
            let (in_dim, out_dim) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let a = &post[k];
            let w = &self.weights[k];
            let b = &self.biases[k];
            let act = self.activation_for_layer(k);
            let mut z = vec![0.0; out_dim];
            for i in 0..out_dim {
                let row = &w[i * in_dim..(i + 1) * in_dim];
                let mut s = b[i];
                for (wij, aj) in row.iter().zip(a.iter()) {
                    s = wij.mul_add(*aj, s);
                }
                z[i] = s;
            }
            let y: Vec<f64> = z.iter().map(|&zi| act.apply(zi)).collect();
            pre.push(z);
            post.push(y);
        }
        let output = post.last().unwrap().clone();
        Ok((output, ForwardCache { post_activations: post, pre_activations: pre }))
    }

    /// Output without the cache, for rollouts and target computations.
    pub fn forward_value(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Backprop from d(loss)/d(output). Returns parameter gradients plus
    /// d(loss)/d(input) for chaining the actor through the critic.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let n_layers = self.layer_sizes.len() - 1;
        if cache.pre_activations.len() != n_layers
            || cache.post_activations.len() != n_layers + 1
            || cache
                .pre_activations
                .iter()
                .enumerate()
                .any(|(k, z)| z.len() != self.layer_sizes[k + 1])
            || cache
                .post_activations
                .iter()
                .enumerate()
                .any(|(k, a)| a.len() != self.layer_sizes[k])
        {
            return Err(Error::InvalidArgument("cache does not match network shape".into()));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "output_grad length {} != output width {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        // delta = dL/dz for the current layer, starting at the output.
        let mut delta: Vec<f64> = cache.pre_activations[n_layers - 1]
            .iter()
            .zip(output_grad)
            .map(|(&z, &g)| g * self.activation_for_layer(n_layers - 1).derivative(z))
            .collect();
        for k in (0..n_layers).rev() {
            let (in_dim, out_dim) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let a = &cache.post_activations[k];
            for i in 0..out_dim {
                let d = delta[i];
                let grow = &mut grads.weights[k][i * in_dim..(i + 1) * in_dim];
                for (g, aj) in grow.iter_mut().zip(a.iter()) {
                    *g = d * aj;
                }
                grads.biases[k][i] = d;
            }
            // dL/da for the layer below (or dL/dinput when k == 0).
            let w = &self.weights[k];
            let mut da = vec![0.0; in_dim];
            for i in 0..out_dim {
                let d = delta[i];
                let row = &w[i * in_dim..(i + 1) * in_dim];
                for (dj, wij) in da.iter_mut().zip(row.iter()) {
                    *dj = d.mul_add(*wij, *dj);
                }
            }
            if k == 0 {
                return Ok((grads, da));
            }
            let zs = &cache.pre_activations[k - 1];
            let act = self.activation_for_layer(k - 1);
            delta = da.iter().zip(zs.iter()).map(|(&g, &z)| g * act.derivative(z)).collect();
        }
        unreachable!()
    }

    /// Flat parameter vector: per layer, weights (row-major) then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "flat length {} != parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (wn, bn) = (w.len(), b.len());
            w.copy_from_slice(&flat[off..off + wn]);
            off += wn;
            b.copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    /// target <- polyak * target + (1 - polyak) * main, per parameter.
    pub fn polyak_from(&mut self, main: &Mlp, polyak: f64) {
        for (tw, mw) in self.weights.iter_mut().zip(&main.weights) {
            for (t, m) in tw.iter_mut().zip(mw) {
                *t = polyak * *t + (1.0 - polyak) * m;
            }
        }
        for (tb, mb) in self.biases.iter_mut().zip(&main.biases) {
            for (t, m) in tb.iter_mut().zip(mb) {
                *t = polyak * *t + (1.0 - polyak) * m;
            }
        }
    }
}

/// Per-parameter Adam moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            step_count: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam step on `net` in place.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let g = grads.flatten();
    if g.len() != state.m.len() || g.len() != net.param_count() {
        return Err(Error::InvalidArgument("gradient shape does not match network".into()));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite gradient entry".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut theta = net.flatten();
    for i in 0..g.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + state.eps_hat);
    }
    net.set_from_flat(&theta)
}

/// Central-difference gradient of `loss_fn` w.r.t. every parameter of `net`.
/// Test oracle; O(params) loss evaluations.
pub fn finite_diff_grad<F>(net: &Mlp, mut loss_fn: F, h: f64) -> Result<Gradients>
where
    F: FnMut(&Mlp) -> f64,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument("h must be positive".into()));
    }
    let base = net.flatten();
    let mut flat_grad = vec![0.0; base.len()];
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut theta = base.clone();
        theta[i] = base[i] + h;
        probe.set_from_flat(&theta)?;
        let plus = loss_fn(&probe);
        theta[i] = base[i] - h;
        probe.set_from_flat(&theta)?;
        let minus = loss_fn(&probe);
        flat_grad[i] = (plus - minus) / (2.0 * h);
    }
    // Unflatten into the Gradients layout.
    let mut grads = Gradients::zeros_like(net);
    let mut off = 0;
    for (w, b) in grads.weights.iter_mut().zip(&mut grads.biases) {
        let (wn, bn) = (w.len(), b.len());
        w.copy_from_slice(&flat_grad[off..off + wn]);
        off += wn;
        b.copy_from_slice(&flat_grad[off..off + bn]);
        off += bn;
    }
    Ok(grads)
}
