//! Softmax policy network and its REINFORCE training rule.
//!
//! The network is a plain three-affine stack: state → h₁ (rectified) → h₂
//! (rectified) → one logit per relation, normalized by a max-subtracted
//! softmax. Everything is `Vec<f64>` with hand-written forward and
//! backward passes; the model is small enough that clarity beats BLAS.
//!
//! Training maximizes `Σₜ log π(aₜ|sₜ) · R` for a trajectory with terminal
//! reward R. [`reinforce_gradient`] returns the ascent gradient;
//! [`apply_update`] folds it into the parameters with Adam moment
//! estimates plus L2 weight decay on weights (never biases). Supervised
//! teacher-path training is the R = +1 special case and failed-step
//! penalties the R = −1 case, so one gradient path serves every stage.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::binio;
use crate::error::{Error, Result};
use crate::kg::RelationId;
use crate::rng;

const POLICY_MAGIC: &[u8; 8] = b"KGPOLI01";
const ADAM_MAGIC: &[u8; 8] = b"KGADAM01";

/// One affine layer: `y = W x + b` with `W` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Affine {
        Affine {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (row, out) in y.iter_mut().enumerate() {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            *out += w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
        y
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite()) && self.bias.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Affine) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }
}

/// The three layers of the policy network.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub layers: [Affine; 3],
}

/// Accumulated gradient with the same shape as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradient {
    pub layers: [Affine; 3],
}

impl PolicyParams {
    pub fn state_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden_dims(&self) -> (usize, usize) {
        (self.layers[0].out_dim, self.layers[1].out_dim)
    }

    pub fn action_count(&self) -> usize {
        self.layers[2].out_dim
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Affine::is_finite)
    }

    /// A zero gradient of matching shape.
    pub fn zero_gradient(&self) -> PolicyGradient {
        PolicyGradient {
            layers: [
                Affine::zeros(self.layers[0].in_dim, self.layers[0].out_dim),
                Affine::zeros(self.layers[1].in_dim, self.layers[1].out_dim),
                Affine::zeros(self.layers[2].in_dim, self.layers[2].out_dim),
            ],
        }
    }
}

/// Probability per action (= relation id), nonnegative and summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A rollout to learn from: visited states, chosen actions, and one
/// terminal reward applied to the whole sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<(Vec<f64>, RelationId)>,
    pub terminal_reward: f64,
}

/// Seeded initialization: weights ~ Normal(0, 1/√fan_in), biases zero.
pub fn init_policy(
    state_dim: usize,
    hidden: (usize, usize),
    action_count: usize,
    seed: u64,
) -> PolicyParams {
    assert!(
        state_dim >= 1 && hidden.0 >= 1 && hidden.1 >= 1 && action_count >= 1,
        "all policy dimensions must be at least 1"
    );
    let mut r = rng::stream(seed, "policy-init", 0);
    let mut layer = |in_dim: usize, out_dim: usize| {
        let normal = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt()).expect("valid stddev");
        let mut a = Affine::zeros(in_dim, out_dim);
        for w in a.weights.iter_mut() {
            *w = normal.sample(&mut r);
        }
        a
    };
    PolicyParams {
        layers: [
            layer(state_dim, hidden.0),
            layer(hidden.0, hidden.1),
            layer(hidden.1, action_count),
        ],
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// Max-subtracted softmax; finite for any finite logits.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Intermediate activations kept for backpropagation.
struct ForwardCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_cached(params: &PolicyParams, state: &[f64]) -> Result<ForwardCache> {
    if state.len() != params.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.state_dim(),
            got: state.len(),
        });
    }
    let z1 = params.layers[0].apply(state);
    let a1 = relu(&z1);
    let z2 = params.layers[1].apply(&a1);
    let a2 = relu(&z2);
    let logits = params.layers[2].apply(&a2);
    let probs = softmax(&logits);
    Ok(ForwardCache {
        x: state.to_vec(),
        z1,
        a1,
        z2,
        a2,
        probs,
    })
}

/// The action distribution at `state`.
pub fn forward(params: &PolicyParams, state: &[f64]) -> Result<ActionDistribution> {
    forward_cached(params, state).map(|c| ActionDistribution(c.probs))
}

/// Draws an action index from the distribution. Zero-probability actions
/// are never drawn.
pub fn sample_action<R: Rng>(dist: &ActionDistribution, rng: &mut R) -> RelationId {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.0.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cum += p;
            if u < cum {
                return RelationId(i as u32);
            }
        }
    }
    // Rounding left a sliver of probability mass unassigned; give it to
    // the last action that owns any mass.
    RelationId(last_positive as u32)
}

/// Σₜ log π(aₜ|sₜ) for a trajectory under the current parameters.
pub fn log_prob_sum(params: &PolicyParams, trajectory: &Trajectory) -> Result<f64> {
    let mut sum = 0.0;
    for (state, action) in &trajectory.steps {
        let cache = forward_cached(params, state)?;
        let idx = action.0 as usize;
        if idx >= cache.probs.len() {
            return Err(Error::InvalidRelationId(action.0));
        }
        sum += cache.probs[idx].max(f64::MIN_POSITIVE).ln();
    }
    Ok(sum)
}

/// Ascent gradient of `Σₜ log π(aₜ|sₜ) · terminal_reward`.
///
/// Exactly linear in the terminal reward: the per-step log-likelihood
/// gradients are accumulated once and scaled at the end.
pub fn reinforce_gradient(params: &PolicyParams, trajectory: &Trajectory) -> Result<PolicyGradient> {
    if trajectory.steps.is_empty() {
        return Err(Error::EmptyInput(
            "trajectory must contain at least one step".into(),
        ));
    }
    let mut grad = params.zero_gradient();
    for (state, action) in &trajectory.steps {
        let cache = forward_cached(params, state)?;
        let idx = action.0 as usize;
        if idx >= cache.probs.len() {
            return Err(Error::InvalidRelationId(action.0));
        }
        // d log softmax: one-hot(action) − probs.
        let mut d_logits = cache.probs.clone();
        for v in d_logits.iter_mut() {
            *v = -*v;
        }
        d_logits[idx] += 1.0;

        backprop_step(params, &cache, &d_logits, &mut grad);
    }
    let scale = trajectory.terminal_reward;
    for layer in grad.layers.iter_mut() {
        for w in layer.weights.iter_mut() {
            *w *= scale;
        }
        for b in layer.bias.iter_mut() {
            *b *= scale;
        }
    }
    Ok(grad)
}

/// Accumulates one step's backward pass into `grad` (unscaled).
fn backprop_step(
    params: &PolicyParams,
    cache: &ForwardCache,
    d_logits: &[f64],
    grad: &mut PolicyGradient,
) {
    // Output layer: dW₃ = d_logits ⊗ a₂, db₃ = d_logits.
    accumulate_layer(&mut grad.layers[2], d_logits, &cache.a2);
    let d_a2 = backward_through(&params.layers[2], d_logits);
    let d_z2 = relu_backward(&d_a2, &cache.z2);

    accumulate_layer(&mut grad.layers[1], &d_z2, &cache.a1);
    let d_a1 = backward_through(&params.layers[1], &d_z2);
    let d_z1 = relu_backward(&d_a1, &cache.z1);

    accumulate_layer(&mut grad.layers[0], &d_z1, &cache.x);
}

/// grad_W += d_out ⊗ input; grad_b += d_out.
fn accumulate_layer(layer_grad: &mut Affine, d_out: &[f64], input: &[f64]) {
    for (row, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let w = &mut layer_grad.weights[row * layer_grad.in_dim..(row + 1) * layer_grad.in_dim];
        for (wi, &xi) in w.iter_mut().zip(input) {
            *wi += d * xi;
        }
        layer_grad.bias[row] += d;
    }
}

/// Wᵀ · d_out.
fn backward_through(layer: &Affine, d_out: &[f64]) -> Vec<f64> {
    let mut d_in = vec![0.0; layer.in_dim];
    for (row, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
        for (di, &wi) in d_in.iter_mut().zip(w) {
            *di += d * wi;
        }
    }
    d_in
}

/// Gate by the rectifier's active set (pre-activation > 0).
fn relu_backward(d_act: &[f64], z: &[f64]) -> Vec<f64> {
    d_act
        .iter()
        .zip(z)
        .map(|(&d, &zi)| if zi > 0.0 { d } else { 0.0 })
        .collect()
}

/// Adam first/second moment estimates plus the shared hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: [Affine; 3],
    v: [Affine; 3],
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with β₁ = 0.9, β₂ = 0.999,
    /// ε = 10⁻⁸.
    pub fn new(params: &PolicyParams) -> AdamState {
        let zeros = params.zero_gradient();
        AdamState {
            m: zeros.layers.clone(),
            v: zeros.layers,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam ascent step with L2 decay on weights only.
///
/// A non-finite or shape-mismatched gradient aborts before anything is
/// mutated, so the caller's parameters remain the last good ones.
pub fn apply_update(
    params: &mut PolicyParams,
    gradient: &PolicyGradient,
    opt: &mut AdamState,
    learning_rate: f64,
    l2: f64,
) -> Result<()> {
    for (p, g) in params.layers.iter().zip(&gradient.layers) {
        if !p.same_shape(g) {
            return Err(Error::DimensionMismatch {
                expected: p.in_dim * p.out_dim,
                got: g.in_dim * g.out_dim,
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("policy gradient".into()));
        }
    }
    opt.step += 1;
    let (beta1, beta2, epsilon) = (opt.beta1, opt.beta2, opt.epsilon);
    let t = opt.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for layer_idx in 0..3 {
        let p = &mut params.layers[layer_idx];
        let g = &gradient.layers[layer_idx];
        let m = &mut opt.m[layer_idx];
        let v = &mut opt.v[layer_idx];
        let update = |values: &mut [f64],
                          grads: &[f64],
                          ms: &mut [f64],
                          vs: &mut [f64],
                          decay: f64| {
            for i in 0..values.len() {
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * grads[i];
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * grads[i] * grads[i];
                let m_hat = ms[i] / bias1;
                let v_hat = vs[i] / bias2;
                let old = values[i];
                values[i] += learning_rate * m_hat / (v_hat.sqrt() + epsilon)
                    - learning_rate * decay * old;
            }
        };
        update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights, l2);
        update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, 0.0);
    }
    Ok(())
}

fn write_affine<W: std::io::Write>(w: &mut W, layer: &Affine) -> Result<()> {
    binio::write_f64_slice(w, &layer.weights)?;
    binio::write_f64_slice(w, &layer.bias)
}

fn read_affine<R: std::io::Read>(
    r: &mut R,
    in_dim: usize,
    out_dim: usize,
    path: &Path,
) -> Result<Affine> {
    let weights = binio::read_f64_vec(r, in_dim * out_dim, path)?;
    let bias = binio::read_f64_vec(r, out_dim, path)?;
    Ok(Affine {
        weights,
        bias,
        in_dim,
        out_dim,
    })
}

/// Writes the policy checkpoint: magic, dims, then each layer's weights
/// and bias as little-endian f64.
pub fn save_policy(params: &PolicyParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    binio::write_magic(&mut w, POLICY_MAGIC)?;
    let (h1, h2) = params.hidden_dims();
    binio::write_u64(&mut w, params.state_dim() as u64)?;
    binio::write_u64(&mut w, h1 as u64)?;
    binio::write_u64(&mut w, h2 as u64)?;
    binio::write_u64(&mut w, params.action_count() as u64)?;
    for layer in &params.layers {
        write_affine(&mut w, layer)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_policy`].
pub fn load_policy(path: &Path) -> Result<PolicyParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    binio::expect_magic(&mut r, POLICY_MAGIC, path)?;
    let state_dim = binio::read_u64(&mut r, path)? as usize;
    let h1 = binio::read_u64(&mut r, path)? as usize;
    let h2 = binio::read_u64(&mut r, path)? as usize;
    let actions = binio::read_u64(&mut r, path)? as usize;
    Ok(PolicyParams {
        layers: [
            read_affine(&mut r, state_dim, h1, path)?,
            read_affine(&mut r, h1, h2, path)?,
            read_affine(&mut r, h2, actions, path)?,
        ],
    })
}

/// Writes the optimizer state next to a policy checkpoint so training can
/// resume exactly.
pub fn save_adam(opt: &AdamState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    binio::write_magic(&mut w, ADAM_MAGIC)?;
    binio::write_u64(&mut w, opt.m[0].in_dim as u64)?;
    binio::write_u64(&mut w, opt.m[0].out_dim as u64)?;
    binio::write_u64(&mut w, opt.m[1].out_dim as u64)?;
    binio::write_u64(&mut w, opt.m[2].out_dim as u64)?;
    binio::write_u64(&mut w, opt.step)?;
    binio::write_f64_slice(&mut w, &[opt.beta1, opt.beta2, opt.epsilon])?;
    for layer in opt.m.iter().chain(opt.v.iter()) {
        write_affine(&mut w, layer)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads optimizer state written by [`save_adam`].
pub fn load_adam(path: &Path) -> Result<AdamState> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    binio::expect_magic(&mut r, ADAM_MAGIC, path)?;
    let state_dim = binio::read_u64(&mut r, path)? as usize;
    let h1 = binio::read_u64(&mut r, path)? as usize;
    let h2 = binio::read_u64(&mut r, path)? as usize;
    let actions = binio::read_u64(&mut r, path)? as usize;
    let step = binio::read_u64(&mut r, path)?;
    let scalars = binio::read_f64_vec(&mut r, 3, path)?;
    let read_three = |r: &mut BufReader<std::fs::File>| -> Result<[Affine; 3]> {
        Ok([
            read_affine(r, state_dim, h1, path)?,
            read_affine(r, h1, h2, path)?,
            read_affine(r, h2, actions, path)?,
        ])
    };
    let m = read_three(&mut r)?;
    let v = read_three(&mut r)?;
    Ok(AdamState {
        m,
        v,
        step,
        beta1: scalars[0],
        beta2: scalars[1],
        epsilon: scalars[2],
    })
}
