//! Dense neural-network substrate: MLP forward/backward, Adam, a squashed
//! Gaussian policy head, and finite-difference gradient checking.
//!
//! Batched passes keep everything as row-major matrices (rows = samples) so
//! the inner loops stay contiguous. No autodiff graph; each training loss
//! assembles its backward pass explicitly from these building blocks.

use crate::linalg::{axpy, Mat};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} entries, network expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("non-finite gradient encountered in {0}")]
    NonFiniteGradient(String),
}

/// Fully-connected network with tanh hidden layers and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// weights[l] is (sizes[l+1] × sizes[l]); row o holds the fan-in of unit o.
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for v in w.data.iter_mut() {
                *v = rng.uniform_range(-bound, bound);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.data.len())
            .sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                got: input.len(),
                expected: self.input_dim(),
            });
        }
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            let w = &self.weights[l];
            let mut z = w.matvec(&x);
            for (zi, bi) in z.iter_mut().zip(&self.biases[l]) {
                *zi += bi;
            }
            if l + 1 < self.n_layers() {
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
            }
            x = z;
        }
        Ok(x)
    }

    /// Batched forward pass (rows are samples), returning the activation
    /// cache needed for `backward_batch`.
    pub fn forward_batch(&self, input: &Mat) -> Result<(Mat, ForwardCache), NnError> {
        if input.cols != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                got: input.cols,
                expected: self.input_dim(),
            });
        }
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(input.clone());
        let mut x = input.clone();
        for l in 0..self.n_layers() {
            let w = &self.weights[l];
            let mut z = x.matmul_bt(w);
            for r in 0..z.rows {
                let row = z.row_mut(r);
                for (zi, bi) in row.iter_mut().zip(&self.biases[l]) {
                    *zi += bi;
                }
            }
            if l + 1 < self.n_layers() {
                for v in z.data.iter_mut() {
                    *v = v.tanh();
                }
            }
            activations.push(z.clone());
            x = z;
        }
        Ok((x, ForwardCache { activations }))
    }

    /// Batched reverse-mode pass. `output_grad` is d(loss)/d(output), one
    /// row per sample. Returns parameter gradients (summed over the batch)
    /// and the gradient with respect to the input.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: &Mat) -> (MlpGrads, Mat) {
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = output_grad.clone();
        for l in (0..self.n_layers()).rev() {
            // Through the activation (output layer is linear).
            if l + 1 < self.n_layers() {
                let act = &cache.activations[l + 1];
                for (d, a) in delta.data.iter_mut().zip(&act.data) {
                    *d *= 1.0 - a * a;
                }
            }
            let input_act = &cache.activations[l];
            // dW = deltaᵀ · input ; db = column sums of delta.
            grads.weights[l] = delta.matmul_at(input_act);
            for r in 0..delta.rows {
                for (bi, di) in grads.biases[l].iter_mut().zip(delta.row(r)) {
                    *bi += di;
                }
            }
            // dX = delta · W
            if l > 0 {
                delta = delta.matmul(&self.weights[l]);
            } else {
                delta = delta.matmul(&self.weights[0]);
                return (grads, delta);
            }
        }
        unreachable!("loop returns at l == 0")
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Visit every parameter (weights then biases, layer order) immutably.
    pub fn for_each_param(&self, mut f: impl FnMut(f64)) {
        for w in &self.weights {
            for &v in &w.data {
                f(v);
            }
        }
        for b in &self.biases {
            for &v in b {
                f(v);
            }
        }
    }

    /// Mutate parameter at flat index `idx` (ordering as `for_each_param`).
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for w in self.weights.iter_mut() {
            if idx < w.data.len() {
                return &mut w.data[idx];
            }
            idx -= w.data.len();
        }
        for b in self.biases.iter_mut() {
            if idx < b.len() {
                return &mut b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn grad_at(grads: &MlpGrads, mut idx: usize) -> f64 {
        for w in &grads.weights {
            if idx < w.data.len() {
                return w.data[idx];
            }
            idx -= w.data.len();
        }
        for b in &grads.biases {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("gradient index out of range");
    }
}

/// Activations recorded during a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// activations[0] is the input; activations[l+1] the output of layer l
    /// (post-activation for hidden layers).
    pub activations: Vec<Mat>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net
                .weights
                .iter()
                .map(|w| Mat::zeros(w.rows, w.cols))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in self.weights.iter_mut() {
            for v in w.data.iter_mut() {
                *v *= s;
            }
        }
        for b in self.biases.iter_mut() {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            axpy(1.0, &o.data, &mut w.data);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            axpy(1.0, o, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for w in &self.weights {
            m = m.max(w.max_abs());
        }
        for b in &self.biases {
            for v in b {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Adam optimizer moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: MlpGrads,
    pub v: MlpGrads,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
            t: 0,
        }
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients so a
/// diverging run halts with a diagnostic instead of poisoning the weights.
pub fn adam_step(
    net: &mut Mlp,
    grads: &MlpGrads,
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<(), NnError> {
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient("adam update".into()));
    }
    state.t += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for l in 0..net.weights.len() {
        let w = &mut net.weights[l].data;
        let g = &grads.weights[l].data;
        let m = &mut state.m.weights[l].data;
        let v = &mut state.v.weights[l].data;
        for i in 0..w.len() {
            update(&mut w[i], g[i], &mut m[i], &mut v[i]);
        }
        let b = &mut net.biases[l];
        let gb = &grads.biases[l];
        let mb = &mut state.m.biases[l];
        let vb = &mut state.v.biases[l];
        for i in 0..b.len() {
            update(&mut b[i], gb[i], &mut mb[i], &mut vb[i]);
        }
    }
    Ok(())
}

/// ln(1 - tanh(z)²), computed stably.
pub fn log_one_minus_tanh_sq(z: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - z - softplus(-2.0 * z))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// A squashed Gaussian policy sample with everything needed to recompute its
/// density later.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub pre_squash: Vec<f64>,
    /// Env-space action: `scale * tanh(pre_squash)`.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Split a policy head output into (mean, clamped log_std).
pub fn split_policy_head(raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = raw.len() / 2;
    let mean = raw[..a].to_vec();
    let log_std = raw[a..]
        .iter()
        .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
        .collect();
    (mean, log_std)
}

/// Reparameterized sample from the squashed Gaussian head of `policy`.
pub fn sample_action(
    policy: &Mlp,
    obs: &[f64],
    action_scale: f64,
    rng: &mut Rng,
) -> Result<PolicyOutput, NnError> {
    let raw = policy.forward(obs)?;
    let (mean, log_std) = split_policy_head(&raw);
    let a = mean.len();
    let mut pre = Vec::with_capacity(a);
    for i in 0..a {
        pre.push(mean[i] + log_std[i].exp() * rng.standard_normal());
    }
    let action: Vec<f64> = pre.iter().map(|z| action_scale * z.tanh()).collect();
    let log_prob = squashed_log_prob(&mean, &log_std, &pre, action_scale);
    Ok(PolicyOutput {
        mean,
        log_std,
        pre_squash: pre,
        action,
        log_prob,
    })
}

/// Deterministic (mean) action for evaluation.
pub fn mean_action(policy: &Mlp, obs: &[f64], action_scale: f64) -> Result<Vec<f64>, NnError> {
    let raw = policy.forward(obs)?;
    let (mean, _) = split_policy_head(&raw);
    Ok(mean.iter().map(|z| action_scale * z.tanh()).collect())
}

/// Log-density of the squashed, scaled sample given the Gaussian parameters
/// and the pre-squash value: change of variables through tanh and the scale.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], pre_squash: &[f64], scale: f64) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let std = log_std[i].exp();
        let z = (pre_squash[i] - mean[i]) / std;
        lp += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_std[i];
        lp -= log_one_minus_tanh_sq(pre_squash[i]);
        lp -= scale.ln();
    }
    lp
}

/// Log-density of a stored env-space action under the current head
/// parameters, plus the partials needed for a behavior-cloning update:
/// d(logp)/d(mean_i) and d(logp)/d(log_std_i).
pub fn env_action_log_prob(
    mean: &[f64],
    log_std: &[f64],
    action_env: &[f64],
    scale: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let a = mean.len();
    let mut lp = 0.0;
    let mut d_mean = vec![0.0; a];
    let mut d_log_std = vec![0.0; a];
    for i in 0..a {
        let unit = (action_env[i] / scale).clamp(-1.0 + 1e-9, 1.0 - 1e-9);
        let pre = unit.atanh();
        let std = log_std[i].exp();
        let z = (pre - mean[i]) / std;
        lp += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_std[i];
        lp -= log_one_minus_tanh_sq(pre);
        lp -= scale.ln();
        d_mean[i] = z / std;
        d_log_std[i] = z * z - 1.0;
    }
    (lp, d_mean, d_log_std)
}

/// Report from a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub pass: bool,
}

/// Compare an analytic gradient against central finite differences on a
/// random subset of parameters. `loss` must be a deterministic function of
/// the network parameters.
pub fn gradient_check(
    net: &Mlp,
    analytic: &MlpGrads,
    mut loss: impl FnMut(&Mlp) -> f64,
    tolerance: f64,
    n_probes: usize,
    rng: &mut Rng,
) -> GradCheckReport {
    let total = net.param_count();
    if total == 0 {
        return GradCheckReport {
            max_rel_err: 0.0,
            checked: 0,
            pass: true,
        };
    }
    let h = 1e-5;
    let mut work = net.clone();
    let mut max_rel = 0.0f64;
    let probes = n_probes.min(total);
    for _ in 0..probes {
        let idx = rng.uniform_index(total);
        let original = *work.param_mut(idx);
        *work.param_mut(idx) = original + h;
        let up = loss(&work);
        *work.param_mut(idx) = original - h;
        let down = loss(&work);
        *work.param_mut(idx) = original;
        let fd = (up - down) / (2.0 * h);
        let an = Mlp::grad_at(analytic, idx);
        let denom = fd.abs().max(an.abs()).max(1e-6);
        max_rel = max_rel.max((fd - an).abs() / denom);
    }
    GradCheckReport {
        max_rel_err: max_rel,
        checked: probes,
        pass: max_rel <= tolerance,
    }
}
