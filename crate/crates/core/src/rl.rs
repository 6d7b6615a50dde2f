//! Off-policy actor-critic backbone: twin critics with target networks, a
//! squashed-Gaussian actor, and a replay buffer that tags every transition
//! with its action source (learner or controller). The entropy coefficient
//! is configurable and defaults to zero.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::nn::{
    adam_step, split_policy_head, AdamState, Mlp, MlpGrads, NnError, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::rng::Rng;

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum RlError {
    #[error("transition contains non-finite values")]
    NonFiniteTransition,
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Which sub-skill expert produced an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum ControllerKind {
    #[serde(rename = "IGM")]
    Igm,
    #[serde(rename = "CS")]
    Cs,
    #[serde(rename = "FG")]
    Fg,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerKind::Igm => write!(f, "IGM"),
            ControllerKind::Cs => write!(f, "CS"),
            ControllerKind::Fg => write!(f, "FG"),
        }
    }
}

/// Behavior-policy provenance of a stored transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    Learner,
    Controller(ControllerKind),
}

impl ActionSource {
    pub fn is_controller(&self) -> bool {
        matches!(self, ActionSource::Controller(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ActionSource::Learner => "learner",
            ActionSource::Controller(ControllerKind::Igm) => "igm",
            ActionSource::Controller(ControllerKind::Cs) => "cs",
            ActionSource::Controller(ControllerKind::Fg) => "fg",
        }
    }
}

/// One replay record. Actions are stored in env space.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub source: ActionSource,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.obs.iter().all(|v| v.is_finite())
            && self.action.iter().all(|v| v.is_finite())
            && self.next_obs.iter().all(|v| v.is_finite())
            && self.reward.is_finite()
    }
}

/// Fixed-capacity ring buffer with uniform-with-replacement sampling.
/// Each slot remembers its insertion index so audits can reason about when
/// a transition was collected.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    ids: Vec<u64>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            data: Vec::new(),
            ids: Vec::new(),
            capacity,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Total number of pushes ever performed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) -> Result<(), RlError> {
        if !t.is_finite() {
            return Err(RlError::NonFiniteTransition);
        }
        if self.data.len() < self.capacity {
            self.data.push(t);
            self.ids.push(self.inserted);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.data[slot] = t;
            self.ids[slot] = self.inserted;
        }
        self.inserted += 1;
        Ok(())
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>, RlError> {
        if self.data.is_empty() {
            return Err(RlError::EmptyBuffer);
        }
        Ok((0..n).map(|_| rng.uniform_index(self.data.len())).collect())
    }

    /// Iterate current contents with their insertion indices.
    pub fn iter_with_ids(&self) -> impl Iterator<Item = (u64, &Transition)> {
        self.ids.iter().copied().zip(self.data.iter())
    }
}

/// Hyperparameters of the off-policy learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Entropy coefficient. Zero by default: guided exploration, not
    /// entropy, is what drives discovery on this task, and nonzero values
    /// destroy learning.
    pub alpha_ent: f64,
    pub buffer_capacity: usize,
    /// Uniform-random action steps before any gradient updates.
    pub warmup_steps: usize,
    /// Environment steps per gradient step.
    pub update_interval: usize,
    pub hidden: Vec<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.98,
            tau: 0.005,
            batch_size: 128,
            learning_rate: 3e-4,
            alpha_ent: 0.0,
            buffer_capacity: 1_000_000,
            warmup_steps: 2000,
            update_interval: 2,
            hidden: vec![64, 64],
        }
    }
}

/// Learner state: policy, twin critics, their targets, and optimizers.
#[derive(Debug, Clone)]
pub struct RlState {
    pub cfg: RlConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Env-space action bound; the policy squashes into ±this.
    pub action_scale: f64,
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub opt_policy: AdamState,
    pub opt_q1: AdamState,
    pub opt_q2: AdamState,
    pub updates: u64,
}

impl RlState {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        action_scale: f64,
        cfg: RlConfig,
        rng: &mut Rng,
    ) -> Self {
        let mut policy_sizes = vec![obs_dim];
        policy_sizes.extend(&cfg.hidden);
        policy_sizes.push(2 * act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let policy = Mlp::new(&policy_sizes, rng);
        let q1 = Mlp::new(&critic_sizes, rng);
        let q2 = Mlp::new(&critic_sizes, rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        RlState {
            opt_policy: AdamState::new(&policy),
            opt_q1: AdamState::new(&q1),
            opt_q2: AdamState::new(&q2),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            cfg,
            obs_dim,
            act_dim,
            action_scale,
            updates: 0,
        }
    }

    pub fn critic_input(&self, obs: &[f64], action_env: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.obs_dim + self.act_dim);
        x.extend_from_slice(obs);
        for a in action_env {
            x.push(a / self.action_scale);
        }
        x
    }

    /// Conservative value estimate: the pointwise minimum of the twin
    /// critics at (obs, action).
    pub fn q_min(&self, obs: &[f64], action_env: &[f64]) -> Result<f64, RlError> {
        let x = self.critic_input(obs, action_env);
        let a = self.q1.forward(&x)?[0];
        let b = self.q2.forward(&x)?[0];
        Ok(a.min(b))
    }

    /// Stochastic learner action.
    pub fn sample_action(
        &self,
        obs: &[f64],
        rng: &mut Rng,
    ) -> Result<crate::nn::PolicyOutput, RlError> {
        Ok(crate::nn::sample_action(
            &self.policy,
            obs,
            self.action_scale,
            rng,
        )?)
    }

    /// Deterministic (mean) learner action for evaluation.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(crate::nn::mean_action(&self.policy, obs, self.action_scale)?)
    }

    /// One critic regression step toward the soft Bellman target
    /// y = r + γ(1−done)(min(Q1',Q2')(s',a'~π) − α·logπ(a'|s')).
    pub fn critic_update(
        &mut self,
        batch: &[&Transition],
        rng: &mut Rng,
    ) -> Result<(f64, f64), RlError> {
        let b = batch.len();
        assert!(b > 0, "empty batch");
        let mut next_obs = Mat::zeros(b, self.obs_dim);
        for (r, t) in batch.iter().enumerate() {
            next_obs.row_mut(r).copy_from_slice(&t.next_obs);
        }
        // Next actions from the current policy (reparameterized draw).
        let (head, _) = self.policy.forward_batch(&next_obs)?;
        let mut next_in = Mat::zeros(b, self.obs_dim + self.act_dim);
        let mut next_logp = vec![0.0; b];
        for r in 0..b {
            let (mean, log_std) = split_policy_head(head.row(r));
            let mut lp = 0.0;
            for i in 0..self.act_dim {
                let eps = rng.standard_normal();
                let z = mean[i] + log_std[i].exp() * eps;
                let u = z.tanh();
                next_in.set(r, self.obs_dim + i, u);
                if self.cfg.alpha_ent != 0.0 {
                    lp += -0.5 * eps * eps
                        - 0.5 * (2.0 * std::f64::consts::PI).ln()
                        - log_std[i]
                        - crate::nn::log_one_minus_tanh_sq(z)
                        - self.action_scale.ln();
                }
            }
            next_logp[r] = lp;
            next_in.row_mut(r)[..self.obs_dim].copy_from_slice(next_obs.row(r));
        }
        let (tq1, _) = self.q1_target.forward_batch(&next_in)?;
        let (tq2, _) = self.q2_target.forward_batch(&next_in)?;

        let mut targets = vec![0.0; b];
        for (r, t) in batch.iter().enumerate() {
            let q_next = tq1.get(r, 0).min(tq2.get(r, 0)) - self.cfg.alpha_ent * next_logp[r];
            let mask = if t.done { 0.0 } else { 1.0 };
            targets[r] = t.reward + self.cfg.gamma * mask * q_next;
        }

        let mut inputs = Mat::zeros(b, self.obs_dim + self.act_dim);
        for (r, t) in batch.iter().enumerate() {
            let x = self.critic_input(&t.obs, &t.action);
            inputs.row_mut(r).copy_from_slice(&x);
        }

        let mut losses = [0.0; 2];
        for (which, loss_slot) in losses.iter_mut().enumerate() {
            let critic = if which == 0 { &self.q1 } else { &self.q2 };
            let (pred, cache) = critic.forward_batch(&inputs)?;
            let mut grad_out = Mat::zeros(b, 1);
            let mut loss = 0.0;
            for r in 0..b {
                let err = pred.get(r, 0) - targets[r];
                loss += err * err;
                grad_out.set(r, 0, 2.0 * err / b as f64);
            }
            loss /= b as f64;
            *loss_slot = loss;
            let (grads, _) = critic.backward_batch(&cache, &grad_out);
            if which == 0 {
                adam_step(
                    &mut self.q1,
                    &grads,
                    &mut self.opt_q1,
                    self.cfg.learning_rate,
                    ADAM_BETAS,
                    ADAM_EPS,
                )?;
            } else {
                adam_step(
                    &mut self.q2,
                    &grads,
                    &mut self.opt_q2,
                    self.cfg.learning_rate,
                    ADAM_BETAS,
                    ADAM_EPS,
                )?;
            }
        }
        Ok((losses[0], losses[1]))
    }

    /// One actor ascent step on E[min(Q1,Q2)(s, a~π) − α·logπ(a|s)].
    /// Returns the loss (its negation).
    pub fn actor_update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<f64, RlError> {
        let b = batch.len();
        assert!(b > 0, "empty batch");
        let mut obs = Mat::zeros(b, self.obs_dim);
        for (r, t) in batch.iter().enumerate() {
            obs.row_mut(r).copy_from_slice(&t.obs);
        }
        let eps: Vec<f64> = (0..b * self.act_dim)
            .map(|_| rng.standard_normal())
            .collect();
        let (loss, grads) = self.actor_loss_and_grads(&obs, &eps)?;
        adam_step(
            &mut self.policy,
            &grads,
            &mut self.opt_policy,
            self.cfg.learning_rate,
            ADAM_BETAS,
            ADAM_EPS,
        )?;
        self.updates += 1;
        Ok(loss)
    }

    /// Actor loss and policy gradients for a fixed noise draw. Exposed so
    /// gradient checks can replay the identical stochastic loss.
    pub fn actor_loss_and_grads(&self, obs: &Mat, eps: &[f64]) -> Result<(f64, MlpGrads), RlError> {
        let (loss, grads) = actor_loss_pieces(
            &self.policy,
            &self.q1,
            &self.q2,
            obs,
            eps,
            self.cfg.alpha_ent,
            self.action_scale,
        )?;
        Ok((loss, grads))
    }

    /// Actor loss alone for an arbitrary parameter vector (same stochastic
    /// loss as `actor_loss_and_grads`).
    pub fn actor_loss_value(&self, policy: &Mlp, obs: &Mat, eps: &[f64]) -> Result<f64, RlError> {
        let (loss, _) = actor_loss_pieces(
            policy,
            &self.q1,
            &self.q2,
            obs,
            eps,
            self.cfg.alpha_ent,
            self.action_scale,
        )?;
        Ok(loss)
    }

    /// Polyak-average the online critics into the targets.
    pub fn soft_update(&mut self, tau: f64) {
        polyak(&mut self.q1_target, &self.q1, tau);
        polyak(&mut self.q2_target, &self.q2, tau);
    }
}

fn polyak(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (tw, ow) in target.weights.iter_mut().zip(&online.weights) {
        for (t, o) in tw.data.iter_mut().zip(&ow.data) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
    for (tb, ob) in target.biases.iter_mut().zip(&online.biases) {
        for (t, o) in tb.iter_mut().zip(ob) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
}

/// Actor loss with explicit noise, returning the loss and its gradient with
/// respect to the policy parameters.
fn actor_loss_pieces(
    policy: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    obs: &Mat,
    eps: &[f64],
    alpha_ent: f64,
    action_scale: f64,
) -> Result<(f64, MlpGrads), RlError> {
    let b = obs.rows;
    let obs_dim = obs.cols;
    let act_dim = eps.len() / b;
    let (head, policy_cache) = policy.forward_batch(obs)?;

    // Assemble squashed actions and remember everything the chain needs.
    let mut critic_in = Mat::zeros(b, obs_dim + act_dim);
    let mut u_all = Mat::zeros(b, act_dim);
    let mut z_all = Mat::zeros(b, act_dim);
    let mut std_all = Mat::zeros(b, act_dim);
    let mut clamp_mask = Mat::zeros(b, act_dim);
    for r in 0..b {
        let raw = head.row(r);
        critic_in.row_mut(r)[..obs_dim].copy_from_slice(obs.row(r));
        for i in 0..act_dim {
            let mean = raw[i];
            let raw_ls = raw[act_dim + i];
            let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let within = (raw_ls > LOG_STD_MIN && raw_ls < LOG_STD_MAX) as u8 as f64;
            let std = ls.exp();
            let e = eps[r * act_dim + i];
            let z = mean + std * e;
            let u = z.tanh();
            z_all.set(r, i, z);
            u_all.set(r, i, u);
            std_all.set(r, i, std);
            clamp_mask.set(r, i, within);
            critic_in.set(r, obs_dim + i, u);
        }
    }

    let (p1, c1) = q1.forward_batch(&critic_in)?;
    let (p2, c2) = q2.forward_batch(&critic_in)?;

    let mut loss = 0.0;
    let mut d1 = Mat::zeros(b, 1);
    let mut d2 = Mat::zeros(b, 1);
    let inv_b = 1.0 / b as f64;
    for r in 0..b {
        let (v1, v2) = (p1.get(r, 0), p2.get(r, 0));
        loss -= v1.min(v2) * inv_b;
        // Route the gradient through whichever critic attains the min.
        if v1 <= v2 {
            d1.set(r, 0, -inv_b);
        } else {
            d2.set(r, 0, -inv_b);
        }
        if alpha_ent != 0.0 {
            let mut logp = 0.0;
            for i in 0..act_dim {
                let e = eps[r * act_dim + i];
                logp += -0.5 * e * e
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - std_all.get(r, i).ln()
                    - crate::nn::log_one_minus_tanh_sq(z_all.get(r, i))
                    - action_scale.ln();
            }
            loss += alpha_ent * logp * inv_b;
        }
    }

    // d(loss)/d(action input of the critics).
    let (_, din1) = q1.backward_batch(&c1, &d1);
    let (_, din2) = q2.backward_batch(&c2, &d2);

    // Chain into the policy head: [d/d mean | d/d log_std].
    let mut head_grad = Mat::zeros(b, 2 * act_dim);
    for r in 0..b {
        for i in 0..act_dim {
            let du = din1.get(r, obs_dim + i) + din2.get(r, obs_dim + i);
            let u = u_all.get(r, i);
            let e = eps[r * act_dim + i];
            let std = std_all.get(r, i);
            let mut dz = du * (1.0 - u * u);
            let mut dls = 0.0;
            if alpha_ent != 0.0 {
                // logπ depends on z through the squash correction and on
                // log_std explicitly.
                dz += alpha_ent * inv_b * 2.0 * u;
                dls += alpha_ent * inv_b * (-1.0);
            }
            let dmean = dz;
            dls += dz * std * e;
            head_grad.set(r, i, dmean);
            head_grad.set(r, act_dim + i, dls * clamp_mask.get(r, i));
        }
    }
    let (pgrads, _) = policy.backward_batch(&policy_cache, &head_grad);
    Ok((loss, pgrads))
}
