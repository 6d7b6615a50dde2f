//! Behavior-policy composition and the training/evaluation harnesses.
//!
//! The behavior policy interleaves the learner with one sub-skill
//! controller: at every commitment boundary both propose an action, the
//! critic scores them, and a two-way softmax over the scores picks who
//! drives for the next H steps. After a hard-stop step the controllers are
//! never queried again. Optionally a value-weighted behavior-cloning loss
//! pulls the policy toward high-value controller actions while a linear
//! schedule decays its weight to zero.
//!
//! Baselines: plain off-policy RL, RL with the cloning loss, and
//! fixed-schedule gating (FGE) where the controller probability ignores the
//! critic entirely.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::controllers::{
    cs_action, cs_begin, fg_action, igm_action, reachable_contacts, CsPlan,
};
use crate::env::{noisy_observation, Env, EnvError, NoiseConfig, Observation};
use crate::kinematics::grasp_matrices;
use crate::nn::{adam_step, env_action_log_prob, split_policy_head, Mlp, MlpGrads};
use crate::rl::{
    ActionSource, ControllerKind, ReplayBuffer, RlError, RlState, Transition, ADAM_BETAS,
    ADAM_EPS,
};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error("non-finite input to selection probabilities")]
    NonFiniteSelection,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("training halted at step {step}: {reason}; diagnostic checkpoint at {diag}")]
    Halted {
        step: u64,
        reason: String,
        diag: String,
    },
}

/// Which training variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RL")]
    Rl,
    #[serde(rename = "RL_BC")]
    RlBc,
    #[serde(rename = "FGE")]
    Fge,
    #[serde(rename = "VGE")]
    Vge,
    #[serde(rename = "VGE_BC")]
    VgeBc,
}

impl Method {
    pub fn uses_controller(&self) -> bool {
        matches!(self, Method::Fge | Method::Vge | Method::VgeBc)
    }

    pub fn uses_bc(&self) -> bool {
        matches!(self, Method::RlBc | Method::VgeBc)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rl => "RL",
            Method::RlBc => "RL_BC",
            Method::Fge => "FGE",
            Method::Vge => "VGE",
            Method::VgeBc => "VGE_BC",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Schedules and scope of the guided-exploration training loop
/// (config section `vge`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VgeConfig {
    pub method: Method,
    /// Commitment length: the selected action source drives this many steps.
    #[serde(rename = "H")]
    pub h_commit: usize,
    /// Env step after which controllers are never queried.
    pub hard_stop_step: u64,
    /// Behavior-cloning weight: linear from beta0 at step 0 to 0 at
    /// beta_end_step.
    pub beta0: f64,
    pub beta_end_step: u64,
    /// Fixed-schedule gating: linear from fge_p0 at step 0 to 0 at
    /// fge_decay_end_step.
    pub fge_p0: f64,
    pub fge_decay_end_step: u64,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Success threshold = this factor × the IGM-alone baseline return.
    pub success_threshold_factor: f64,
    /// Episodes used to measure the IGM baseline.
    pub baseline_episodes: usize,
}

impl Default for VgeConfig {
    fn default() -> Self {
        VgeConfig {
            method: Method::Vge,
            h_commit: 40,
            hard_stop_step: 150_000,
            beta0: 0.5,
            beta_end_step: 150_000,
            fge_p0: 0.5,
            fge_decay_end_step: 150_000,
            total_steps: 300_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            success_threshold_factor: 3.0,
            baseline_episodes: 10,
        }
    }
}

/// Outcome of one commitment-boundary decision.
#[derive(Debug, Clone)]
pub struct BehaviorSelection {
    pub chosen: ActionSource,
    pub p_pi: f64,
    pub p_psi: f64,
    pub q_pi: f64,
    pub q_psi: f64,
    pub commit_remaining: usize,
}

/// Two-way softmax over critic values, computed with max subtraction so
/// huge magnitudes cannot overflow. Returns (p_pi, p_psi) with
/// p_pi + p_psi = 1 exactly.
pub fn selection_probabilities(q_pi: f64, q_psi: f64) -> Result<(f64, f64), TrainerError> {
    if !q_pi.is_finite() || !q_psi.is_finite() {
        return Err(TrainerError::NonFiniteSelection);
    }
    let m = q_pi.max(q_psi);
    let e_pi = (q_pi - m).exp();
    let e_psi = (q_psi - m).exp();
    let p_psi = e_psi / (e_pi + e_psi);
    Ok((1.0 - p_psi, p_psi))
}

/// Fixed-schedule controller probability: linear from p0 to zero.
pub fn fge_probability(step: u64, cfg: &VgeConfig) -> f64 {
    if step >= cfg.fge_decay_end_step {
        return 0.0;
    }
    cfg.fge_p0 * (1.0 - step as f64 / cfg.fge_decay_end_step as f64)
}

/// Linear decay of the behavior-cloning weight.
pub fn beta_schedule(step: u64, cfg: &VgeConfig) -> f64 {
    if step >= cfg.beta_end_step {
        return 0.0;
    }
    cfg.beta0 * (1.0 - step as f64 / cfg.beta_end_step as f64)
}

/// Value-weighted behavior-cloning loss over the controller-sourced subset
/// of a batch, with the gradient w.r.t. the policy parameters.
///
/// Weights are the batch-median-centered, floored critic values of the
/// stored (s, a), renormalized to mean one over the contributing terms, so
/// higher-value controller actions are cloned harder and below-median ones
/// not at all. Learner-sourced transitions never enter. The loss sign makes
/// a gradient-descent step increase the weighted log-likelihood.
pub fn bc_loss(
    state: &RlState,
    batch: &[&Transition],
    beta: f64,
) -> Result<(f64, Option<MlpGrads>), TrainerError> {
    if beta == 0.0 || batch.is_empty() {
        return Ok((0.0, None));
    }
    let picked: Vec<&Transition> = batch
        .iter()
        .filter(|t| t.source.is_controller())
        .copied()
        .collect();
    if picked.is_empty() {
        return Ok((0.0, None));
    }
    // Median-centered, floored, mean-normalized value weights.
    let mut qs = Vec::with_capacity(picked.len());
    for t in &picked {
        qs.push(state.q_min(&t.obs, &t.action)?);
    }
    let mut sorted = qs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let raw: Vec<f64> = qs.iter().map(|q| (q - median).max(0.0)).collect();
    let contributing = raw.iter().filter(|w| **w > 0.0).count();
    let raw_sum: f64 = raw.iter().sum();
    if contributing == 0 || raw_sum <= 0.0 {
        return Ok((0.0, None));
    }
    let norm = contributing as f64 / raw_sum;

    // Forward the policy on the contributing subset only.
    let rows: Vec<usize> = (0..picked.len()).filter(|&i| raw[i] > 0.0).collect();
    let mut obs = crate::linalg::Mat::zeros(rows.len(), state.obs_dim);
    for (r, &i) in rows.iter().enumerate() {
        obs.row_mut(r).copy_from_slice(&picked[i].obs);
    }
    let (head, cache) = state
        .policy
        .forward_batch(&obs)
        .map_err(RlError::from)?;
    let mut loss = 0.0;
    let inv_b = 1.0 / batch.len() as f64;
    let mut head_grad = crate::linalg::Mat::zeros(rows.len(), 2 * state.act_dim);
    for (r, &i) in rows.iter().enumerate() {
        let w = raw[i] * norm;
        let raw_head = head.row(r);
        let (mean, log_std) = split_policy_head(raw_head);
        let (lp, d_mean, d_log_std) =
            env_action_log_prob(&mean, &log_std, &picked[i].action, state.action_scale);
        loss -= beta * w * lp * inv_b;
        let coeff = -beta * w * inv_b;
        for a in 0..state.act_dim {
            head_grad.set(r, a, coeff * d_mean[a]);
            let raw_ls = raw_head[state.act_dim + a];
            let within = raw_ls > crate::nn::LOG_STD_MIN && raw_ls < crate::nn::LOG_STD_MAX;
            head_grad.set(
                r,
                state.act_dim + a,
                if within { coeff * d_log_std[a] } else { 0.0 },
            );
        }
    }
    let (grads, _) = state.policy.backward_batch(&cache, &head_grad);
    Ok((loss, Some(grads)))
}

/// Loss value alone (used by tests and the acceptance suite).
pub fn bc_loss_value(
    state: &RlState,
    batch: &[&Transition],
    beta: f64,
) -> Result<f64, TrainerError> {
    Ok(bc_loss(state, batch, beta)?.0)
}

/// Runtime state of the active controller within one run.
pub struct ControllerRuntime {
    pub kind: ControllerKind,
    pub igm_cfg: crate::controllers::IgmConfig,
    pub cs_cfg: crate::controllers::CsConfig,
    plan: Option<CsPlan>,
    phase: usize,
}

impl ControllerRuntime {
    pub fn new(
        kind: ControllerKind,
        igm_cfg: crate::controllers::IgmConfig,
        cs_cfg: crate::controllers::CsConfig,
    ) -> Self {
        ControllerRuntime {
            kind,
            igm_cfg,
            cs_cfg,
            plan: None,
            phase: 0,
        }
    }

    /// Start a fresh switch trajectory (CS/FG only). Returns false when no
    /// finger is in contact, in which case the caller falls back to the
    /// learner.
    pub fn begin(&mut self, env: &Env, rng: &mut Rng) -> bool {
        self.plan = None;
        self.phase = 0;
        if self.kind == ControllerKind::Igm {
            return true;
        }
        let contacts = reachable_contacts(env.model(), env.joints(), env.contacts());
        match cs_begin(env.model(), env.joints(), &contacts, rng, &self.cs_cfg) {
            Ok(plan) => {
                self.plan = Some(plan);
                true
            }
            Err(_) => false,
        }
    }

    /// The controller's action for the current env state, advancing the
    /// switch phase. Falls back to zero action on recoverable failures
    /// (QP non-convergence, exhausted plans with no contact to restart on).
    pub fn action(&mut self, env: &Env, rng: &mut Rng) -> Vec<f64> {
        let dof = env.model().dof();
        let contacts = reachable_contacts(env.model(), env.joints(), env.contacts());
        let center = [env.object().pose.x, env.object().pose.y];
        match self.kind {
            ControllerKind::Igm => {
                let matrices =
                    match grasp_matrices(env.model(), env.joints(), center, &contacts) {
                        Ok(m) => m,
                        Err(_) => return vec![0.0; dof],
                    };
                igm_action(&contacts, &matrices, &self.igm_cfg)
                    .map(|o| o.dq)
                    .unwrap_or_else(|_| vec![0.0; dof])
            }
            ControllerKind::Cs | ControllerKind::Fg => {
                if self.plan.is_none() || self.phase >= self.cs_cfg.h_steps {
                    if !self.begin(env, rng) {
                        return vec![0.0; dof];
                    }
                }
                self.phase += 1;
                let plan = self.plan.as_ref().expect("plan just ensured");
                if self.kind == ControllerKind::Cs {
                    cs_action(plan, self.phase)
                        .map(|o| o.dq)
                        .unwrap_or_else(|_| vec![0.0; dof])
                } else {
                    fg_action(
                        env.model(),
                        env.joints(),
                        center,
                        &contacts,
                        plan,
                        self.phase,
                        &self.igm_cfg,
                    )
                    .map(|o| o.dq)
                    .unwrap_or_else(|_| vec![0.0; dof])
                }
            }
        }
    }
}

/// One commitment-boundary decision (Alg.-style gating).
///
/// RL-family methods always pick the learner. After the hard stop the
/// controller is not even queried. Otherwise both candidates act, the
/// critic scores them, and either the value softmax (VGE) or the fixed
/// schedule (FGE) sets the controller probability.
pub fn select_behavior(
    state: &RlState,
    env: &Env,
    runtime: &mut ControllerRuntime,
    obs_flat: &[f64],
    step: u64,
    cfg: &VgeConfig,
    rng: &mut Rng,
) -> Result<BehaviorSelection, TrainerError> {
    let learner_only = |commit: usize| BehaviorSelection {
        chosen: ActionSource::Learner,
        p_pi: 1.0,
        p_psi: 0.0,
        q_pi: 0.0,
        q_psi: 0.0,
        commit_remaining: commit,
    };
    if !cfg.method.uses_controller() || step >= cfg.hard_stop_step {
        return Ok(learner_only(cfg.h_commit));
    }
    // Candidate actions. The controller side needs a live plan.
    let a_pi = state.sample_action(obs_flat, rng)?;
    if !runtime.begin(env, rng) {
        return Ok(learner_only(cfg.h_commit));
    }
    let mut peek = ControllerRuntime {
        kind: runtime.kind,
        igm_cfg: runtime.igm_cfg.clone(),
        cs_cfg: runtime.cs_cfg.clone(),
        plan: runtime.plan.clone(),
        phase: runtime.phase,
    };
    let a_psi = peek.action(env, rng);

    let (p_pi, p_psi, q_pi, q_psi) = match cfg.method {
        Method::Fge => {
            let p_psi = fge_probability(step, cfg).clamp(0.0, 1.0);
            (1.0 - p_psi, p_psi, 0.0, 0.0)
        }
        _ => {
            let q_pi = state.q_min(obs_flat, &a_pi.action)?;
            let q_psi = state.q_min(obs_flat, &a_psi)?;
            let (p_pi, p_psi) = selection_probabilities(q_pi, q_psi)?;
            (p_pi, p_psi, q_pi, q_psi)
        }
    };
    let chosen = if rng.chance(p_psi) {
        ActionSource::Controller(runtime.kind)
    } else {
        ActionSource::Learner
    };
    Ok(BehaviorSelection {
        chosen,
        p_pi,
        p_psi,
        q_pi,
        q_psi,
        commit_remaining: cfg.h_commit,
    })
}

/// Per-run artifacts summary.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub method: Method,
    pub controller: ControllerKind,
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub final_eval_mean: f64,
    pub final_eval_std: f64,
    pub r_igm: f64,
    pub threshold: f64,
    pub success: bool,
    /// First eval step at or beyond the threshold, if any.
    pub steps_to_threshold: Option<u64>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("method={}\n", self.method));
        s.push_str(&format!("controller={}\n", self.controller));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("steps={}\n", self.steps));
        s.push_str(&format!("episodes={}\n", self.episodes));
        s.push_str(&format!("final_eval_mean={}\n", self.final_eval_mean));
        s.push_str(&format!("final_eval_std={}\n", self.final_eval_std));
        s.push_str(&format!("r_igm={}\n", self.r_igm));
        s.push_str(&format!("threshold={}\n", self.threshold));
        s.push_str(&format!("success={}\n", self.success));
        s.push_str(&format!(
            "steps_to_threshold={}\n",
            self.steps_to_threshold
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        ));
        s.push_str(&format!("wall_seconds={:.1}\n", self.wall_seconds));
        s
    }

    pub fn parse(text: &str) -> Option<RunSummary> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let method = match map.get("method")?.as_str() {
            "RL" => Method::Rl,
            "RL_BC" => Method::RlBc,
            "FGE" => Method::Fge,
            "VGE" => Method::Vge,
            "VGE_BC" => Method::VgeBc,
            _ => return None,
        };
        let controller = match map.get("controller")?.as_str() {
            "IGM" => ControllerKind::Igm,
            "CS" => ControllerKind::Cs,
            "FG" => ControllerKind::Fg,
            _ => return None,
        };
        Some(RunSummary {
            method,
            controller,
            seed: map.get("seed")?.parse().ok()?,
            steps: map.get("steps")?.parse().ok()?,
            episodes: map.get("episodes")?.parse().ok()?,
            final_eval_mean: map.get("final_eval_mean")?.parse().ok()?,
            final_eval_std: map.get("final_eval_std")?.parse().ok()?,
            r_igm: map.get("r_igm")?.parse().ok()?,
            threshold: map.get("threshold")?.parse().ok()?,
            success: map.get("success")?.parse().ok()?,
            steps_to_threshold: match map.get("steps_to_threshold")?.as_str() {
                "none" => None,
                v => Some(v.parse().ok()?),
            },
            wall_seconds: map.get("wall_seconds")?.parse().ok()?,
        })
    }
}

/// Mean/stddev episodic return of the deterministic (mean-action) policy.
pub fn evaluate(
    policy: &Mlp,
    action_scale: f64,
    cfg: &RunConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<(f64, f64), TrainerError> {
    evaluate_perturbed(policy, action_scale, cfg, n_episodes, seed, [0.0; 3], &NoiseConfig::default())
}

/// Evaluation under an external wrench and observation noise. With zero
/// wrench and zero noise this is bit-identical to `evaluate`.
pub fn evaluate_perturbed(
    policy: &Mlp,
    action_scale: f64,
    cfg: &RunConfig,
    n_episodes: usize,
    seed: u64,
    wrench: [f64; 3],
    noise: &NoiseConfig,
) -> Result<(f64, f64), TrainerError> {
    let mut env = Env::new(cfg.hand.clone(), cfg.env.clone(), derive_seed(seed, 0xE7A1))?;
    env.apply_perturbation(wrench);
    let mut noise_rng = Rng::new(derive_seed(seed, 0x9015E));
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut obs = env.reset()?;
        let mut ep_return = 0.0;
        loop {
            let seen = noisy_observation(&obs, noise, &mut noise_rng);
            let action = crate::nn::mean_action(policy, &seen.flatten(), action_scale)
                .map_err(RlError::from)?;
            let result = env.step(&action)?;
            ep_return += result.reward;
            obs = result.observation;
            if result.done {
                break;
            }
        }
        returns.push(ep_return);
    }
    Ok(mean_std(&returns))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Report from running one controller open-loop as the policy.
#[derive(Debug, Clone)]
pub struct RolloutReport {
    pub kind: ControllerKind,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    /// Fraction of episodes in which a joint-limit clamp fired.
    pub limit_saturation_fraction: f64,
    pub mean_steps: f64,
}

/// Trajectory row for the CSV dump.
#[derive(Debug, Clone)]
pub struct TrajRow {
    pub step: usize,
    pub q: Vec<f64>,
    pub q_target: Vec<f64>,
    pub obj: [f64; 3],
    pub n_contacts: usize,
    pub reward: f64,
    pub source: &'static str,
}

pub fn write_trajectory_csv(path: &Path, dof: usize, rows: &[TrajRow]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("step");
    for i in 0..dof {
        header.push_str(&format!(",q{i}"));
    }
    for i in 0..dof {
        header.push_str(&format!(",qt{i}"));
    }
    header.push_str(",obj_x,obj_y,obj_theta,n_contacts,reward,action_source");
    writeln!(f, "{header}")?;
    for r in rows {
        let mut line = format!("{}", r.step);
        for v in &r.q {
            line.push_str(&format!(",{v}"));
        }
        for v in &r.q_target {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(
            ",{},{},{},{},{},{}",
            r.obj[0], r.obj[1], r.obj[2], r.n_contacts, r.reward, r.source
        ));
        writeln!(f, "{line}")?;
    }
    Ok(())
}

/// Run a controller open-loop for `episodes` episodes; optionally dump the
/// first episode's trajectory.
pub fn controller_rollout(
    cfg: &RunConfig,
    kind: ControllerKind,
    episodes: usize,
    seed: u64,
    trajectory_out: Option<&Path>,
) -> Result<RolloutReport, TrainerError> {
    let mut env = Env::new(cfg.hand.clone(), cfg.env.clone(), derive_seed(seed, 0xC0))?;
    let mut rng = Rng::new(derive_seed(seed, 0xC1));
    let igm_cfg = cfg.controller.igm();
    let cs_cfg = cfg.controller.cs(cfg.env.dt);
    let mut returns = Vec::new();
    let mut steps = Vec::new();
    let mut saturated = 0usize;
    let mut rows: Vec<TrajRow> = Vec::new();
    for ep in 0..episodes {
        env.reset()?;
        let mut runtime = ControllerRuntime::new(kind, igm_cfg.clone(), cs_cfg.clone());
        let mut ep_return = 0.0;
        let mut t = 0usize;
        loop {
            let action = runtime.action(&env, &mut rng);
            let result = env.step(&action)?;
            ep_return += result.reward;
            if ep == 0 && trajectory_out.is_some() {
                rows.push(TrajRow {
                    step: t,
                    q: env.joints().0.clone(),
                    q_target: env.setpoints().0.clone(),
                    obj: [
                        env.object().pose.x,
                        env.object().pose.y,
                        env.object().pose.theta,
                    ],
                    n_contacts: result.info.contact_count,
                    reward: result.reward,
                    source: ActionSource::Controller(kind).label(),
                });
            }
            t += 1;
            if result.done {
                break;
            }
        }
        if env.limits_hit_ever() {
            saturated += 1;
        }
        returns.push(ep_return);
        steps.push(t as f64);
    }
    if let Some(path) = trajectory_out {
        write_trajectory_csv(path, cfg.hand.dof(), &rows)?;
    }
    let (mean_return, std_return) = mean_std(&returns);
    let (mean_steps, _) = mean_std(&steps);
    Ok(RolloutReport {
        kind,
        episodes,
        mean_return,
        std_return,
        limit_saturation_fraction: saturated as f64 / episodes.max(1) as f64,
        mean_steps,
    })
}

/// The IGM-alone baseline return used by the success-threshold rule.
pub fn igm_baseline(cfg: &RunConfig) -> Result<f64, TrainerError> {
    let report = controller_rollout(
        cfg,
        ControllerKind::Igm,
        cfg.vge.baseline_episodes,
        derive_seed(cfg.seed, 0xBA5E),
        None,
    )?;
    Ok(report.mean_return)
}

struct MetricsWindow {
    p_psi_sum: f64,
    p_psi_count: u64,
    controller_steps: u64,
    env_steps: u64,
    critic_loss_sum: f64,
    actor_loss_sum: f64,
    bc_loss_sum: f64,
    update_count: u64,
    bc_update_count: u64,
}

impl MetricsWindow {
    fn new() -> Self {
        MetricsWindow {
            p_psi_sum: 0.0,
            p_psi_count: 0,
            controller_steps: 0,
            env_steps: 0,
            critic_loss_sum: 0.0,
            actor_loss_sum: 0.0,
            bc_loss_sum: 0.0,
            update_count: 0,
            bc_update_count: 0,
        }
    }
}

/// Artifacts of a finished run kept in memory for audits.
pub struct TrainArtifacts {
    pub buffer: ReplayBuffer,
    pub state: RlState,
}

/// Full training loop. Writes `config.snapshot`, `metrics.csv`,
/// checkpoints, and `summary.txt` under `<out_dir>/<run_name>/`.
pub fn train(cfg: &RunConfig) -> Result<RunSummary, TrainerError> {
    train_full(cfg).map(|(summary, _)| summary)
}

/// As `train`, additionally returning the replay buffer and learner state
/// for in-process auditing.
pub fn train_full(cfg: &RunConfig) -> Result<(RunSummary, TrainArtifacts), TrainerError> {
    let start = Instant::now();
    let out_dir = PathBuf::from(&cfg.out_dir).join(&cfg.run_name);
    std::fs::create_dir_all(out_dir.join("ckpt"))?;
    std::fs::write(out_dir.join("config.snapshot"), cfg.to_toml())?;

    let r_igm = igm_baseline(cfg)?;
    let threshold = cfg.vge.success_threshold_factor * r_igm;

    let mut env = Env::new(
        cfg.hand.clone(),
        cfg.env.clone(),
        derive_seed(cfg.seed, 0xE0),
    )?;
    let obs_dim = Observation::flat_len(&cfg.hand);
    let act_dim = cfg.hand.dof();
    let mut net_rng = Rng::new(derive_seed(cfg.seed, 0xE1));
    let mut rollout_rng = Rng::new(derive_seed(cfg.seed, 0xE2));
    let mut buffer_rng = Rng::new(derive_seed(cfg.seed, 0xE3));
    let mut state = RlState::new(
        obs_dim,
        act_dim,
        cfg.env.action_bound,
        cfg.rl.clone(),
        &mut net_rng,
    );
    let mut buffer = ReplayBuffer::new(cfg.rl.buffer_capacity);
    let mut runtime = ControllerRuntime::new(
        cfg.controller.kind,
        cfg.controller.igm(),
        cfg.controller.cs(cfg.env.dt),
    );

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(
        metrics,
        "step,eval_return_mean,eval_return_std,p_psi_mean,controller_fraction,critic_loss,actor_loss,bc_loss,beta,episodes_done"
    )?;

    let mut obs = env.reset()?.flatten();
    let mut episodes: u64 = 0;
    let mut commit_remaining: usize = 0;
    let mut source = ActionSource::Learner;
    let mut window = MetricsWindow::new();
    let mut steps_to_threshold: Option<u64> = None;
    let mut last_eval = (0.0, 0.0);

    let halt = |step: u64,
                reason: String,
                state: &RlState,
                out_dir: &Path|
     -> TrainerError {
        let diag = out_dir.join("ckpt").join("diagnostic.ckpt");
        let _ = save_checkpoint(&diag, state, step);
        TrainerError::Halted {
            step,
            reason,
            diag: diag.display().to_string(),
        }
    };

    for step in 0..cfg.vge.total_steps {
        let warmup = (step as usize) < cfg.rl.warmup_steps;

        // Behavior policy.
        let action: Vec<f64>;
        if warmup {
            // Uniform random exploration before any updates.
            action = (0..act_dim)
                .map(|_| rollout_rng.uniform_range(-cfg.env.action_bound, cfg.env.action_bound))
                .collect();
            source = ActionSource::Learner;
            commit_remaining = 0;
        } else {
            if commit_remaining == 0 {
                let selection = select_behavior(
                    &state,
                    &env,
                    &mut runtime,
                    &obs,
                    step,
                    &cfg.vge,
                    &mut rollout_rng,
                )?;
                source = selection.chosen;
                commit_remaining = selection.commit_remaining;
                window.p_psi_sum += selection.p_psi;
                window.p_psi_count += 1;
            }
            // Hard stop can cut into a running controller commitment.
            if step >= cfg.vge.hard_stop_step && source.is_controller() {
                source = ActionSource::Learner;
            }
            action = match source {
                ActionSource::Learner => state.sample_action(&obs, &mut rollout_rng)?.action,
                ActionSource::Controller(_) => runtime.action(&env, &mut rollout_rng),
            };
            commit_remaining -= 1;
        }

        let result = match env.step(&action) {
            Ok(r) => r,
            Err(e) => return Err(halt(step, e.to_string(), &state, &out_dir)),
        };
        let next_obs = result.observation.flatten();
        if source.is_controller() {
            window.controller_steps += 1;
        }
        window.env_steps += 1;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: result.reward,
            next_obs: next_obs.clone(),
            done: result.done,
            source,
        })?;
        obs = next_obs;
        if result.done {
            episodes += 1;
            obs = env.reset()?.flatten();
            commit_remaining = 0;
        }

        // Gradient step(s).
        let t1 = step + 1;
        if !warmup && t1 % cfg.rl.update_interval as u64 == 0 {
            let idx = buffer.sample_indices(cfg.rl.batch_size, &mut buffer_rng)?;
            let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
            let (c1, c2) = match state.critic_update(&batch, &mut buffer_rng) {
                Ok(v) => v,
                Err(e) => return Err(halt(step, e.to_string(), &state, &out_dir)),
            };
            let a_loss = match state.actor_update(&batch, &mut buffer_rng) {
                Ok(v) => v,
                Err(e) => return Err(halt(step, e.to_string(), &state, &out_dir)),
            };
            state.soft_update(state.cfg.tau);
            window.critic_loss_sum += 0.5 * (c1 + c2);
            window.actor_loss_sum += a_loss;
            window.update_count += 1;

            if cfg.vge.method.uses_bc() {
                let beta = beta_schedule(step, &cfg.vge);
                let (bcl, grads) = bc_loss(&state, &batch, beta)?;
                if let Some(grads) = grads {
                    if let Err(e) = adam_step(
                        &mut state.policy,
                        &grads,
                        &mut state.opt_policy,
                        state.cfg.learning_rate,
                        ADAM_BETAS,
                        ADAM_EPS,
                    ) {
                        return Err(halt(step, e.to_string(), &state, &out_dir));
                    }
                }
                window.bc_loss_sum += bcl;
                window.bc_update_count += 1;
            }
        }

        // Periodic evaluation + metrics row + checkpoint.
        if t1 % cfg.vge.eval_interval == 0 {
            let eval_seed = derive_seed(cfg.seed, 0xEAA0 + t1);
            let (mean, std) = evaluate(
                &state.policy,
                state.action_scale,
                cfg,
                cfg.vge.eval_episodes,
                eval_seed,
            )?;
            last_eval = (mean, std);
            if steps_to_threshold.is_none() && mean >= threshold {
                steps_to_threshold = Some(t1);
            }
            let p_psi_mean = if window.p_psi_count > 0 {
                window.p_psi_sum / window.p_psi_count as f64
            } else {
                0.0
            };
            let controller_fraction = if window.env_steps > 0 {
                window.controller_steps as f64 / window.env_steps as f64
            } else {
                0.0
            };
            let critic_loss = if window.update_count > 0 {
                window.critic_loss_sum / window.update_count as f64
            } else {
                0.0
            };
            let actor_loss = if window.update_count > 0 {
                window.actor_loss_sum / window.update_count as f64
            } else {
                0.0
            };
            let bc = if window.bc_update_count > 0 {
                window.bc_loss_sum / window.bc_update_count as f64
            } else {
                0.0
            };
            writeln!(
                metrics,
                "{},{},{},{},{},{},{},{},{},{}",
                t1,
                mean,
                std,
                p_psi_mean,
                controller_fraction,
                critic_loss,
                actor_loss,
                bc,
                beta_schedule(step, &cfg.vge),
                episodes
            )?;
            metrics.flush()?;
            window = MetricsWindow::new();
            save_checkpoint(&out_dir.join("ckpt").join("latest.ckpt"), &state, t1)?;
        }
    }

    save_checkpoint(
        &out_dir.join("ckpt").join("final.ckpt"),
        &state,
        cfg.vge.total_steps,
    )?;

    let summary = RunSummary {
        method: cfg.vge.method,
        controller: cfg.controller.kind,
        seed: cfg.seed,
        steps: cfg.vge.total_steps,
        episodes,
        final_eval_mean: last_eval.0,
        final_eval_std: last_eval.1,
        r_igm,
        threshold,
        success: last_eval.0 >= threshold,
        steps_to_threshold,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    std::fs::write(out_dir.join("summary.txt"), summary.to_text())?;
    Ok((summary, TrainArtifacts { buffer, state }))
}

/// Audit the replay buffer: insertion indices at or beyond the hard stop
/// must never carry a controller tag.
pub fn audit_hard_stop(buffer: &ReplayBuffer, hard_stop_step: u64) -> usize {
    buffer
        .iter_with_ids()
        .filter(|(id, t)| *id >= hard_stop_step && t.source.is_controller())
        .count()
}

/// Per-seed sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub seed: u64,
    pub success: bool,
    pub final_return: f64,
    pub steps_to_threshold: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub success_rate: f64,
}

/// Train one run per seed (resuming over completed runs), up to `jobs`
/// concurrently. Each run is single-threaded and owns its rngs, so
/// concurrency cannot perturb results.
pub fn seed_sweep(base: &RunConfig, seeds: &[u64], jobs: usize) -> Result<SweepReport, TrainerError> {
    let jobs = jobs.max(1);
    let mut rows: Vec<Option<SweepRow>> = vec![None; seeds.len()];
    let mut pending: Vec<(usize, RunConfig)> = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.run_name = format!("{}-s{}", base.run_name, seed);
        let summary_path = PathBuf::from(&cfg.out_dir)
            .join(&cfg.run_name)
            .join("summary.txt");
        if let Ok(text) = std::fs::read_to_string(&summary_path) {
            if let Some(s) = RunSummary::parse(&text) {
                rows[i] = Some(SweepRow {
                    seed,
                    success: s.success,
                    final_return: s.final_eval_mean,
                    steps_to_threshold: s.steps_to_threshold,
                });
                continue;
            }
        }
        pending.push((i, cfg));
    }

    let results: Vec<(usize, Result<RunSummary, String>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        let mut out = Vec::new();
        let mut iter = pending.into_iter();
        loop {
            while handles.len() < jobs {
                match iter.next() {
                    Some((i, cfg)) => handles.push((
                        i,
                        scope.spawn(move || train(&cfg).map_err(|e| e.to_string())),
                    )),
                    None => break,
                }
            }
            if handles.is_empty() {
                break;
            }
            let (i, handle) = handles.remove(0);
            out.push((i, handle.join().expect("run thread panicked")));
        }
        out
    });
    for (i, result) in results {
        rows[i] = Some(match result {
            Ok(s) => SweepRow {
                seed: seeds[i],
                success: s.success,
                final_return: s.final_eval_mean,
                steps_to_threshold: s.steps_to_threshold,
            },
            // A failed run counts as unsuccessful, not fatal.
            Err(_) => SweepRow {
                seed: seeds[i],
                success: false,
                final_return: f64::NEG_INFINITY,
                steps_to_threshold: None,
            },
        });
    }
    let rows: Vec<SweepRow> = rows.into_iter().map(|r| r.expect("row filled")).collect();
    let success_rate =
        rows.iter().filter(|r| r.success).count() as f64 / rows.len().max(1) as f64;
    Ok(SweepReport { rows, success_rate })
}

pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "seed,success,final_return,steps_to_threshold")?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{}",
            r.seed,
            r.success,
            r.final_return,
            r.steps_to_threshold
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        )?;
    }
    Ok(())
}

/// One row of the robustness sweep.
#[derive(Debug, Clone)]
pub struct PerturbRow {
    pub axis: &'static str,
    pub level: f64,
    pub return_mean: f64,
    pub return_std: f64,
}

pub const PERTURB_FORCE_LEVELS: [f64; 5] = [0.0, 0.2, 0.5, 1.0, 2.0];
pub const PERTURB_Q_NOISE_LEVELS: [f64; 5] = [0.0, 0.02, 0.05, 0.1, 0.2];
pub const PERTURB_POS_NOISE_LEVELS: [f64; 4] = [0.0, 0.001, 0.003, 0.01];
pub const PERTURB_NORMAL_NOISE_LEVELS: [f64; 4] = [0.0, 0.1, 0.3, 0.5];

/// Evaluate a policy along four perturbation axes (external force plus three
/// observation-noise groups), one axis at a time. Level zero reproduces the
/// unperturbed evaluation exactly.
pub fn perturbation_sweep(
    policy: &Mlp,
    action_scale: f64,
    cfg: &RunConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<PerturbRow>, TrainerError> {
    let mut rows = Vec::new();
    for &level in &PERTURB_FORCE_LEVELS {
        let (m, s) = evaluate_perturbed(
            policy,
            action_scale,
            cfg,
            n_episodes,
            seed,
            [0.0, -level, 0.0],
            &NoiseConfig::default(),
        )?;
        rows.push(PerturbRow {
            axis: "force",
            level,
            return_mean: m,
            return_std: s,
        });
    }
    for &level in &PERTURB_Q_NOISE_LEVELS {
        let noise = NoiseConfig {
            q_std: level,
            ..NoiseConfig::default()
        };
        let (m, s) =
            evaluate_perturbed(policy, action_scale, cfg, n_episodes, seed, [0.0; 3], &noise)?;
        rows.push(PerturbRow {
            axis: "q_noise",
            level,
            return_mean: m,
            return_std: s,
        });
    }
    for &level in &PERTURB_POS_NOISE_LEVELS {
        let noise = NoiseConfig {
            contact_pos_std: level,
            ..NoiseConfig::default()
        };
        let (m, s) =
            evaluate_perturbed(policy, action_scale, cfg, n_episodes, seed, [0.0; 3], &noise)?;
        rows.push(PerturbRow {
            axis: "contact_pos_noise",
            level,
            return_mean: m,
            return_std: s,
        });
    }
    for &level in &PERTURB_NORMAL_NOISE_LEVELS {
        let noise = NoiseConfig {
            normal_std: level,
            ..NoiseConfig::default()
        };
        let (m, s) =
            evaluate_perturbed(policy, action_scale, cfg, n_episodes, seed, [0.0; 3], &noise)?;
        rows.push(PerturbRow {
            axis: "normal_noise",
            level,
            return_mean: m,
            return_std: s,
        });
    }
    Ok(rows)
}

pub fn write_perturbation_csv(path: &Path, rows: &[PerturbRow]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "axis,level,return_mean,return_std")?;
    for r in rows {
        writeln!(f, "{},{},{},{}", r.axis, r.level, r.return_mean, r.return_std)?;
    }
    Ok(())
}
