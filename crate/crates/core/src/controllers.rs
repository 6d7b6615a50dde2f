//! Model-based sub-skill controllers.
//!
//! Three experts, deliberately simple and cheap to query:
//!
//! * in-grasp manipulation: a stability term driving measured contact forces
//!   toward the QP optimum, superposed with a re-orientation term that moves
//!   contact points along a small rigid-body pose change;
//! * contact switching: an open-loop detach/re-attach setpoint trajectory
//!   for one randomly chosen finger in contact;
//! * finger gaiting: the superposition of the two, with the switching
//!   finger's contact excluded from the in-grasp contact set.
//!
//! All actions are joint setpoint deltas, capped in infinity norm.

use serde::{Deserialize, Serialize};

use crate::kinematics::{
    contact_jacobian, fingertip_jacobian, grasp_map, Contact, GraspMatrices, HandModel,
    JointVector, KinematicsError,
};
use crate::linalg::{norm_inf, solve_spd, Mat};
use crate::qp::{solve_stability_qp_weighted, QpError};
use crate::rng::Rng;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ControllerError {
    #[error("no finger is currently in contact")]
    NoContactingFinger,
    #[error("contact switch phase {h} outside 1..={h_total}")]
    PhaseOutOfRange { h: usize, h_total: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// In-grasp manipulation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IgmConfig {
    /// Stability gain: setpoint meters per newton of force error.
    pub alpha: f64,
    /// Desired object pose change per step (dx, dy, dtheta).
    pub delta_o: [f64; 3],
    /// Damped least-squares regularizer.
    pub damping_lambda: f64,
    /// Per-step setpoint delta cap (infinity norm, radians).
    pub max_action_norm: f64,
    /// Torque scaling inside the stability QP objective.
    pub torque_weight: f64,
}

impl Default for IgmConfig {
    fn default() -> Self {
        IgmConfig {
            alpha: 0.002,
            delta_o: [0.0, 0.0, 0.02],
            damping_lambda: 1e-6,
            max_action_norm: 0.045,
            torque_weight: 1.0,
        }
    }
}

/// Contact-switching trajectory parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsConfig {
    /// Trajectory length in control steps.
    pub h_steps: usize,
    /// Sampled joint speed range, rad/s.
    pub vel_min: f64,
    pub vel_max: f64,
    /// Control period used to turn speeds into per-step deltas.
    pub dt: f64,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            h_steps: 40,
            vel_min: 0.1,
            vel_max: 0.4,
            dt: 0.02,
        }
    }
}

/// A controller action with its superposition components. `dq` always equals
/// `dq_stable + dq_rot + dq_switch` elementwise.
#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub dq: Vec<f64>,
    pub dq_stable: Vec<f64>,
    pub dq_rot: Vec<f64>,
    pub dq_switch: Vec<f64>,
}

impl ControllerOutput {
    fn zeros(dof: usize) -> Self {
        ControllerOutput {
            dq: vec![0.0; dof],
            dq_stable: vec![0.0; dof],
            dq_rot: vec![0.0; dof],
            dq_switch: vec![0.0; dof],
        }
    }

    /// Assemble from components, scaling everything uniformly so the summed
    /// action stays within the cap. The sum is recomputed after scaling so
    /// the superposition identity holds bit-exactly.
    fn assemble(
        mut stable: Vec<f64>,
        mut rot: Vec<f64>,
        mut switch: Vec<f64>,
        max_norm: f64,
    ) -> Self {
        let dof = stable.len();
        let mut dq: Vec<f64> = (0..dof).map(|i| stable[i] + rot[i] + switch[i]).collect();
        let peak = norm_inf(&dq);
        if peak > max_norm && peak > 0.0 {
            let scale = max_norm / peak;
            for v in stable.iter_mut().chain(rot.iter_mut()).chain(switch.iter_mut()) {
                *v *= scale;
            }
            for i in 0..dof {
                dq[i] = stable[i] + rot[i] + switch[i];
            }
        }
        ControllerOutput {
            dq,
            dq_stable: stable,
            dq_rot: rot,
            dq_switch: switch,
        }
    }
}

/// Contacts the controllers can reason about: within the contact-Jacobian
/// offset guard of their fingertip. Deep-penetration contacts (a finger
/// driven far into the object) are excluded from the controller's view;
/// the environment still reports them in observations.
pub fn reachable_contacts(
    model: &HandModel,
    q: &JointVector,
    contacts: &[Contact],
) -> Vec<Contact> {
    let tips = match crate::kinematics::fingertip_positions(model, q) {
        Ok(t) => t,
        Err(_) => return Vec::new(),
    };
    let limit = 2.0 * model.fingertip_radius;
    contacts
        .iter()
        .filter(|c| {
            let t = tips[c.finger];
            let d = ((c.position[0] - t[0]).powi(2) + (c.position[1] - t[1]).powi(2)).sqrt();
            d <= limit
        })
        .cloned()
        .collect()
}

/// Damped least-squares solve of J x = target:
/// minimize ‖Jx − target‖² + λ‖x‖² via the normal equations.
fn dls_solve(j: &Mat, target: &[f64], lambda: f64) -> Vec<f64> {
    let jtj = j.matmul_at(j);
    let rhs = j.matvec_t(target);
    match solve_spd(&jtj, &rhs, lambda) {
        Some(x) => x,
        // λ = 0 with a singular JᵀJ: nudge just enough to factor.
        None => solve_spd(&jtj, &rhs, lambda.max(1e-12)).unwrap_or_else(|| vec![0.0; j.cols]),
    }
}

/// Setpoint change driving measured contact forces toward the QP optimum:
/// target contact displacements proportional to the force error along the
/// pressing direction, resolved through the contact Jacobian by damped
/// least squares.
///
/// Stored normals point outward (object surface toward the finger), so the
/// pressing direction is −n: a force deficit moves the tip into the
/// surface, an excess backs it off.
pub fn stability_action(
    j_s: &Mat,
    normals: &[[f64; 2]],
    c_measured: &[f64],
    c_star: &[f64],
    alpha: f64,
    damping_lambda: f64,
) -> Vec<f64> {
    let k = normals.len();
    debug_assert_eq!(j_s.rows, 2 * k);
    debug_assert_eq!(c_measured.len(), k);
    debug_assert_eq!(c_star.len(), k);
    let mut dp = vec![0.0; 2 * k];
    for i in 0..k {
        let e = alpha * (c_star[i] - c_measured[i]);
        dp[2 * i] = -e * normals[i][0];
        dp[2 * i + 1] = -e * normals[i][1];
    }
    dls_solve(j_s, &dp, damping_lambda)
}

/// Setpoint change producing a small rigid-body object pose change: target
/// contact velocities Gᵀ·Δo, resolved through the contact Jacobian.
pub fn rotation_action(j_s: &Mat, g_s: &Mat, delta_o: [f64; 3], damping_lambda: f64) -> Vec<f64> {
    let target = g_s.matvec_t(&delta_o);
    dls_solve(j_s, &target, damping_lambda)
}

/// In-grasp manipulation: stability + re-orientation, capped.
///
/// With fewer than three contacts the stability QP is undefined; the
/// stability component is zero and re-orientation uses whatever contacts
/// exist (zero action with no contacts at all).
pub fn igm_action(
    contacts: &[Contact],
    matrices: &GraspMatrices,
    cfg: &IgmConfig,
) -> Result<ControllerOutput, ControllerError> {
    let dof = matrices.j.cols;
    let k = contacts.len();
    if k == 0 {
        return Ok(ControllerOutput::zeros(dof));
    }
    let normals: Vec<[f64; 2]> = contacts.iter().map(|c| c.normal).collect();
    let stable = if k >= 3 {
        let sol = solve_stability_qp_weighted(&matrices.g, &normals, cfg.torque_weight)?;
        let measured: Vec<f64> = contacts.iter().map(|c| c.force).collect();
        stability_action(
            &matrices.j,
            &normals,
            &measured,
            &sol.c_star,
            cfg.alpha,
            cfg.damping_lambda,
        )
    } else {
        vec![0.0; dof]
    };
    let rot = rotation_action(&matrices.j, &matrices.g, cfg.delta_o, cfg.damping_lambda);
    Ok(ControllerOutput::assemble(
        stable,
        rot,
        vec![0.0; dof],
        cfg.max_action_norm,
    ))
}

/// State of one contact-switching trajectory.
#[derive(Debug, Clone)]
pub struct CsPlan {
    pub finger: usize,
    pub h_total: usize,
    /// Signed joint speeds for the selected finger (held joint is 0).
    pub velocities: Vec<f64>,
    /// Per-step setpoint deltas for the selected finger's joints.
    pub profile: Vec<Vec<f64>>,
    span_start: usize,
    span_len: usize,
    dof: usize,
}

/// Start a contact switch: choose a finger in contact uniformly at random,
/// sample joint speeds, and build the detach/re-attach profile. The
/// distal-most joint is held fixed; the proximal joint's detach direction is
/// whichever sign moves the fingertip along the contact normal (away from
/// the object); any middle joints get a random sign.
pub fn cs_begin(
    model: &HandModel,
    q: &JointVector,
    contacts: &[Contact],
    rng: &mut Rng,
    cfg: &CsConfig,
) -> Result<CsPlan, ControllerError> {
    if contacts.is_empty() {
        return Err(ControllerError::NoContactingFinger);
    }
    let chosen = &contacts[rng.uniform_index(contacts.len())];
    let finger = chosen.finger;
    let span = model.joint_span(finger);
    let nj = span.len();

    // Detach sign for the proximal joint: move the tip outward along the
    // contact normal.
    let jac = fingertip_jacobian(model, q, finger)?;
    let radial = jac.get(0, 0) * chosen.normal[0] + jac.get(1, 0) * chosen.normal[1];
    let detach_sign = if radial >= 0.0 { 1.0 } else { -1.0 };

    let mut velocities = vec![0.0; nj];
    for (j, v) in velocities.iter_mut().enumerate().take(nj - 1) {
        let mag = rng.uniform_range(cfg.vel_min, cfg.vel_max);
        let sign = if j == 0 {
            detach_sign
        } else if rng.chance(0.5) {
            1.0
        } else {
            -1.0
        };
        *v = sign * mag;
    }

    let profile = build_profile(&velocities, cfg);
    Ok(CsPlan {
        finger,
        h_total: cfg.h_steps,
        velocities,
        profile,
        span_start: span.start,
        span_len: nj,
        dof: model.dof(),
    })
}

/// Trapezoidal-velocity detach phase followed by its mirrored negation, so
/// the finger returns to its pre-switch flexion by the final step.
fn build_profile(velocities: &[f64], cfg: &CsConfig) -> Vec<Vec<f64>> {
    let h = cfg.h_steps.max(2);
    let detach_len = h / 2;
    let attach_len = h - detach_len;
    let envelope = |t: usize, len: usize| -> f64 {
        let ramp = (len / 4).max(1) as f64;
        let up = (t as f64 + 1.0) / ramp;
        let down = (len - t) as f64 / ramp;
        up.min(down).min(1.0)
    };
    let mut profile = Vec::with_capacity(h);
    for t in 0..detach_len {
        let e = envelope(t, detach_len);
        profile.push(velocities.iter().map(|v| v * cfg.dt * e).collect::<Vec<f64>>());
    }
    if attach_len == detach_len {
        for t in (0..detach_len).rev() {
            let step: Vec<f64> = profile[t].iter().map(|d| -d).collect();
            profile.push(step);
        }
    } else {
        // Uneven split: scale the attach envelope so the sums cancel.
        let detach_sum: f64 = (0..detach_len).map(|t| envelope(t, detach_len)).sum();
        let attach_sum: f64 = (0..attach_len).map(|t| envelope(t, attach_len)).sum();
        let scale = if attach_sum > 0.0 { detach_sum / attach_sum } else { 0.0 };
        for t in 0..attach_len {
            let e = envelope(t, attach_len) * scale;
            profile.push(velocities.iter().map(|v| -v * cfg.dt * e).collect::<Vec<f64>>());
        }
    }
    profile
}

/// The switch action at phase `h` (1-based): the profile step embedded at
/// the selected finger's joints, zero everywhere else.
pub fn cs_action(plan: &CsPlan, h: usize) -> Result<ControllerOutput, ControllerError> {
    if h < 1 || h > plan.h_total {
        return Err(ControllerError::PhaseOutOfRange {
            h,
            h_total: plan.h_total,
        });
    }
    let mut switch = vec![0.0; plan.dof];
    let step = &plan.profile[h - 1];
    switch[plan.span_start..plan.span_start + plan.span_len].copy_from_slice(step);
    let dq = switch.clone();
    Ok(ControllerOutput {
        dq,
        dq_stable: vec![0.0; plan.dof],
        dq_rot: vec![0.0; plan.dof],
        dq_switch: switch,
    })
}

/// Finger gaiting: in-grasp manipulation over the contacts that are staying,
/// superposed with the contact-switching step for the finger that is moving.
pub fn fg_action(
    model: &HandModel,
    q: &JointVector,
    object_center: [f64; 2],
    contacts: &[Contact],
    plan: &CsPlan,
    h: usize,
    cfg: &IgmConfig,
) -> Result<ControllerOutput, ControllerError> {
    let held: Vec<Contact> = contacts
        .iter()
        .filter(|c| c.finger != plan.finger)
        .cloned()
        .collect();
    let dof = model.dof();
    let igm = if held.is_empty() {
        ControllerOutput::zeros(dof)
    } else {
        let j = contact_jacobian(model, q, &held)?;
        let g = grasp_map(object_center, &held)?;
        let matrices = GraspMatrices { g, j, k: held.len() };
        igm_action(&held, &matrices, cfg)?
    };
    let cs = cs_action(plan, h)?;
    Ok(ControllerOutput::assemble(
        igm.dq_stable,
        igm.dq_rot,
        cs.dq_switch,
        cfg.max_action_norm,
    ))
}
