//! Quasi-static planar in-hand manipulation environment.
//!
//! Fingers are position-controlled setpoint servos; the object settles each
//! step to a minimum of the contact penalty energy (plus any external
//! perturbation wrench) found by a damped Gauss-Newton iteration. Reward is
//! the object's wrap-aware rotation per step, gated on a minimum contact
//! count.
//!
//! Contact model: a normal penalty spring gives the force magnitudes the
//! controllers and observations use, and a tangential anchor spring makes
//! loaded contacts stick (no sliding kinematics, no friction cone). The
//! anchor is the object-frame material point where the contact formed and
//! is released the moment the contact unloads. Sticking is what lets
//! fingertips drag the object around the rotation axis, and it is also what
//! makes regrasping necessary: a finger that stays planted winds up against
//! its joint limits and simply stops contributing rotation.

use serde::{Deserialize, Serialize};

use crate::kinematics::{
    clamp_to_limits, fingertip_positions, Contact, FingerModel, HandModel, JointVector, Pose2,
};
use crate::rng::Rng;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("action has {got} entries, hand has {expected} dof")]
    ActionDimension { got: usize, expected: usize },
    #[error("action contains a non-finite value")]
    NonFiniteAction,
    #[error("could not synthesize a grasp with {required} contacts after {attempts} attempts")]
    GraspSynthesis { required: usize, attempts: usize },
    #[error("invalid environment config: {0}")]
    BadConfig(String),
}

/// Object geometry. Regular polygons are the interesting case: normal-only
/// contacts on flat faces produce torque, so the object can be rotated by
/// fingertip pressure alone. A disk under this contact model can translate
/// but never rotate, which makes it useful for tests and degenerate checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectShape {
    Disk { radius: f64 },
    Polygon { sides: usize, circumradius: f64 },
}

impl ObjectShape {
    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            ObjectShape::Disk { radius } if *radius <= 0.0 => {
                Err(EnvError::BadConfig("disk radius must be > 0".into()))
            }
            ObjectShape::Polygon { sides, circumradius } => {
                if *sides < 3 || *sides > 16 {
                    Err(EnvError::BadConfig("polygon needs 3..=16 sides".into()))
                } else if *circumradius <= 0.0 {
                    Err(EnvError::BadConfig("circumradius must be > 0".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Largest center-to-surface distance, used for drop checks and reset.
    pub fn outer_radius(&self) -> f64 {
        match self {
            ObjectShape::Disk { radius } => *radius,
            ObjectShape::Polygon { circumradius, .. } => *circumradius,
        }
    }
}

/// Object pose plus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub pose: Pose2,
    pub shape: ObjectShape,
}

/// Closest-surface query result, with the signed-distance derivative with
/// respect to the object pose (x, y, theta) needed by the settle solver.
#[derive(Debug, Clone)]
pub struct SurfaceQuery {
    /// Signed distance from the query point to the object surface
    /// (negative inside).
    pub dist: f64,
    pub closest: [f64; 2],
    /// Outward unit normal at the closest surface point.
    pub normal: [f64; 2],
    /// d(dist)/d(pose).
    pub d_dist: [f64; 3],
}

fn rot(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Signed distance and derivatives from `point` to the surface of `shape`
/// at `pose`.
pub fn surface_query(shape: &ObjectShape, pose: &Pose2, point: [f64; 2]) -> SurfaceQuery {
    let c = [pose.x, pose.y];
    match shape {
        ObjectShape::Disk { radius } => {
            let v = [point[0] - c[0], point[1] - c[1]];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let u = if n > 1e-12 { [v[0] / n, v[1] / n] } else { [1.0, 0.0] };
            SurfaceQuery {
                dist: n - radius,
                closest: [c[0] + radius * u[0], c[1] + radius * u[1]],
                normal: u,
                d_dist: [-u[0], -u[1], 0.0],
            }
        }
        ObjectShape::Polygon { sides, circumradius } => {
            polygon_query(*sides, *circumradius, pose, point)
        }
    }
}

fn polygon_query(sides: usize, r: f64, pose: &Pose2, point: [f64; 2]) -> SurfaceQuery {
    let n = sides;
    let c = [pose.x, pose.y];
    let rel = [point[0] - c[0], point[1] - c[1]];
    let (s, co) = pose.theta.sin_cos();
    // body frame: u = R(-theta) * rel
    let ub = [co * rel[0] + s * rel[1], -s * rel[0] + co * rel[1]];
    let half = std::f64::consts::PI / n as f64;
    let apothem = r * half.cos();

    // Vertices at angles 2*pi*i/n; face i sits between v_i and v_{i+1} with
    // body normal at angle 2*pi*i/n + half. Built by incremental rotation so
    // the whole ring costs three trig calls (this sits inside the settle
    // iteration, the hottest loop in the environment).
    let (step_s, step_c) = (std::f64::consts::TAU / n as f64).sin_cos();
    let (half_s, half_c) = half.sin_cos();
    let mut verts = [[0.0f64; 2]; 16];
    let mut norms = [[0.0f64; 2]; 16];
    debug_assert!(n <= 16, "polygon query supports up to 16 sides");
    let mut dir = [1.0f64, 0.0f64];
    for i in 0..n {
        verts[i] = [r * dir[0], r * dir[1]];
        norms[i] = [
            dir[0] * half_c - dir[1] * half_s,
            dir[0] * half_s + dir[1] * half_c,
        ];
        dir = [
            dir[0] * step_c - dir[1] * step_s,
            dir[0] * step_s + dir[1] * step_c,
        ];
    }
    let vertex = |i: usize| -> [f64; 2] { verts[i % n] };
    let face_normal = |i: usize| -> [f64; 2] { norms[i % n] };

    let mut max_s = f64::NEG_INFINITY;
    let mut max_i = 0;
    for i in 0..n {
        let nf = face_normal(i);
        let si = ub[0] * nf[0] + ub[1] * nf[1] - apothem;
        if si > max_s {
            max_s = si;
            max_i = i;
        }
    }

    // Face features share this derivative form: dist = (p - c)·n_w - h.
    let face_result = |i: usize, dist: f64| -> SurfaceQuery {
        let nb = face_normal(i);
        let nw = rot(pose.theta, nb);
        let closest_b = [ub[0] - dist * nb[0], ub[1] - dist * nb[1]];
        let closest_w = {
            let cw = rot(pose.theta, closest_b);
            [c[0] + cw[0], c[1] + cw[1]]
        };
        let pn = perp(nw);
        SurfaceQuery {
            dist,
            closest: closest_w,
            normal: nw,
            d_dist: [-nw[0], -nw[1], rel[0] * pn[0] + rel[1] * pn[1]],
        }
    };

    if max_s <= 0.0 {
        // Inside: nearest face is the least-negative plane distance.
        return face_result(max_i, max_s);
    }

    // Outside: walk the edges for the closest boundary point.
    let mut best_d2 = f64::INFINITY;
    let mut best_edge = 0;
    let mut best_t = 0.0;
    for i in 0..n {
        let a = vertex(i);
        let b = vertex(i + 1);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        let t = (((ub[0] - a[0]) * e[0] + (ub[1] - a[1]) * e[1]) / len2).clamp(0.0, 1.0);
        let p = [a[0] + t * e[0], a[1] + t * e[1]];
        let d2 = (ub[0] - p[0]).powi(2) + (ub[1] - p[1]).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            best_edge = i;
            best_t = t;
        }
    }
    let dist = best_d2.sqrt();
    if best_t > 0.0 && best_t < 1.0 {
        // Face-interior contact.
        return face_result(best_edge, dist);
    }
    // Vertex contact.
    let vb = if best_t <= 0.0 { vertex(best_edge) } else { vertex(best_edge + 1) };
    let vw_rel = rot(pose.theta, vb);
    let vw = [c[0] + vw_rel[0], c[1] + vw_rel[1]];
    let u = if dist > 1e-12 {
        [(point[0] - vw[0]) / dist, (point[1] - vw[1]) / dist]
    } else {
        let nb = face_normal(best_edge);
        rot(pose.theta, nb)
    };
    let pv = perp(vw_rel);
    SurfaceQuery {
        dist,
        closest: vw,
        normal: u,
        d_dist: [-u[0], -u[1], -(u[0] * pv[0] + u[1] * pv[1])],
    }
}

/// Per-field observation noise levels (standard deviations). All zeros means
/// observations pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Additive noise on joint positions, radians.
    pub q_std: f64,
    /// Additive noise on contact positions, meters.
    pub contact_pos_std: f64,
    /// Additive 2D noise on contact normals before re-normalization.
    pub normal_std: f64,
    /// Multiplicative noise on force magnitudes.
    pub force_rel_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            q_std: 0.0,
            contact_pos_std: 0.0,
            normal_std: 0.0,
            force_rel_std: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.q_std == 0.0
            && self.contact_pos_std == 0.0
            && self.normal_std == 0.0
            && self.force_rel_std == 0.0
    }
}

/// Environment parameters (everything except the hand itself).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub object: ObjectShape,
    /// Control period, seconds.
    pub dt: f64,
    /// Setpoint tracking gain, 1/s.
    pub servo_gain: f64,
    /// Joint speed cap, rad/s.
    pub max_joint_speed: f64,
    /// Contact penalty stiffness, N/m.
    pub contact_stiffness: f64,
    /// Tangential anchor stiffness for loaded contacts, N/m.
    pub tangential_stiffness: f64,
    /// Gap below which a fingertip registers a contact, meters.
    pub detection_distance: f64,
    /// Minimum contacts for reward.
    pub contact_threshold: usize,
    /// Episode length, steps.
    pub horizon: usize,
    /// Drop when the object center strays this far from the hand center.
    pub drop_distance: f64,
    /// Drop after this many consecutive steps below the contact threshold.
    pub drop_timeout_steps: usize,
    /// Per-step setpoint delta bound, radians.
    pub action_bound: f64,
    /// Reset pose jitter bounds.
    pub reset_jitter_pos: f64,
    pub reset_jitter_theta: f64,
    /// Fingertip press depth at reset, meters of penetration.
    pub reset_press_depth: f64,
    pub reset_max_attempts: usize,
    /// Azimuthal offset of each grasp point from its finger's base azimuth,
    /// radians. An oblique grasp keeps the proximal joint useful both for
    /// tangential sweeps and for lifting clear of the surface, and aims the
    /// default rotation direction at a joint limit rather than at the
    /// straight-arm singularity.
    pub grasp_azimuth_offset: f64,
    /// Elbow branch used when posing the grasp (+1 bends the distal joint
    /// positive).
    pub grasp_elbow_sign: f64,
    /// Observation noise levels used by evaluation harnesses.
    pub observation_noise: NoiseConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            object: ObjectShape::Polygon {
                sides: 6,
                circumradius: 0.05,
            },
            dt: 0.02,
            servo_gain: 30.0,
            max_joint_speed: 2.0,
            contact_stiffness: 600.0,
            tangential_stiffness: 600.0,
            detection_distance: 0.004,
            contact_threshold: 3,
            horizon: 600,
            drop_distance: 0.12,
            drop_timeout_steps: 50,
            action_bound: 0.05,
            reset_jitter_pos: 0.003,
            reset_jitter_theta: 0.08,
            reset_press_depth: 0.0015,
            reset_max_attempts: 100,
            grasp_azimuth_offset: -1.0,
            grasp_elbow_sign: 1.0,
            observation_noise: NoiseConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.object.validate()?;
        if self.dt <= 0.0 {
            return Err(EnvError::BadConfig("dt must be > 0".into()));
        }
        if self.contact_stiffness <= 0.0 {
            return Err(EnvError::BadConfig("contact stiffness must be > 0".into()));
        }
        if self.horizon == 0 {
            return Err(EnvError::BadConfig("horizon must be > 0".into()));
        }
        if self.contact_threshold == 0 {
            return Err(EnvError::BadConfig("contact threshold must be >= 1".into()));
        }
        if self.action_bound <= 0.0 {
            return Err(EnvError::BadConfig("action bound must be > 0".into()));
        }
        Ok(())
    }
}

/// The Eq-style flat observation: joint positions and setpoints plus
/// per-finger contact slots (position, normal, force, validity mask).
/// Slots of fingers without contact are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub q: Vec<f64>,
    pub q_target: Vec<f64>,
    pub contact_pos: Vec<[f64; 2]>,
    pub contact_normal: Vec<[f64; 2]>,
    pub contact_force: Vec<f64>,
    pub mask: Vec<f64>,
}

impl Observation {
    pub fn flat_len(model: &HandModel) -> usize {
        2 * model.dof() + 6 * model.n_fingers()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let m = self.mask.len();
        let mut out = Vec::with_capacity(2 * self.q.len() + 6 * m);
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.q_target);
        for p in &self.contact_pos {
            out.extend_from_slice(p);
        }
        for n in &self.contact_normal {
            out.extend_from_slice(n);
        }
        out.extend_from_slice(&self.contact_force);
        out.extend_from_slice(&self.mask);
        out
    }

    fn build(model: &HandModel, q: &JointVector, q_target: &JointVector, contacts: &[Contact]) -> Self {
        let m = model.n_fingers();
        let mut obs = Observation {
            q: q.0.clone(),
            q_target: q_target.0.clone(),
            contact_pos: vec![[0.0; 2]; m],
            contact_normal: vec![[0.0; 2]; m],
            contact_force: vec![0.0; m],
            mask: vec![0.0; m],
        };
        for c in contacts {
            obs.contact_pos[c.finger] = c.position;
            obs.contact_normal[c.finger] = c.normal;
            obs.contact_force[c.finger] = c.force;
            obs.mask[c.finger] = 1.0;
        }
        obs
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    Dropped,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub contact_count: usize,
    /// Contacts carrying positive force (the reward gate counts these).
    pub loaded_contact_count: usize,
    pub object_theta: f64,
    pub termination: Option<Termination>,
    pub limits_hit: bool,
    pub action_clipped: bool,
    pub settle_converged: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Wrap-aware rotation reward, gated on the contact count.
pub fn reward(theta_prev: f64, theta_next: f64, contact_count: usize, threshold: usize) -> f64 {
    if contact_count < threshold {
        return 0.0;
    }
    angle_diff(theta_next, theta_prev)
}

/// Wrapped difference a - b in (-pi, pi]. Exact when no wrap occurs.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d > -std::f64::consts::PI && d <= std::f64::consts::PI {
        return d;
    }
    let w = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

const SETTLE_MAX_ITERS: usize = 20;
const SETTLE_POSE_TOL: f64 = 1e-8;
const SETTLE_TRUST_POS: f64 = 0.005;
const SETTLE_TRUST_THETA: f64 = 0.02;

/// Outcome of one quasi-static settle.
#[derive(Debug, Clone, Copy)]
pub struct SettleReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Minimize the contact energy (normal penalties, tangential anchors, and
/// any external wrench term) over the object pose by damped Gauss-Newton
/// from the previous pose.
///
/// `anchors[i]`, when present, is the object-frame material point stuck to
/// tip `i`; its spring penalizes motion perpendicular to the contact normal,
/// and engages only while the contact is loaded (penetrating). A tip that
/// loads during the iteration is anchored immediately at the material point
/// it first touches, so no rotation within the step can happen
/// friction-free; anchors of tips that end the step unloaded are released
/// by the caller.
///
/// On convergence the returned pose is a stationary point. If the iteration
/// cap is hit but energy decreased, the descended pose is kept with the
/// convergence flag cleared (this is how unbalanced perturbations push the
/// object out of the grasp); if no descent was achieved the previous pose is
/// kept.
#[allow(clippy::too_many_arguments)]
pub fn quasi_static_object_update(
    shape: &ObjectShape,
    start: Pose2,
    tips: &[[f64; 2]],
    anchors: &mut [Option<[f64; 2]>],
    fingertip_radius: f64,
    stiffness: f64,
    tangential_stiffness: f64,
    detection_distance: f64,
    wrench: [f64; 3],
) -> (Pose2, SettleReport) {
    debug_assert_eq!(tips.len(), anchors.len());
    // Stick newly loaded contacts at the current pose before anything moves.
    engage_anchors(shape, &start, tips, anchors, fingertip_radius);
    let energy = |pose: &Pose2, anchors: &[Option<[f64; 2]>]| -> f64 {
        let mut e = 0.0;
        let (sin_t, cos_t) = pose.theta.sin_cos();
        for (i, &tip) in tips.iter().enumerate() {
            let q = surface_query(shape, pose, tip);
            let pen = fingertip_radius - q.dist;
            if pen <= 0.0 {
                continue;
            }
            e += 0.5 * stiffness * pen * pen;
            if let Some(a) = anchors[i] {
                let w = [
                    pose.x + cos_t * a[0] - sin_t * a[1],
                    pose.y + sin_t * a[0] + cos_t * a[1],
                ];
                let d = [w[0] - tip[0], w[1] - tip[1]];
                let tau = perp(q.normal);
                let slip = d[0] * tau[0] + d[1] * tau[1];
                e += 0.5 * tangential_stiffness * slip * slip;
            }
        }
        e -= wrench[0] * (pose.x - start.x)
            + wrench[1] * (pose.y - start.y)
            + wrench[2] * (pose.theta - start.theta);
        e
    };

    // Skip when nothing can interact: no tip within reach and no wrench.
    let any_near = tips.iter().any(|&tip| {
        surface_query(shape, &start, tip).dist - fingertip_radius <= detection_distance
    });
    if !any_near && wrench == [0.0; 3] {
        return (
            start,
            SettleReport {
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
            },
        );
    }

    let mut pose = start;
    let mut e_prev = energy(&pose, anchors);
    let damping = 1e-9 * stiffness.max(1.0);
    let mut report = SettleReport {
        converged: false,
        iterations: 0,
        grad_norm: f64::INFINITY,
    };

    for iter in 0..SETTLE_MAX_ITERS {
        let mut grad = [-wrench[0], -wrench[1], -wrench[2]];
        let mut h = [[0.0f64; 3]; 3];
        let (sin_t, cos_t) = pose.theta.sin_cos();
        for (i, &tip) in tips.iter().enumerate() {
            let q = surface_query(shape, &pose, tip);
            let pen = fingertip_radius - q.dist;
            if pen <= 0.0 {
                continue;
            }
            // d(pen)/d(pose) = -d(dist)/d(pose)
            let dp = [-q.d_dist[0], -q.d_dist[1], -q.d_dist[2]];
            for r in 0..3 {
                grad[r] += stiffness * pen * dp[r];
                for c in 0..3 {
                    h[r][c] += stiffness * dp[r] * dp[c];
                }
            }
            if let Some(a) = anchors[i] {
                // World position of the anchored material point and its
                // tangential offset from the fingertip.
                let ra = [cos_t * a[0] - sin_t * a[1], sin_t * a[0] + cos_t * a[1]];
                let w = [pose.x + ra[0], pose.y + ra[1]];
                let d = [w[0] - tip[0], w[1] - tip[1]];
                let tau = perp(q.normal);
                let slip = d[0] * tau[0] + d[1] * tau[1];
                let dperp = perp(ra);
                let ds = [tau[0], tau[1], tau[0] * dperp[0] + tau[1] * dperp[1]];
                for r in 0..3 {
                    grad[r] += tangential_stiffness * slip * ds[r];
                    for c in 0..3 {
                        h[r][c] += tangential_stiffness * ds[r] * ds[c];
                    }
                }
            }
        }
        let grad_norm = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
        report.grad_norm = grad_norm;
        report.iterations = iter;

        // 3x3 solve of (H + damping I) d = -grad.
        for r in 0..3 {
            h[r][r] += damping;
        }
        let d = solve3(h, [-grad[0], -grad[1], -grad[2]]);
        let mut step = match d {
            Some(d) => d,
            None => break,
        };
        // Trust region.
        let pos_norm = (step[0] * step[0] + step[1] * step[1]).sqrt();
        let mut scale = 1.0f64;
        if pos_norm > SETTLE_TRUST_POS {
            scale = scale.min(SETTLE_TRUST_POS / pos_norm);
        }
        if step[2].abs() > SETTLE_TRUST_THETA {
            scale = scale.min(SETTLE_TRUST_THETA / step[2].abs());
        }
        for s in step.iter_mut() {
            *s *= scale;
        }

        let norm = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        if norm <= SETTLE_POSE_TOL {
            report.converged = true;
            break;
        }

        // Backtracking keeps the iteration a descent.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..6 {
            let cand = Pose2::new(
                pose.x + t * step[0],
                pose.y + t * step[1],
                pose.theta + t * step[2],
            );
            let e = energy(&cand, anchors);
            if e <= e_prev + 1e-15 {
                pose = cand;
                e_prev = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        // Any tip that came into load this iteration sticks where it is;
        // the new spring holds zero energy at the current pose.
        engage_anchors(shape, &pose, tips, anchors, fingertip_radius);
        if !accepted {
            // Cannot descend further; treat the current pose as settled.
            report.converged = report.grad_norm <= 1e-6;
            break;
        }
    }

    if !report.converged && e_prev >= energy(&start, anchors) {
        // No progress at all: keep the previous pose.
        return (start, report);
    }
    (normalize_pose(pose), report)
}

/// Give every loaded, unanchored tip an anchor at the material point
/// currently under it.
fn engage_anchors(
    shape: &ObjectShape,
    pose: &Pose2,
    tips: &[[f64; 2]],
    anchors: &mut [Option<[f64; 2]>],
    fingertip_radius: f64,
) {
    let (sin_t, cos_t) = pose.theta.sin_cos();
    for (i, &tip) in tips.iter().enumerate() {
        if anchors[i].is_some() {
            continue;
        }
        let q = surface_query(shape, pose, tip);
        if fingertip_radius - q.dist > 0.0 {
            let rel = [q.closest[0] - pose.x, q.closest[1] - pose.y];
            anchors[i] = Some([
                cos_t * rel[0] + sin_t * rel[1],
                -sin_t * rel[0] + cos_t * rel[1],
            ]);
        }
    }
}

fn normalize_pose(mut p: Pose2) -> Pose2 {
    p.theta = wrap_angle(p.theta);
    p
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    w - std::f64::consts::PI
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let x = [
        b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
            + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]),
        a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
            - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]),
        a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
            - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
            + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]),
    ];
    Some([x[0] * inv_det, x[1] * inv_det, x[2] * inv_det])
}

/// The environment proper. One instance is single-threaded; spin up
/// independent instances (with independent seeds) for parallel work.
#[derive(Debug, Clone)]
pub struct Env {
    model: HandModel,
    cfg: EnvConfig,
    rng: Rng,
    q: JointVector,
    q_target: JointVector,
    object: ObjectState,
    contacts: Vec<Contact>,
    /// Per-finger object-frame material point stuck to the fingertip.
    anchors: Vec<Option<[f64; 2]>>,
    perturbation: [f64; 3],
    step_count: usize,
    below_threshold_streak: usize,
    limits_hit_ever: bool,
    done: bool,
}

impl Env {
    pub fn new(model: HandModel, cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        model
            .validate()
            .map_err(|e| EnvError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        let dof = model.dof();
        let n_fingers = model.n_fingers();
        Ok(Env {
            object: ObjectState {
                pose: Pose2::new(0.0, 0.0, 0.0),
                shape: cfg.object.clone(),
            },
            model,
            cfg,
            rng: Rng::new(seed),
            q: JointVector::zeros(dof),
            q_target: JointVector::zeros(dof),
            contacts: Vec::new(),
            anchors: vec![None; n_fingers],
            perturbation: [0.0; 3],
            step_count: 0,
            below_threshold_streak: 0,
            limits_hit_ever: false,
            done: false,
        })
    }

    pub fn model(&self) -> &HandModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn object(&self) -> &ObjectState {
        &self.object
    }

    pub fn joints(&self) -> &JointVector {
        &self.q
    }

    pub fn setpoints(&self) -> &JointVector {
        &self.q_target
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn limits_hit_ever(&self) -> bool {
        self.limits_hit_ever
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Constant external wrench entering every subsequent settle until
    /// cleared. Evaluation-harness machinery.
    pub fn apply_perturbation(&mut self, wrench: [f64; 3]) {
        self.perturbation = wrench;
    }

    pub fn clear_perturbation(&mut self) {
        self.perturbation = [0.0; 3];
    }

    pub fn observation(&self) -> Observation {
        Observation::build(&self.model, &self.q, &self.q_target, &self.contacts)
    }

    /// Place the object at the hand center with a small pose jitter, close
    /// every finger onto it, and settle. Retries with fresh jitter until the
    /// grasp has at least the threshold number of contacts.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        for _ in 0..self.cfg.reset_max_attempts.max(1) {
            let jx = self.rng.uniform_range(-1.0, 1.0) * self.cfg.reset_jitter_pos;
            let jy = self.rng.uniform_range(-1.0, 1.0) * self.cfg.reset_jitter_pos;
            let jt = self.rng.uniform_range(-1.0, 1.0) * self.cfg.reset_jitter_theta;
            let pose = Pose2::new(jx, jy, jt);
            if let Some(q) = self.synthesize_grasp(&pose) {
                self.q = q.clone();
                self.q_target = q;
                self.object.pose = pose;
                self.anchors = vec![None; self.model.n_fingers()];
                let tips = fingertip_positions(&self.model, &self.q)
                    .map_err(|e| EnvError::BadConfig(e.to_string()))?;
                let (settled, _) = quasi_static_object_update(
                    &self.object.shape,
                    self.object.pose,
                    &tips,
                    &mut self.anchors,
                    self.model.fingertip_radius,
                    self.cfg.contact_stiffness,
                    self.cfg.tangential_stiffness,
                    self.cfg.detection_distance,
                    self.perturbation,
                );
                self.object.pose = settled;
                self.contacts = self.detect_contacts();
                self.refresh_anchors();
                let loaded = self.contacts.iter().filter(|c| c.force > 0.0).count();
                if loaded >= self.cfg.contact_threshold {
                    self.step_count = 0;
                    self.below_threshold_streak = 0;
                    self.limits_hit_ever = false;
                    self.done = false;
                    return Ok(self.observation());
                }
            }
        }
        Err(EnvError::GraspSynthesis {
            required: self.cfg.contact_threshold,
            attempts: self.cfg.reset_max_attempts,
        })
    }

    /// Close each finger onto the object: aim the fingertip at an oblique
    /// surface point and bisect the approach radius until the tip presses to
    /// the configured depth. Two-link fingers are posed by closed-form
    /// inverse kinematics with the elbow chirality that leaves the proximal
    /// joint a long counter-clockwise sweep.
    fn synthesize_grasp(&self, pose: &Pose2) -> Option<JointVector> {
        let mut q = Vec::with_capacity(self.model.dof());
        let outer = self.cfg.object.outer_radius();
        for fi in 0..self.model.n_fingers() {
            let f = &self.model.fingers[fi];
            if f.n_joints() != 2 {
                // Only the two-link closed form is implemented; richer
                // fingers would need a numeric IK here.
                return None;
            }
            let azimuth = f.base.y.atan2(f.base.x) + self.cfg.grasp_azimuth_offset;
            let dir = [azimuth.cos(), azimuth.sin()];
            let tip_for = |rho: f64| -> Option<[f64; 2]> {
                let target = [pose.x + rho * dir[0], pose.y + rho * dir[1]];
                let (q1, q2) = ik_two_link(f, target, self.cfg.grasp_elbow_sign)?;
                if q1 < f.lower_limits[0]
                    || q1 > f.upper_limits[0]
                    || q2 < f.lower_limits[1]
                    || q2 > f.upper_limits[1]
                {
                    return None;
                }
                Some(finger_tip(&self.model, fi, &[q1, q2]))
            };
            let gap_at = |rho: f64| -> Option<f64> {
                let tip = tip_for(rho)?;
                Some(
                    surface_query(&self.object.shape, pose, tip).dist
                        - self.model.fingertip_radius,
                )
            };
            let target_gap = -self.cfg.reset_press_depth;
            let mut lo = 0.55 * outer;
            let mut hi = outer + self.model.fingertip_radius + 4.0 * self.cfg.detection_distance;
            // The outer end of the approach may be outside the finger's
            // limit-feasible workspace; walk it inward until it poses.
            let step = 0.02 * (hi - lo);
            let mut guard = 0;
            while gap_at(hi).is_none() && hi > lo && guard < 60 {
                hi -= step;
                guard += 1;
            }
            match (gap_at(lo), gap_at(hi)) {
                (Some(glo), Some(ghi)) if glo < target_gap && ghi > target_gap => {}
                _ => return None,
            }
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                match gap_at(mid) {
                    Some(g) if g < target_gap => lo = mid,
                    Some(_) => hi = mid,
                    None => return None,
                }
            }
            let rho = 0.5 * (lo + hi);
            let target = [pose.x + rho * dir[0], pose.y + rho * dir[1]];
            let (q1, q2) = ik_two_link(f, target, self.cfg.grasp_elbow_sign)?;
            q.push(q1);
            q.push(q2);
        }
        Some(JointVector(q))
    }

    /// Sticking bookkeeping after a settle: fingers that ended the step
    /// unloaded release their anchors (engagement happens inside the settle
    /// itself, at first touch).
    fn refresh_anchors(&mut self) {
        let mut loaded = vec![false; self.model.n_fingers()];
        for c in &self.contacts {
            if c.force > 0.0 {
                loaded[c.finger] = true;
            }
        }
        for (f, is_loaded) in loaded.iter().enumerate() {
            if !is_loaded {
                self.anchors[f] = None;
            }
        }
    }

    fn detect_contacts(&self) -> Vec<Contact> {
        let tips = fingertip_positions(&self.model, &self.q).expect("dims maintained internally");
        let mut out = Vec::new();
        for (fi, &tip) in tips.iter().enumerate() {
            let q = surface_query(&self.object.shape, &self.object.pose, tip);
            let gap = q.dist - self.model.fingertip_radius;
            if gap <= self.cfg.detection_distance {
                out.push(Contact {
                    finger: fi,
                    position: q.closest,
                    normal: q.normal,
                    force: self.cfg.contact_stiffness * (-gap).max(0.0),
                });
            }
        }
        out
    }

    /// Advance one control step with a joint-setpoint delta action.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let dof = self.model.dof();
        if action.len() != dof {
            return Err(EnvError::ActionDimension {
                got: action.len(),
                expected: dof,
            });
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }

        let bound = self.cfg.action_bound;
        let mut clipped = false;
        let mut target = self.q_target.0.clone();
        for (t, &a) in target.iter_mut().zip(action) {
            let c = a.clamp(-bound, bound);
            if c != a {
                clipped = true;
            }
            *t += c;
        }
        let (target, limits_hit) = clamp_to_limits(&self.model, &JointVector(target));
        self.q_target = target;
        if limits_hit {
            self.limits_hit_ever = true;
        }

        // Setpoint servo with speed cap.
        let speed_cap = self.cfg.max_joint_speed * self.cfg.dt;
        let gain = self.cfg.servo_gain * self.cfg.dt;
        for i in 0..dof {
            let err = self.q_target[i] - self.q[i];
            let dq = (gain * err).clamp(-speed_cap, speed_cap);
            self.q.0[i] += dq;
        }

        let theta_prev = self.object.pose.theta;
        let tips = fingertip_positions(&self.model, &self.q).expect("dims maintained internally");
        let (pose, settle) = quasi_static_object_update(
            &self.object.shape,
            self.object.pose,
            &tips,
            &mut self.anchors,
            self.model.fingertip_radius,
            self.cfg.contact_stiffness,
            self.cfg.tangential_stiffness,
            self.cfg.detection_distance,
            self.perturbation,
        );
        self.object.pose = pose;
        self.contacts = self.detect_contacts();
        self.refresh_anchors();

        let count = self.contacts.len();
        // Reward and grasp-maintenance both require contacts that actually
        // press (zero-force proximity contacts transmit nothing and hold
        // nothing, so they neither earn rotation reward nor count as
        // grasping for the drop timeout).
        let loaded = self.contacts.iter().filter(|c| c.force > 0.0).count();
        let r = reward(
            theta_prev,
            self.object.pose.theta,
            loaded,
            self.cfg.contact_threshold,
        );

        self.step_count += 1;
        if loaded < self.cfg.contact_threshold {
            self.below_threshold_streak += 1;
        } else {
            self.below_threshold_streak = 0;
        }

        let center_dist = (self.object.pose.x.powi(2) + self.object.pose.y.powi(2)).sqrt();
        let termination = if center_dist > self.cfg.drop_distance
            || self.below_threshold_streak >= self.cfg.drop_timeout_steps
        {
            Some(Termination::Dropped)
        } else if self.step_count >= self.cfg.horizon {
            Some(Termination::Horizon)
        } else {
            None
        };
        self.done = termination.is_some();

        Ok(StepResult {
            observation: self.observation(),
            reward: r,
            done: self.done,
            info: StepInfo {
                contact_count: count,
                loaded_contact_count: loaded,
                object_theta: self.object.pose.theta,
                termination,
                limits_hit,
                action_clipped: clipped,
                settle_converged: settle.converged,
            },
        })
    }
}

/// Closed-form planar two-link inverse kinematics. `elbow` selects the
/// solution branch (+1 keeps the distal angle positive).
fn ik_two_link(f: &FingerModel, target: [f64; 2], elbow: f64) -> Option<(f64, f64)> {
    let a = f.link_lengths[0];
    let b = f.link_lengths[1];
    let vx = target[0] - f.base.x;
    let vy = target[1] - f.base.y;
    let d2 = vx * vx + vy * vy;
    let cos_q2 = (d2 - a * a - b * b) / (2.0 * a * b);
    if !(-1.0..=1.0).contains(&cos_q2) {
        return None;
    }
    let q2 = elbow.signum() * cos_q2.acos();
    let q1 = vy.atan2(vx) - f.base.theta - (b * q2.sin()).atan2(a + b * q2.cos());
    Some((wrap_angle(q1), q2))
}

fn finger_tip(model: &HandModel, finger: usize, q_finger: &[f64]) -> [f64; 2] {
    let f = &model.fingers[finger];
    let mut x = f.base.x;
    let mut y = f.base.y;
    let mut angle = f.base.theta;
    for (i, &len) in f.link_lengths.iter().enumerate() {
        angle += q_finger[i];
        x += len * angle.cos();
        y += len * angle.sin();
    }
    [x, y]
}

/// Additive/multiplicative observation noise for robustness evaluation.
/// With all levels zero the observation is returned untouched and the rng is
/// never consumed, so level-0 sweeps match clean evaluation bit-exactly.
pub fn noisy_observation(obs: &Observation, noise: &NoiseConfig, rng: &mut Rng) -> Observation {
    if noise.is_zero() {
        return obs.clone();
    }
    let mut out = obs.clone();
    if noise.q_std > 0.0 {
        for v in out.q.iter_mut() {
            *v += rng.normal(0.0, noise.q_std);
        }
    }
    for f in 0..out.mask.len() {
        if out.mask[f] != 1.0 {
            continue;
        }
        if noise.contact_pos_std > 0.0 {
            out.contact_pos[f][0] += rng.normal(0.0, noise.contact_pos_std);
            out.contact_pos[f][1] += rng.normal(0.0, noise.contact_pos_std);
        }
        if noise.normal_std > 0.0 {
            let mut n = out.contact_normal[f];
            n[0] += rng.normal(0.0, noise.normal_std);
            n[1] += rng.normal(0.0, noise.normal_std);
            let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
            out.contact_normal[f] = if len > 1e-12 {
                [n[0] / len, n[1] / len]
            } else {
                obs.contact_normal[f]
            };
        }
        if noise.force_rel_std > 0.0 {
            let m = 1.0 + rng.normal(0.0, noise.force_rel_std);
            out.contact_force[f] = (out.contact_force[f] * m).max(0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_env(seed: u64) -> Env {
        Env::new(HandModel::default_hand(), EnvConfig::default(), seed).unwrap()
    }

    #[test]
    fn disk_query_matches_geometry() {
        let shape = ObjectShape::Disk { radius: 0.05 };
        let pose = Pose2::new(0.01, -0.02, 0.3);
        let q = surface_query(&shape, &pose, [0.11, -0.02]);
        assert!((q.dist - 0.05).abs() < 1e-12);
        assert!((q.normal[0] - 1.0).abs() < 1e-12);
        assert!((q.closest[0] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn polygon_query_inside_outside() {
        let shape = ObjectShape::Polygon {
            sides: 6,
            circumradius: 0.05,
        };
        let pose = Pose2::new(0.0, 0.0, 0.0);
        let apothem = 0.05 * (std::f64::consts::PI / 6.0).cos();
        // Straight out along a face normal.
        let q = surface_query(&shape, &pose, [0.08 * (0.5236f64).cos(), 0.08 * (0.5236f64).sin()]);
        assert!(q.dist > 0.0);
        // Center point: deepest inside.
        let q = surface_query(&shape, &pose, [0.0, 0.0]);
        assert!((q.dist + apothem).abs() < 1e-12);
        // Outward normal has unit length everywhere.
        for i in 0..32 {
            let a = std::f64::consts::TAU * i as f64 / 32.0;
            let q = surface_query(&shape, &pose, [0.09 * a.cos(), 0.09 * a.sin()]);
            let len = (q.normal[0].powi(2) + q.normal[1].powi(2)).sqrt();
            assert!((len - 1.0).abs() < 1e-9);
            assert!(q.dist > 0.0);
        }
    }

    #[test]
    fn polygon_distance_derivative_matches_fd() {
        let shape = ObjectShape::Polygon {
            sides: 6,
            circumradius: 0.05,
        };
        let mut rng = Rng::new(8);
        let h = 1e-7;
        for _ in 0..200 {
            let pose = Pose2::new(
                rng.uniform_range(-0.02, 0.02),
                rng.uniform_range(-0.02, 0.02),
                rng.uniform_range(-3.0, 3.0),
            );
            let a = rng.uniform_range(0.0, std::f64::consts::TAU);
            let r = rng.uniform_range(0.035, 0.09);
            let pt = [r * a.cos(), r * a.sin()];
            let q = surface_query(&shape, &pose, pt);
            for axis in 0..3 {
                let mut pp = pose;
                let mut pm = pose;
                match axis {
                    0 => {
                        pp.x += h;
                        pm.x -= h;
                    }
                    1 => {
                        pp.y += h;
                        pm.y -= h;
                    }
                    _ => {
                        pp.theta += h;
                        pm.theta -= h;
                    }
                }
                let fd = (surface_query(&shape, &pose_clone(&pp), pt).dist
                    - surface_query(&shape, &pose_clone(&pm), pt).dist)
                    / (2.0 * h);
                let err = (q.d_dist[axis] - fd).abs();
                // FD jumps exactly at feature boundaries; allow those through.
                if err > 2e-5 {
                    let q2 = surface_query(&shape, &pose_clone(&pp), pt);
                    let q3 = surface_query(&shape, &pose_clone(&pm), pt);
                    let crossed = (q2.normal[0] - q3.normal[0]).abs() > 1e-3
                        || (q2.normal[1] - q3.normal[1]).abs() > 1e-3;
                    assert!(crossed, "axis {axis} err {err} without feature change");
                }
            }
        }
    }

    fn pose_clone(p: &Pose2) -> Pose2 {
        Pose2::new(p.x, p.y, p.theta)
    }

    #[test]
    fn reset_produces_full_grasp() {
        let mut env = default_env(42);
        let obs = env.reset().unwrap();
        assert_eq!(env.contacts().len(), 4);
        assert_eq!(obs.mask.iter().filter(|&&m| m == 1.0).count(), 4);
        // Contacts press with positive force.
        for c in env.contacts() {
            assert!(c.force > 0.0);
        }
    }

    #[test]
    fn reset_zero_jitter_disk_is_centered() {
        let model = HandModel::default_hand();
        let cfg = EnvConfig {
            object: ObjectShape::Disk { radius: 0.05 },
            reset_jitter_pos: 0.0,
            reset_jitter_theta: 0.0,
            ..EnvConfig::default()
        };
        let mut env = Env::new(model, cfg, 7).unwrap();
        env.reset().unwrap();
        let p = env.object().pose;
        assert_eq!(env.contacts().len(), 4);
        assert!(p.x.abs() < 1e-6 && p.y.abs() < 1e-6);
        assert!(p.theta.abs() < 1e-9);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut a = default_env(9);
        let mut b = default_env(9);
        let oa = a.reset().unwrap();
        let ob = b.reset().unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a.object().pose, b.object().pose);
    }

    #[test]
    fn reset_validity_sweep() {
        let mut env = default_env(1234);
        for _ in 0..200 {
            let _ = env.reset().unwrap();
            assert!(env.contacts().len() >= env.config().contact_threshold);
        }
    }

    #[test]
    fn zero_action_is_a_fixed_point() {
        let mut env = default_env(5);
        env.reset().unwrap();
        let theta0 = env.object().pose.theta;
        let zeros = vec![0.0; env.model().dof()];
        for _ in 0..10 {
            let r = env.step(&zeros).unwrap();
            assert!(r.reward.abs() <= 1e-9);
        }
        assert!((env.object().pose.theta - theta0).abs() <= 1e-9);
    }

    #[test]
    fn nan_action_is_rejected() {
        let mut env = default_env(5);
        env.reset().unwrap();
        let mut a = vec![0.0; env.model().dof()];
        a[3] = f64::NAN;
        assert_eq!(env.step(&a).unwrap_err(), EnvError::NonFiniteAction);
    }

    #[test]
    fn opening_all_fingers_drops_the_object() {
        let mut env = default_env(11);
        env.reset().unwrap();
        // Bend every joint further negative: tips lift off the object.
        let a = vec![-0.05; env.model().dof()];
        let mut dropped = false;
        for _ in 0..300 {
            let r = env.step(&a).unwrap();
            if r.info.contact_count < env.config().contact_threshold {
                assert_eq!(r.reward, 0.0);
            }
            if r.done {
                assert_eq!(r.info.termination, Some(Termination::Dropped));
                dropped = true;
                break;
            }
        }
        assert!(dropped);
    }

    #[test]
    fn single_push_settles_to_zero_penetration() {
        // One fingertip overlapping a free disk: the energy minimum pushes
        // the disk out until penetration vanishes.
        let shape = ObjectShape::Disk { radius: 0.05 };
        let start = Pose2::new(0.0, 0.0, 0.0);
        let tip = [0.05 + 0.012 - 0.001, 0.0]; // 1 mm penetration
        let (pose, report) = quasi_static_object_update(
            &shape, start, &[tip], &mut [None], 0.012, 600.0, 600.0, 0.004, [0.0; 3],
        );
        let q = surface_query(&shape, &pose, tip);
        let pen = 0.012 - q.dist;
        assert!(report.converged);
        assert!(pen.abs() <= 1e-6, "penetration {pen}");
        // Pushed along -x.
        assert!(pose.x < -0.0005);
        assert!(pose.y.abs() < 1e-9);
    }

    #[test]
    fn antipodal_squeeze_is_balanced() {
        let shape = ObjectShape::Disk { radius: 0.05 };
        let start = Pose2::new(0.0, 0.0, 0.0);
        let pen = 0.001;
        let tips = [[0.05 + 0.012 - pen, 0.0], [-(0.05 + 0.012 - pen), 0.0]];
        let (pose, report) = quasi_static_object_update(
            &shape, start, &tips, &mut [None, None], 0.012, 600.0, 600.0, 0.004, [0.0; 3],
        );
        assert!(report.converged);
        assert!(pose.x.abs() < 1e-9 && pose.y.abs() < 1e-9);
        let q0 = surface_query(&shape, &pose, tips[0]);
        let q1 = surface_query(&shape, &pose, tips[1]);
        assert!((q0.dist - q1.dist).abs() < 1e-9);
    }

    #[test]
    fn no_nearby_finger_leaves_pose_unchanged() {
        let shape = ObjectShape::Polygon {
            sides: 6,
            circumradius: 0.05,
        };
        let start = Pose2::new(0.01, 0.02, 0.5);
        let (pose, report) = quasi_static_object_update(
            &shape,
            start,
            &[[0.3, 0.3]],
            &mut [None],
            0.012,
            600.0,
            600.0,
            0.004,
            [0.0; 3],
        );
        assert_eq!(pose, start);
        assert!(report.converged);
    }

    #[test]
    fn contact_normals_point_outward_on_disk() {
        let model = HandModel::default_hand();
        let cfg = EnvConfig {
            object: ObjectShape::Disk { radius: 0.05 },
            ..EnvConfig::default()
        };
        let mut env = Env::new(model, cfg, 3).unwrap();
        env.reset().unwrap();
        let center = [env.object().pose.x, env.object().pose.y];
        let tips = fingertip_positions(env.model(), env.joints()).unwrap();
        for c in env.contacts() {
            let tip = tips[c.finger];
            let v = [tip[0] - center[0], tip[1] - center[1]];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let expect = [v[0] / n, v[1] / n];
            assert!((c.normal[0] - expect[0]).abs() < 1e-9);
            assert!((c.normal[1] - expect[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn fingertip_at_exact_touch_has_zero_force() {
        let shape = ObjectShape::Disk { radius: 0.05 };
        let pose = Pose2::new(0.0, 0.0, 0.0);
        let q = surface_query(&shape, &pose, [0.062, 0.0]);
        let gap = q.dist - 0.012;
        // Zero-penetration boundary: a contact registers but carries no force.
        assert!(gap.abs() < 1e-12);
        assert!(gap < 0.004, "within detection distance");
        let force = 600.0 * (-gap).max(0.0);
        assert!(force.abs() <= 1e-9);
    }

    #[test]
    fn reward_gating_and_wrap() {
        assert_eq!(reward(0.0, 0.02, 4, 3), 0.02);
        assert_eq!(reward(0.0, 0.02, 2, 3), 0.0);
        let r = reward(
            std::f64::consts::PI - 0.01,
            -std::f64::consts::PI + 0.01,
            3,
            3,
        );
        assert!((r - 0.02).abs() < 1e-12);
    }

    #[test]
    fn trajectory_is_deterministic() {
        let run = |seed: u64| -> Vec<f64> {
            let mut env = default_env(seed);
            env.reset().unwrap();
            let mut rng = Rng::new(77);
            let mut rewards = Vec::new();
            for _ in 0..50 {
                let a: Vec<f64> = (0..env.model().dof())
                    .map(|_| rng.uniform_range(-0.01, 0.01))
                    .collect();
                let r = env.step(&a).unwrap();
                rewards.push(r.reward);
                rewards.push(r.info.object_theta);
            }
            rewards
        };
        assert_eq!(run(12), run(12));
    }

    #[test]
    fn observation_layout_and_masking() {
        let mut env = default_env(2);
        let obs = env.reset().unwrap();
        let flat = obs.flatten();
        assert_eq!(flat.len(), Observation::flat_len(env.model()));
        // Force a missing contact and confirm its slots zero out.
        let mut partial = obs.clone();
        partial.mask[1] = 0.0;
        partial.contact_pos[1] = [0.0; 2];
        partial.contact_normal[1] = [0.0; 2];
        partial.contact_force[1] = 0.0;
        let flat = partial.flatten();
        let d = env.model().dof();
        let m = env.model().n_fingers();
        // positions start at 2d; normals at 2d + 2m; forces at 2d + 4m; mask at 2d + 5m.
        assert_eq!(flat[2 * d + 2], 0.0);
        assert_eq!(flat[2 * d + 3], 0.0);
        assert_eq!(flat[2 * d + 2 * m + 2], 0.0);
        assert_eq!(flat[2 * d + 4 * m + 1], 0.0);
        assert_eq!(flat[2 * d + 5 * m + 1], 0.0);
    }

    #[test]
    fn zero_noise_is_identity_without_consuming_rng() {
        let mut env = default_env(6);
        let obs = env.reset().unwrap();
        let mut rng = Rng::new(5);
        let before = rng.clone().next_u64();
        let noisy = noisy_observation(&obs, &NoiseConfig::default(), &mut rng);
        assert_eq!(noisy, obs);
        assert_eq!(rng.next_u64(), before);
    }

    #[test]
    fn normal_noise_preserves_unit_length() {
        let mut env = default_env(6);
        let obs = env.reset().unwrap();
        let noise = NoiseConfig {
            normal_std: 0.5,
            ..NoiseConfig::default()
        };
        let mut rng = Rng::new(9);
        for _ in 0..100 {
            let noisy = noisy_observation(&obs, &noise, &mut rng);
            for (f, n) in noisy.contact_normal.iter().enumerate() {
                if noisy.mask[f] == 1.0 {
                    let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
                    assert!((len - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn q_noise_empirical_std() {
        let mut env = default_env(6);
        let obs = env.reset().unwrap();
        let noise = NoiseConfig {
            q_std: 0.1,
            ..NoiseConfig::default()
        };
        let mut rng = Rng::new(31);
        let n = 10_000;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let noisy = noisy_observation(&obs, &noise, &mut rng);
            samples.push(noisy.q[0] - obs.q[0]);
        }
        let mean: f64 = samples.iter().sum::<f64>() / n as f64;
        let var: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.05, "std {std}");
    }

    #[test]
    fn perturbation_zero_is_bit_exact() {
        let mut a = default_env(3);
        let mut b = default_env(3);
        a.reset().unwrap();
        b.reset().unwrap();
        b.apply_perturbation([0.0, 0.0, 0.0]);
        let act = vec![0.003; a.model().dof()];
        for _ in 0..20 {
            let ra = a.step(&act).unwrap();
            let rb = b.step(&act).unwrap();
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(ra.observation.flatten(), rb.observation.flatten());
        }
    }

    #[test]
    fn strong_perturbation_eventually_drops() {
        let mut env = default_env(13);
        env.reset().unwrap();
        env.apply_perturbation([0.0, -30.0, 0.0]);
        let zeros = vec![0.0; env.model().dof()];
        let mut dropped = false;
        for _ in 0..400 {
            let r = env.step(&zeros).unwrap();
            if r.done {
                dropped = r.info.termination == Some(Termination::Dropped);
                break;
            }
        }
        assert!(dropped, "object should be pushed out of the grasp");
    }

    #[test]
    fn small_perturbation_keeps_grasp() {
        let mut env = default_env(13);
        env.reset().unwrap();
        env.apply_perturbation([0.0, -0.2, 0.0]);
        let zeros = vec![0.0; env.model().dof()];
        for _ in 0..100 {
            let r = env.step(&zeros).unwrap();
            assert!(!r.done);
        }
        let p = env.object().pose;
        let shift = (p.x * p.x + p.y * p.y).sqrt();
        assert!(shift < env.config().object.outer_radius());
    }
}
