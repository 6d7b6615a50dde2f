//! Planar hand kinematics: forward kinematics, fingertip and contact
//! Jacobians, and the grasp map for a hand of serial-chain fingers arranged
//! around a central workspace.
//!
//! Contacts live in 2D, object wrenches in 3D (fx, fy, torque). The contact
//! Jacobian uses the fingertip-center Jacobian; the offset to the actual
//! contact point is bounded by the fingertip radius and treated as
//! negligible.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, hand has {expected} dof")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("finger index {0} out of range")]
    InvalidFinger(usize),
    #[error("finger {0} appears in more than one contact")]
    DuplicateContactFinger(usize),
    #[error("contact on finger {finger} is {dist:.4} m from its fingertip (limit {limit:.4})")]
    ContactTooFar { finger: usize, dist: f64, limit: f64 },
    #[error("invalid hand model: {0}")]
    BadModel(String),
}

/// A planar pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// One serial-chain finger: base pose in the hand frame plus link lengths
/// and per-joint limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerModel {
    pub base: Pose2,
    pub link_lengths: Vec<f64>,
    pub lower_limits: Vec<f64>,
    pub upper_limits: Vec<f64>,
}

impl FingerModel {
    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }
}

/// Hand of N planar fingers with disk fingertips.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandModel {
    pub fingers: Vec<FingerModel>,
    pub fingertip_radius: f64,
}

impl HandModel {
    /// Total degrees of freedom across all fingers.
    pub fn dof(&self) -> usize {
        self.fingers.iter().map(|f| f.n_joints()).sum()
    }

    pub fn n_fingers(&self) -> usize {
        self.fingers.len()
    }

    /// Index range of `finger`'s joints within the stacked joint vector.
    pub fn joint_span(&self, finger: usize) -> std::ops::Range<usize> {
        let start: usize = self.fingers[..finger].iter().map(|f| f.n_joints()).sum();
        start..start + self.fingers[finger].n_joints()
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.fingers.is_empty() {
            return Err(KinematicsError::BadModel("no fingers".into()));
        }
        if self.fingertip_radius <= 0.0 {
            return Err(KinematicsError::BadModel("fingertip radius must be > 0".into()));
        }
        for (i, f) in self.fingers.iter().enumerate() {
            if f.link_lengths.len() < 2 {
                return Err(KinematicsError::BadModel(format!(
                    "finger {i} needs at least 2 links"
                )));
            }
            if f.link_lengths.iter().any(|&l| l <= 0.0) {
                return Err(KinematicsError::BadModel(format!(
                    "finger {i} has a non-positive link length"
                )));
            }
            if f.lower_limits.len() != f.n_joints() || f.upper_limits.len() != f.n_joints() {
                return Err(KinematicsError::BadModel(format!(
                    "finger {i} limit arrays must match joint count"
                )));
            }
            for j in 0..f.n_joints() {
                if f.lower_limits[j] >= f.upper_limits[j] {
                    return Err(KinematicsError::BadModel(format!(
                        "finger {i} joint {j}: lower limit must be below upper"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The default bench hand: 4 two-link fingers on a 0.18 m circle, all
    /// facing the center. Straight fingers reach exactly to the center, so
    /// grasping postures bend backwards (negative joint angles) to land the
    /// tip on the object surface.
    pub fn default_hand() -> Self {
        let n = 4;
        let radius = 0.18;
        let fingers = (0..n)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                FingerModel {
                    base: Pose2::new(radius * phi.cos(), radius * phi.sin(), phi + std::f64::consts::PI),
                    link_lengths: vec![0.10, 0.08],
                    lower_limits: vec![-1.2, -1.6],
                    upper_limits: vec![1.2, 1.6],
                }
            })
            .collect();
        HandModel {
            fingers,
            fingertip_radius: 0.012,
        }
    }
}

/// Stacked joint positions (or setpoints) for the whole hand, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(dof: usize) -> Self {
        JointVector(vec![0.0; dof])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dims(model: &HandModel, q: &JointVector) -> Result<(), KinematicsError> {
    if q.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            got: q.len(),
            expected: model.dof(),
        });
    }
    Ok(())
}

/// A fingertip-object contact. The normal is unit length and points from the
/// object surface toward the finger.
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub finger: usize,
    pub position: [f64; 2],
    pub normal: [f64; 2],
    pub force: f64,
}

impl Contact {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let n = (self.normal[0] * self.normal[0] + self.normal[1] * self.normal[1]).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(KinematicsError::BadModel(format!(
                "contact normal has length {n}, expected 1"
            )));
        }
        if self.force < 0.0 {
            return Err(KinematicsError::BadModel("negative contact force".into()));
        }
        Ok(())
    }
}

/// Grasp map `g` (3 × 2k) and contact Jacobian `j` (2k × dof) for a contact
/// set of size `k`.
#[derive(Debug, Clone)]
pub struct GraspMatrices {
    pub g: Mat,
    pub j: Mat,
    pub k: usize,
}

/// Positions of each joint origin along a finger, followed by the fingertip.
/// Chained planar rotations and translations from the finger base.
fn finger_joint_points(model: &HandModel, q: &JointVector, finger: usize) -> Vec<[f64; 2]> {
    let f = &model.fingers[finger];
    let span = model.joint_span(finger);
    let mut pts = Vec::with_capacity(f.n_joints() + 1);
    let mut x = f.base.x;
    let mut y = f.base.y;
    let mut angle = f.base.theta;
    pts.push([x, y]);
    for (idx, &len) in f.link_lengths.iter().enumerate() {
        angle += q[span.start + idx];
        x += len * angle.cos();
        y += len * angle.sin();
        pts.push([x, y]);
    }
    pts
}

/// Forward kinematics: the pose of every fingertip.
pub fn forward_kinematics(
    model: &HandModel,
    q: &JointVector,
) -> Result<Vec<Pose2>, KinematicsError> {
    check_dims(model, q)?;
    let mut out = Vec::with_capacity(model.n_fingers());
    for (fi, f) in model.fingers.iter().enumerate() {
        let pts = finger_joint_points(model, q, fi);
        let tip = pts[pts.len() - 1];
        let span = model.joint_span(fi);
        let orientation = f.base.theta + q.0[span].iter().sum::<f64>();
        out.push(Pose2::new(tip[0], tip[1], orientation));
    }
    Ok(out)
}

/// Positions of all fingertips only.
pub fn fingertip_positions(
    model: &HandModel,
    q: &JointVector,
) -> Result<Vec<[f64; 2]>, KinematicsError> {
    Ok(forward_kinematics(model, q)?
        .into_iter()
        .map(|p| p.position())
        .collect())
}

/// Analytic Jacobian of one fingertip position with respect to that finger's
/// joints: column j is the perpendicular of (tip − joint-j origin).
pub fn fingertip_jacobian(
    model: &HandModel,
    q: &JointVector,
    finger: usize,
) -> Result<Mat, KinematicsError> {
    check_dims(model, q)?;
    if finger >= model.n_fingers() {
        return Err(KinematicsError::InvalidFinger(finger));
    }
    let pts = finger_joint_points(model, q, finger);
    let tip = pts[pts.len() - 1];
    let nj = model.fingers[finger].n_joints();
    let mut jac = Mat::zeros(2, nj);
    for j in 0..nj {
        let r = [tip[0] - pts[j][0], tip[1] - pts[j][1]];
        jac.set(0, j, -r[1]);
        jac.set(1, j, r[0]);
    }
    Ok(jac)
}

/// Stacked contact Jacobian for a contact set: 2k × dof, with exact zeros in
/// the columns of fingers that carry no contact. At most one contact per
/// finger; each contact must lie near its fingertip.
pub fn contact_jacobian(
    model: &HandModel,
    q: &JointVector,
    contacts: &[Contact],
) -> Result<Mat, KinematicsError> {
    check_dims(model, q)?;
    let dof = model.dof();
    let mut seen = vec![false; model.n_fingers()];
    let tips = fingertip_positions(model, q)?;
    let mut jac = Mat::zeros(2 * contacts.len(), dof);
    for (ci, contact) in contacts.iter().enumerate() {
        if contact.finger >= model.n_fingers() {
            return Err(KinematicsError::InvalidFinger(contact.finger));
        }
        if seen[contact.finger] {
            return Err(KinematicsError::DuplicateContactFinger(contact.finger));
        }
        seen[contact.finger] = true;
        let tip = tips[contact.finger];
        let dist = ((contact.position[0] - tip[0]).powi(2)
            + (contact.position[1] - tip[1]).powi(2))
        .sqrt();
        let limit = 2.0 * model.fingertip_radius;
        if dist > limit {
            return Err(KinematicsError::ContactTooFar {
                finger: contact.finger,
                dist,
                limit,
            });
        }
        let block = fingertip_jacobian(model, q, contact.finger)?;
        let span = model.joint_span(contact.finger);
        for r in 0..2 {
            for (jj, col) in span.clone().enumerate() {
                jac.set(2 * ci + r, col, block.get(r, jj));
            }
        }
    }
    Ok(jac)
}

/// Grasp map about the object center: for each contact, the 3×2 block maps a
/// contact force to (fx, fy, torque); blocks are stacked horizontally.
pub fn grasp_map(object_center: [f64; 2], contacts: &[Contact]) -> Result<Mat, KinematicsError> {
    if contacts.is_empty() {
        return Err(KinematicsError::BadModel(
            "grasp map needs at least one contact".into(),
        ));
    }
    let mut g = Mat::zeros(3, 2 * contacts.len());
    for (ci, contact) in contacts.iter().enumerate() {
        let rx = contact.position[0] - object_center[0];
        let ry = contact.position[1] - object_center[1];
        g.set(0, 2 * ci, 1.0);
        g.set(1, 2 * ci + 1, 1.0);
        g.set(2, 2 * ci, -ry);
        g.set(2, 2 * ci + 1, rx);
    }
    Ok(g)
}

/// Build grasp map and contact Jacobian together for the current contact set.
pub fn grasp_matrices(
    model: &HandModel,
    q: &JointVector,
    object_center: [f64; 2],
    contacts: &[Contact],
) -> Result<GraspMatrices, KinematicsError> {
    let j = contact_jacobian(model, q, contacts)?;
    let g = if contacts.is_empty() {
        Mat::zeros(3, 0)
    } else {
        grasp_map(object_center, contacts)?
    };
    Ok(GraspMatrices {
        g,
        j,
        k: contacts.len(),
    })
}

/// Clamp a joint vector into the model's limits. The flag is true iff any
/// entry changed.
pub fn clamp_to_limits(model: &HandModel, q: &JointVector) -> (JointVector, bool) {
    let mut out = q.0.clone();
    let mut hit = false;
    let mut idx = 0;
    for f in &model.fingers {
        for j in 0..f.n_joints() {
            let clamped = out[idx].clamp(f.lower_limits[j], f.upper_limits[j]);
            if clamped != out[idx] {
                hit = true;
                out[idx] = clamped;
            }
            idx += 1;
        }
    }
    (JointVector(out), hit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn one_finger_model() -> HandModel {
        HandModel {
            fingers: vec![FingerModel {
                base: Pose2::new(0.0, 0.0, 0.0),
                link_lengths: vec![1.0, 1.0],
                lower_limits: vec![-3.0, -3.0],
                upper_limits: vec![3.0, 3.0],
            }],
            fingertip_radius: 0.05,
        }
    }

    fn two_finger_model() -> HandModel {
        HandModel {
            fingers: vec![
                FingerModel {
                    base: Pose2::new(0.0, 0.0, 0.0),
                    link_lengths: vec![1.0, 1.0],
                    lower_limits: vec![-3.0, -3.0],
                    upper_limits: vec![3.0, 3.0],
                },
                FingerModel {
                    base: Pose2::new(1.0, -2.0, 1.3),
                    link_lengths: vec![0.7, 0.5, 0.3],
                    lower_limits: vec![-2.0, -2.0, -2.0],
                    upper_limits: vec![2.0, 2.0, 2.0],
                },
            ],
            fingertip_radius: 0.05,
        }
    }

    /// Independent oracle: chain 3×3 homogeneous transforms.
    fn fk_oracle(model: &HandModel, q: &JointVector, finger: usize) -> Pose2 {
        fn mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        }
        fn rot_trans(theta: f64, tx: f64, ty: f64) -> [[f64; 3]; 3] {
            [
                [theta.cos(), -theta.sin(), tx],
                [theta.sin(), theta.cos(), ty],
                [0.0, 0.0, 1.0],
            ]
        }
        let f = &model.fingers[finger];
        let span = model.joint_span(finger);
        let mut t = rot_trans(f.base.theta, f.base.x, f.base.y);
        let mut angle = f.base.theta;
        for (i, &len) in f.link_lengths.iter().enumerate() {
            let qi = q[span.start + i];
            angle += qi;
            t = mul(t, mul(rot_trans(qi, 0.0, 0.0), rot_trans(0.0, len, 0.0)));
        }
        Pose2::new(t[0][2], t[1][2], angle)
    }

    #[test]
    fn straight_chain_tip() {
        let model = one_finger_model();
        let poses = forward_kinematics(&model, &JointVector(vec![0.0, 0.0])).unwrap();
        assert!((poses[0].x - 2.0).abs() < 1e-15);
        assert!(poses[0].y.abs() < 1e-15);
        assert!(poses[0].theta.abs() < 1e-15);
    }

    #[test]
    fn rigid_rotation_tip() {
        let model = one_finger_model();
        let q = JointVector(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let poses = forward_kinematics(&model, &q).unwrap();
        assert!(poses[0].x.abs() < 1e-12);
        assert!((poses[0].y - 2.0).abs() < 1e-12);
        assert!((poses[0].theta - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn fk_matches_transform_product_oracle() {
        let model = two_finger_model();
        let mut rng = Rng::new(314);
        for _ in 0..50 {
            let q = JointVector((0..model.dof()).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
            let poses = forward_kinematics(&model, &q).unwrap();
            for fi in 0..model.n_fingers() {
                let oracle = fk_oracle(&model, &q, fi);
                assert!((poses[fi].x - oracle.x).abs() < 1e-12);
                assert!((poses[fi].y - oracle.y).abs() < 1e-12);
                assert!((poses[fi].theta - oracle.theta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_dimension_mismatch() {
        let model = one_finger_model();
        let err = forward_kinematics(&model, &JointVector(vec![0.0])).unwrap_err();
        assert_eq!(
            err,
            KinematicsError::DimensionMismatch { got: 1, expected: 2 }
        );
    }

    #[test]
    fn fk_is_pure_and_deterministic() {
        let model = two_finger_model();
        let q = JointVector(vec![0.3, -0.7, 1.1, 0.2, -0.4]);
        let a = forward_kinematics(&model, &q).unwrap();
        let b = forward_kinematics(&model, &q).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jacobian_straight_pose_exact() {
        let model = one_finger_model();
        let j = fingertip_jacobian(&model, &JointVector(vec![0.0, 0.0]), 0).unwrap();
        // tip (2,0); joint origins (0,0) and (1,0): columns perp((2,0)) and perp((1,0)).
        assert_eq!(j.row(0), &[0.0, 0.0]);
        assert_eq!(j.row(1), &[2.0, 1.0]);
    }

    fn fd_jacobian(model: &HandModel, q: &JointVector, finger: usize, h: f64) -> Mat {
        let span = model.joint_span(finger);
        let nj = span.len();
        let mut out = Mat::zeros(2, nj);
        for (jj, col) in span.clone().enumerate() {
            let mut qp = q.0.clone();
            let mut qm = q.0.clone();
            qp[col] += h;
            qm[col] -= h;
            let tp = fingertip_positions(model, &JointVector(qp)).unwrap()[finger];
            let tm = fingertip_positions(model, &JointVector(qm)).unwrap()[finger];
            out.set(0, jj, (tp[0] - tm[0]) / (2.0 * h));
            out.set(1, jj, (tp[1] - tm[1]) / (2.0 * h));
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = two_finger_model();
        let mut rng = Rng::new(99);
        let mut max_rel = 0.0_f64;
        for _ in 0..100 {
            let q = JointVector((0..model.dof()).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
            for fi in 0..model.n_fingers() {
                let ja = fingertip_jacobian(&model, &q, fi).unwrap();
                let jn = fd_jacobian(&model, &q, fi, 1e-6);
                let scale = ja.max_abs().max(1.0);
                for (a, n) in ja.data.iter().zip(&jn.data) {
                    max_rel = max_rel.max((a - n).abs() / scale);
                }
            }
        }
        assert!(max_rel <= 1e-5, "max rel err {max_rel}");
    }

    #[test]
    fn jacobian_at_fold_is_finite() {
        let model = one_finger_model();
        let j = fingertip_jacobian(&model, &JointVector(vec![0.0, std::f64::consts::PI]), 0)
            .unwrap();
        assert!(j.is_finite());
        // Folded chain: tip sits on the first joint axis, rank drops.
        assert!(j.get(0, 0).abs() < 1e-12 && j.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn invalid_finger_rejected() {
        let model = one_finger_model();
        let err = fingertip_jacobian(&model, &JointVector(vec![0.0, 0.0]), 3).unwrap_err();
        assert_eq!(err, KinematicsError::InvalidFinger(3));
    }

    #[test]
    fn contact_jacobian_empty_set() {
        let model = two_finger_model();
        let q = JointVector(vec![0.1; 5]);
        let j = contact_jacobian(&model, &q, &[]).unwrap();
        assert_eq!(j.rows, 0);
        assert_eq!(j.cols, 5);
    }

    #[test]
    fn contact_jacobian_block_structure() {
        let model = two_finger_model();
        let q = JointVector(vec![0.2, -0.3, 0.5, 0.1, -0.2]);
        let tips = fingertip_positions(&model, &q).unwrap();
        let c = Contact {
            finger: 0,
            position: tips[0],
            normal: [1.0, 0.0],
            force: 0.0,
        };
        let j = contact_jacobian(&model, &q, &[c]).unwrap();
        let block = fingertip_jacobian(&model, &q, 0).unwrap();
        for r in 0..2 {
            for col in 0..2 {
                assert_eq!(j.get(r, col), block.get(r, col));
            }
            // finger 1 columns are exactly zero
            for col in 2..5 {
                assert_eq!(j.get(r, col), 0.0);
            }
        }
    }

    #[test]
    fn contact_jacobian_rejects_duplicates_and_distance() {
        let model = two_finger_model();
        let q = JointVector(vec![0.0; 5]);
        let tips = fingertip_positions(&model, &q).unwrap();
        let near = Contact {
            finger: 0,
            position: tips[0],
            normal: [1.0, 0.0],
            force: 0.0,
        };
        let dup = near.clone();
        assert!(matches!(
            contact_jacobian(&model, &q, &[near.clone(), dup]),
            Err(KinematicsError::DuplicateContactFinger(0))
        ));
        let far = Contact {
            finger: 1,
            position: [tips[1][0] + 1.0, tips[1][1]],
            normal: [1.0, 0.0],
            force: 0.0,
        };
        assert!(matches!(
            contact_jacobian(&model, &q, &[far]),
            Err(KinematicsError::ContactTooFar { finger: 1, .. })
        ));
    }

    #[test]
    fn contact_jacobian_predicts_fd_displacement() {
        let model = two_finger_model();
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let q = JointVector((0..5).map(|_| rng.uniform_range(-1.5, 1.5)).collect());
            let tips = fingertip_positions(&model, &q).unwrap();
            let contacts: Vec<Contact> = (0..2)
                .map(|f| Contact {
                    finger: f,
                    position: tips[f],
                    normal: [0.0, 1.0],
                    force: 0.0,
                })
                .collect();
            let j = contact_jacobian(&model, &q, &contacts).unwrap();
            let dq: Vec<f64> = (0..5).map(|_| rng.uniform_range(-1.0, 1.0) * 1e-6).collect();
            let predicted = j.matvec(&dq);
            let q2 = JointVector(q.0.iter().zip(&dq).map(|(a, b)| a + b).collect());
            let tips2 = fingertip_positions(&model, &q2).unwrap();
            for (ci, c) in contacts.iter().enumerate() {
                let actual = [
                    tips2[c.finger][0] - tips[c.finger][0],
                    tips2[c.finger][1] - tips[c.finger][1],
                ];
                for r in 0..2 {
                    let err = (predicted[2 * ci + r] - actual[r]).abs();
                    assert!(err <= 1e-4 * 1e-6_f64.max(actual[r].abs()) + 1e-14);
                }
            }
        }
    }

    #[test]
    fn grasp_map_zero_moment_arm() {
        let c = Contact {
            finger: 0,
            position: [0.3, -0.2],
            normal: [1.0, 0.0],
            force: 1.0,
        };
        let g = grasp_map([0.3, -0.2], &[c]).unwrap();
        assert_eq!(g.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn grasp_map_unit_moment_arm() {
        let c = Contact {
            finger: 0,
            position: [1.0, 0.0],
            normal: [0.0, 1.0],
            force: 1.0,
        };
        let g = grasp_map([0.0, 0.0], &[c]).unwrap();
        let w = g.matvec(&[0.0, 1.0]);
        assert_eq!(w, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn grasp_map_matches_summation_oracle() {
        let mut rng = Rng::new(2024);
        for _ in 0..50 {
            let o = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let contacts: Vec<Contact> = (0..3)
                .map(|f| Contact {
                    finger: f,
                    position: [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)],
                    normal: [1.0, 0.0],
                    force: 0.0,
                })
                .collect();
            let forces: Vec<f64> = (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let g = grasp_map(o, &contacts).unwrap();
            let w = g.matvec(&forces);
            // Independent per-contact wrench summation.
            let mut expect = [0.0; 3];
            for (ci, c) in contacts.iter().enumerate() {
                let f = [forces[2 * ci], forces[2 * ci + 1]];
                expect[0] += f[0];
                expect[1] += f[1];
                expect[2] += (c.position[0] - o[0]) * f[1] - (c.position[1] - o[1]) * f[0];
            }
            for r in 0..3 {
                assert!((w[r] - expect[r]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn clamp_behaviour() {
        let model = one_finger_model();
        let (q, hit) = clamp_to_limits(&model, &JointVector(vec![0.5, -0.5]));
        assert_eq!(q.0, vec![0.5, -0.5]);
        assert!(!hit);
        let (q, hit) = clamp_to_limits(&model, &JointVector(vec![3.5, -0.5]));
        assert_eq!(q.0, vec![3.0, -0.5]);
        assert!(hit);
        let (q, hit) = clamp_to_limits(&model, &JointVector(vec![-9.0, -9.0]));
        assert_eq!(q.0, vec![-3.0, -3.0]);
        assert!(hit);
    }

    #[test]
    fn default_hand_is_valid() {
        let hand = HandModel::default_hand();
        hand.validate().unwrap();
        assert_eq!(hand.dof(), 8);
        assert_eq!(hand.n_fingers(), 4);
    }
}
