//! Closed-form inverse kinematics for the 3- and 4-link planar arms used by
//! the scenarios.

use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

use super::model::RobotModel;
use crate::geometry::{wrap_angle, Twist2, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum IkError {
    #[error("target out of reach")]
    Unreachable,
    #[error("solution violates joint limits at joint {0}")]
    JointLimit(usize),
    #[error("closed-form IK supports 3 or 4 links (got {0})")]
    Unsupported(usize),
    #[error("Jacobian is singular at the requested pose")]
    Singular,
}

/// Two-link IK: angles `(a, b)` with `a` absolute w.r.t. `heading` and `b`
/// relative, reaching `target` from `origin`.
fn two_link(origin: Vec2, heading: f64, l1: f64, l2: f64, target: Vec2, elbow: f64) -> Result<(f64, f64), IkError> {
    let d = target - origin;
    let dist2 = d.norm_squared();
    let c = (dist2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c) {
        return Err(IkError::Unreachable);
    }
    let b = elbow.signum() * c.acos();
    let a = d.y.atan2(d.x) - (l2 * b.sin()).atan2(l1 + l2 * b.cos()) - heading;
    Ok((wrap_angle(a), b))
}

/// Joint configuration placing the end effector at `(p, theta)`.
///
/// For 4-link arms the first joint is fixed at `xi`; 3-link arms ignore it.
/// `elbow` picks the sign of the elbow joint.
pub fn solve_pose(model: &RobotModel, p: Vec2, theta: f64, xi: f64, elbow: f64) -> Result<DVector<f64>, IkError> {
    let n = model.n_links();
    let l = &model.link_lengths;
    let base = model.base_pose;
    let wrist = p - l[n - 1] * Vec2::new(theta.cos(), theta.sin());
    let q = match n {
        4 => {
            let phi1 = base.theta + xi;
            let elbow_pt = base.position() + l[0] * Vec2::new(phi1.cos(), phi1.sin());
            let (a, b) = two_link(elbow_pt, phi1, l[1], l[2], wrist, elbow)?;
            let q4 = wrap_angle(theta - phi1 - a - b);
            DVector::from_vec(vec![xi, a, b, q4])
        }
        3 => {
            let (a, b) = two_link(base.position(), base.theta, l[0], l[1], wrist, elbow)?;
            let q3 = wrap_angle(theta - base.theta - a - b);
            DVector::from_vec(vec![a, b, q3])
        }
        other => return Err(IkError::Unsupported(other)),
    };
    if let Some(k) = (0..n).find(|&k| q[k] < model.q_min[k] || q[k] > model.q_max[k]) {
        return Err(IkError::JointLimit(k));
    }
    Ok(q)
}

/// Joint velocities realising `twist` at `q`; 4-link arms keep the first
/// joint still.
pub fn joint_velocity_for_twist(model: &RobotModel, q: &DVector<f64>, twist: Twist2) -> Result<DVector<f64>, IkError> {
    let n = model.n_links();
    let jac = model.geometric_jacobian(q);
    let skip = match n {
        4 => 1,
        3 => 0,
        other => return Err(IkError::Unsupported(other)),
    };
    let sub = Matrix3::from_fn(|r, c| jac[(r, c + skip)]);
    let lu = sub.lu();
    let x = lu
        .solve(&Vector3::new(twist.vx, twist.vy, twist.omega))
        .ok_or(IkError::Singular)?;
    let mut dq = DVector::zeros(n);
    for k in 0..3 {
        dq[k + skip] = x[k];
    }
    Ok(dq)
}
