//! Kinematics and rigid-body dynamics of planar revolute chains.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3xX, Vector3};

use super::model::RobotModel;
use crate::geometry::{perp, wrap_angle, Vec2};

/// Absolute link angles `phi_k = theta_base + sum_{j<=k} q_j`.
fn absolute_angles(model: &RobotModel, q: &DVector<f64>) -> Vec<f64> {
    let mut phi = model.base_pose.theta;
    q.iter()
        .map(|qk| {
            phi += qk;
            phi
        })
        .collect()
}

/// Positions of the joint axes (start of each link) followed by the end point.
fn joint_positions(model: &RobotModel, phi: &[f64]) -> Vec<Vec2> {
    let mut p = model.base_pose.position();
    let mut out = Vec::with_capacity(phi.len() + 1);
    out.push(p);
    for (l, a) in model.link_lengths.iter().zip(phi) {
        p += *l * Vec2::new(a.cos(), a.sin());
        out.push(p);
    }
    out
}

/// World positions of every link's centre of mass.
pub fn link_com_positions(model: &RobotModel, q: &DVector<f64>) -> Vec<Vec2> {
    let phi = absolute_angles(model, q);
    let joints = joint_positions(model, &phi);
    phi.iter()
        .enumerate()
        .map(|(k, a)| joints[k] + model.com_offsets[k] * Vec2::new(a.cos(), a.sin()))
        .collect()
}

/// Linear Jacobian of a point attached to link `k` (columns beyond `k` are zero).
fn point_jacobian(joints: &[Vec2], k: usize, point: &Vec2, n: usize) -> DMatrix<f64> {
    let mut jv = DMatrix::zeros(2, n);
    for j in 0..=k {
        let c = perp(&(point - joints[j]));
        jv[(0, j)] = c.x;
        jv[(1, j)] = c.y;
    }
    jv
}

impl RobotModel {
    /// End-effector position and orientation, orientation wrapped to `(-pi, pi]`.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> (Vec2, f64) {
        let phi = absolute_angles(self, q);
        let joints = joint_positions(self, &phi);
        (joints[joints.len() - 1], wrap_angle(phi[phi.len() - 1]))
    }

    /// Rows map `dq` to the end-effector twist `(vx, vy, omega)`.
    pub fn geometric_jacobian(&self, q: &DVector<f64>) -> Matrix3xX<f64> {
        let n = self.n_links();
        let phi = absolute_angles(self, q);
        let joints = joint_positions(self, &phi);
        let ee = joints[n];
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..n {
            let c = perp(&(ee - joints[j]));
            jac[(0, j)] = c.x;
            jac[(1, j)] = c.y;
            jac[(2, j)] = 1.0;
        }
        jac
    }

    /// The velocity-product term `Jdot * dq` of the end-effector acceleration.
    pub fn jacobian_dot_qdot(&self, q: &DVector<f64>, dq: &DVector<f64>) -> Vector3<f64> {
        let phi = absolute_angles(self, q);
        let mut rate = 0.0;
        let mut acc = Vec2::zeros();
        for (k, a) in phi.iter().enumerate() {
            rate += dq[k];
            acc -= self.link_lengths[k] * rate * rate * Vec2::new(a.cos(), a.sin());
        }
        Vector3::new(acc.x, acc.y, 0.0)
    }

    /// Link-side mass matrix `M(q)` (without motor inertia).
    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_links();
        let phi = absolute_angles(self, q);
        let joints = joint_positions(self, &phi);
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let com = joints[k] + self.com_offsets[k] * Vec2::new(phi[k].cos(), phi[k].sin());
            let jv = point_jacobian(&joints, k, &com, n);
            m += self.link_masses[k] * jv.transpose() * &jv;
            // angular Jacobian of link k is ones up to k
            for i in 0..=k {
                for j in 0..=k {
                    m[(i, j)] += self.link_inertias[k];
                }
            }
        }
        // symmetrise away rounding
        let mt = m.transpose();
        (m + mt) * 0.5
    }

    /// `M(q) + B_theta`, the inertia seen by commanded torques.
    pub fn joint_space_inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.mass_matrix(q);
        for (k, b) in self.motor_inertia.iter().enumerate() {
            m[(k, k)] += b;
        }
        m
    }

    /// Centrifugal, Coriolis and gravity torques `h(q, dq)` for an in-plane
    /// gravity vector.
    pub fn bias_forces(&self, q: &DVector<f64>, dq: &DVector<f64>, gravity: &Vec2) -> DVector<f64> {
        let n = self.n_links();
        let phi = absolute_angles(self, q);
        let joints = joint_positions(self, &phi);
        let mut h = DVector::zeros(n);
        // quadratic velocity acceleration of the link origin, accumulated outward
        let mut origin_acc = Vec2::zeros();
        let mut rate = 0.0;
        for k in 0..n {
            rate += dq[k];
            let axis = Vec2::new(phi[k].cos(), phi[k].sin());
            let com = joints[k] + self.com_offsets[k] * axis;
            let com_acc = origin_acc - self.com_offsets[k] * rate * rate * axis;
            let jv = point_jacobian(&joints, k, &com, n);
            let force = self.link_masses[k] * (com_acc - gravity);
            h += jv.transpose() * nalgebra::Vector2::new(force.x, force.y);
            origin_acc -= self.link_lengths[k] * rate * rate * axis;
        }
        h
    }

    /// Static gravity torque, i.e. `h(q, 0)`.
    pub fn gravity_torque(&self, q: &DVector<f64>, gravity: &Vec2) -> DVector<f64> {
        self.bias_forces(q, &DVector::zeros(self.n_links()), gravity)
    }

    /// Kinetic energy `0.5 dq^T (M + B) dq`.
    pub fn kinetic_energy(&self, q: &DVector<f64>, dq: &DVector<f64>) -> f64 {
        0.5 * dq.dot(&(self.joint_space_inertia(q) * dq))
    }

    /// Inverse of the end-effector task-space inertia, `J (M + B)^-1 J^T`.
    pub fn task_space_inverse_inertia(&self, q: &DVector<f64>) -> nalgebra::Matrix3<f64> {
        let jac = self.geometric_jacobian(q);
        let chol = Cholesky::new(self.joint_space_inertia(q)).expect("mass matrix is positive definite");
        let jt: DMatrix<f64> = jac.transpose().resize(self.n_links(), 3, 0.0);
        let x = chol.solve(&jt);
        let lam_inv = jac * x;
        nalgebra::Matrix3::from_iterator(lam_inv.iter().copied())
    }

    /// Columns of the Jacobian of the end-effector disc point offset by
    /// `offset` (world frame) from the end-effector origin.
    pub fn offset_point_jacobian(&self, q: &DVector<f64>, offset: &Vec2) -> nalgebra::OMatrix<f64, nalgebra::U2, Dyn> {
        let jac = self.geometric_jacobian(q);
        let n = self.n_links();
        let lever = perp(offset);
        let mut out = nalgebra::OMatrix::<f64, nalgebra::U2, Dyn>::zeros(n);
        for j in 0..n {
            out[(0, j)] = jac[(0, j)] + lever.x * jac[(2, j)];
            out[(1, j)] = jac[(1, j)] + lever.y * jac[(2, j)];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn two_link() -> RobotModel {
        RobotModel::uniform_rods(&[0.7, 0.5], &[2.0, 1.5], &[0.0, 0.0], Pose2::default())
    }

    #[test]
    fn point_mass_pendulum() {
        let mut m = RobotModel::uniform_rods(&[0.8], &[2.0], &[0.0], Pose2::default());
        m.com_offsets = vec![0.8];
        m.link_inertias = vec![1e-300];
        for q in [0.0, 0.4, -2.0] {
            let mm = m.mass_matrix(&DVector::from_vec(vec![q]));
            assert_relative_eq!(mm[(0, 0)], 2.0 * 0.64, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_link_jacobian() {
        let m = RobotModel::uniform_rods(&[1.0], &[1.0], &[0.0], Pose2::default());
        let j = m.geometric_jacobian(&DVector::from_vec(vec![0.0]));
        assert_relative_eq!(j[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(j[(1, 0)], 1.0);
        assert_relative_eq!(j[(2, 0)], 1.0);
    }

    #[test]
    fn forward_kinematics_presets() {
        let base = Pose2::new(0.1, -0.2, 0.3);
        let mut m = two_link();
        m.base_pose = base;
        let (p, th) = m.forward_kinematics(&DVector::zeros(2));
        let along = Vec2::new(0.3f64.cos(), 0.3f64.sin()) * 1.2;
        assert_relative_eq!(p, base.position() + along, epsilon = 1e-12);
        assert_relative_eq!(th, 0.3);

        let m = two_link();
        let (p, _) = m.forward_kinematics(&DVector::from_vec(vec![PI / 2.0, -PI / 2.0]));
        assert_relative_eq!(p, Vec2::new(0.5, 0.7), epsilon = 1e-12);
    }

    #[test]
    fn single_link_centripetal() {
        let m = RobotModel::uniform_rods(&[0.6], &[1.0], &[0.0], Pose2::default());
        let q = 0.7;
        let dq = 1.3;
        let a = m.jacobian_dot_qdot(&DVector::from_vec(vec![q]), &DVector::from_vec(vec![dq]));
        assert_relative_eq!(a.x, -0.6 * dq * dq * q.cos(), epsilon = 1e-12);
        assert_relative_eq!(a.y, -0.6 * dq * dq * q.sin(), epsilon = 1e-12);
        assert_eq!(m.jacobian_dot_qdot(&DVector::from_vec(vec![q]), &DVector::zeros(1)), Vector3::zeros());
    }

    #[test]
    fn zero_state_has_zero_bias() {
        let m = two_link();
        let h = m.bias_forces(&DVector::from_vec(vec![0.3, 0.2]), &DVector::zeros(2), &Vec2::zeros());
        assert_eq!(h, DVector::zeros(2));
    }

    #[test]
    fn coupling_term_depends_on_elbow() {
        let m = two_link();
        let m0 = m.mass_matrix(&DVector::from_vec(vec![0.0, 0.0]));
        let mpi = m.mass_matrix(&DVector::from_vec(vec![0.0, PI]));
        // M11 = ... + 2 m2 l1 c2 cos(q2); difference is 4 m2 l1 c2
        assert_relative_eq!(m0[(0, 0)] - mpi[(0, 0)], 4.0 * 1.5 * 0.7 * 0.25, epsilon = 1e-12);
    }
}
