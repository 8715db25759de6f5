use nalgebra::{DMatrix, DVector, Matrix2, Matrix3xX, Vector3};

use crate::dynamics::{RobotModel, RobotState};
use crate::geometry::{wrap_angle, Vec2};
use crate::qp::{ConstraintRow, QpProblem};

/// Kinematic and dynamic quantities of one arm at the current state.
#[derive(Clone, Debug)]
pub struct ArmSnapshot {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub p: Vec2,
    pub theta: f64,
    /// End-effector twist `(vx, vy, omega)`.
    pub v: Vector3<f64>,
    pub jac: Matrix3xX<f64>,
    pub jdot_qdot: Vector3<f64>,
    /// `M + B`.
    pub inertia: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl ArmSnapshot {
    pub fn new(model: &RobotModel, state: &RobotState, gravity: &Vec2) -> Self {
        let (p, theta) = model.forward_kinematics(&state.q);
        let jac = model.geometric_jacobian(&state.q);
        let v = &jac * &state.dq;
        Self {
            q: state.q.clone(),
            dq: state.dq.clone(),
            p,
            theta,
            v: Vector3::new(v[0], v[1], v[2]),
            jdot_qdot: model.jacobian_dot_qdot(&state.q, &state.dq),
            inertia: model.joint_space_inertia(&state.q),
            bias: model.bias_forces(&state.q, &state.dq, gravity),
            jac,
        }
    }

    pub fn linear_velocity(&self) -> Vec2 {
        Vec2::new(self.v[0], self.v[1])
    }

    /// `J (M + B)^-1 J^T`.
    pub fn inverse_task_inertia(&self) -> nalgebra::Matrix3<f64> {
        let chol = self.inertia.clone().cholesky().expect("joint-space inertia is positive definite");
        let x = chol.solve(&DMatrix::from_iterator(self.jac.ncols(), 3, self.jac.transpose().iter().copied()));
        let prod = &self.jac * x;
        nalgebra::Matrix3::from_fn(|r, c| prod[(r, c)])
    }

    /// Commanded torque for joint accelerations `ddq`.
    pub fn torque(&self, ddq: &DVector<f64>) -> DVector<f64> {
        &self.inertia * ddq + &self.bias
    }
}

/// Reflection across the plane midway between two parallel faces with
/// normal `n`.
pub fn mirror_operator(n: &Vec2) -> Matrix2<f64> {
    let n = n.normalize();
    Matrix2::identity() - 2.0 * n * n.transpose()
}

/// `T (p - center) + center`.
pub fn mirror_point(t: &Matrix2<f64>, p: Vec2, center: Vec2) -> Vec2 {
    t * (p - center) + center
}

/// Target linear acceleration of robot `i`'s synchronisation task, given
/// its own and its partner's positions and velocities.
pub fn sync_target(k_sync: f64, t: &Matrix2<f64>, center: Vec2, own: (Vec2, Vec2), partner: (Vec2, Vec2)) -> Vec2 {
    let p_m = mirror_point(t, partner.0, center);
    let v_m = t * partner.1;
    k_sync * (p_m - own.0) + 2.0 * k_sync.sqrt() * (v_m - own.1)
}

/// Orientation error `wrap(theta_d - theta)` used for pose feedback.
pub fn orientation_error(theta: f64, theta_d: f64) -> f64 {
    wrap_angle(theta_d - theta)
}

/// Quadratic cost accumulator for one arm's decision block.
pub struct CostBlock {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl CostBlock {
    pub fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
        }
    }

    /// Adds `w |A x - b|^2` (constant dropped).
    pub fn add_least_squares(&mut self, w: f64, a: &DMatrix<f64>, b: &DVector<f64>) {
        if w == 0.0 {
            return;
        }
        self.h += a.transpose() * a * (2.0 * w);
        self.g -= a.transpose() * b * (2.0 * w);
    }
}

/// Joint position, velocity and torque limit rows for one arm, over
/// decision columns `offset..offset + n` of a `dim`-sized problem.
pub fn limit_rows(model: &RobotModel, arm: &ArmSnapshot, dt: f64, offset: usize, dim: usize) -> Vec<ConstraintRow> {
    let n = model.n_links();
    let mut rows = Vec::with_capacity(3 * n);
    let unit = |j: usize| {
        let mut a = DVector::zeros(dim);
        a[offset + j] = 1.0;
        a
    };
    let half_dt2 = 0.5 * dt * dt;
    for j in 0..n {
        let drift = arm.q[j] + arm.dq[j] * dt;
        rows.push(ConstraintRow {
            a: unit(j),
            lb: (model.q_min[j] - drift) / half_dt2,
            ub: (model.q_max[j] - drift) / half_dt2,
        });
    }
    for j in 0..n {
        rows.push(ConstraintRow {
            a: unit(j),
            lb: (model.dq_min[j] - arm.dq[j]) / dt,
            ub: (model.dq_max[j] - arm.dq[j]) / dt,
        });
    }
    for j in 0..n {
        let mut a = DVector::zeros(dim);
        for c in 0..n {
            a[offset + c] = arm.inertia[(j, c)];
        }
        rows.push(ConstraintRow {
            a,
            lb: model.tau_min[j] - arm.bias[j],
            ub: model.tau_max[j] - arm.bias[j],
        });
    }
    rows
}

/// Stacks per-arm cost blocks into one block-diagonal problem.
pub fn assemble(blocks: Vec<CostBlock>, rows: Vec<ConstraintRow>) -> QpProblem {
    let dim: usize = blocks.iter().map(|b| b.g.len()).sum();
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    let mut at = 0;
    for b in blocks {
        let n = b.g.len();
        h.view_mut((at, at), (n, n)).copy_from(&b.h);
        g.rows_mut(at, n).copy_from(&b.g);
        at += n;
    }
    QpProblem::new(h, g, rows)
}
