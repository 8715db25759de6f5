//! Disc-versus-rectangle contact geometry and the projected Gauss-Seidel
//! impulse solver.

use nalgebra::{DMatrix, DVector};

use crate::geometry::{rotation, Pose2, Vec2};

/// Closest-feature query between the end-effector disc and an object face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactGeometry {
    /// Unit normal pointing from the object into the disc.
    pub normal: Vec2,
    /// Signed separation; negative means interpenetration.
    pub gap: f64,
    /// Contact point on the disc surface (world frame).
    pub point: Vec2,
}

/// Contact between a disc (`center`, `radius`) and a rectangle with the given
/// pose and half extents.
pub fn disc_rectangle_contact(
    center: &Vec2,
    radius: f64,
    rect: &Pose2,
    half_extents: [f64; 2],
) -> ContactGeometry {
    let rot = rotation(rect.theta);
    let local = rot.transpose() * (center - rect.position());
    let [hx, hy] = half_extents;
    let inside = local.x.abs() <= hx && local.y.abs() <= hy;
    let (normal_local, dist) = if inside {
        // push out through the nearest face
        let dx = hx - local.x.abs();
        let dy = hy - local.y.abs();
        if dx <= dy {
            (Vec2::new(local.x.signum().max(0.0) * 2.0 - 1.0, 0.0), -dx)
        } else {
            (Vec2::new(0.0, local.y.signum().max(0.0) * 2.0 - 1.0), -dy)
        }
    } else {
        let closest = Vec2::new(local.x.clamp(-hx, hx), local.y.clamp(-hy, hy));
        let d = local - closest;
        let norm = d.norm();
        (d / norm, norm)
    };
    let normal = rot * normal_local;
    ContactGeometry {
        normal,
        gap: dist - radius,
        point: center - radius * normal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum RowKind {
    /// Non-penetration, `lambda >= 0`.
    Normal,
    /// Coulomb friction bounded by the referenced normal row.
    Tangent { normal_row: usize, mu: f64 },
    /// One axis of the isotropic object-ground friction impulse; `partner`
    /// is the other axis, both projected onto a disc of radius `limit`.
    GroundLinear { partner: usize, limit: f64 },
    /// Object-ground torsional friction.
    GroundTorsion { limit: f64 },
}

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub jac: DVector<f64>,
    pub target: f64,
    pub kind: RowKind,
}

#[derive(Debug)]
pub(crate) struct PgsOutcome {
    pub impulses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the velocity-level complementarity problem for the given rows.
///
/// `inv_mass_jt` holds `M^-1 J_i^T` per row. Iteration stops once the largest
/// impulse change in a sweep drops below `tol`.
pub(crate) fn projected_gauss_seidel(
    rows: &[Row],
    inv_mass_jt: &[DVector<f64>],
    u_free: &DVector<f64>,
    warm: &[f64],
    max_iter: usize,
    tol: f64,
) -> PgsOutcome {
    let m = rows.len();
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            w[(i, j)] = rows[i].jac.dot(&inv_mass_jt[j]);
        }
    }
    let free: Vec<f64> = rows.iter().map(|r| r.jac.dot(u_free)).collect();
    let mut lambda: Vec<f64> = warm.to_vec();
    lambda.resize(m, 0.0);
    // warm starts must already be admissible
    project_all(rows, &mut lambda);

    let velocity = |lambda: &[f64], i: usize| -> f64 {
        free[i] + (0..m).map(|j| w[(i, j)] * lambda[j]).sum::<f64>()
    };

    for iter in 1..=max_iter {
        let mut max_change: f64 = 0.0;
        let mut i = 0;
        while i < m {
            let wii = w[(i, i)];
            match rows[i].kind {
                RowKind::Normal => {
                    let v = velocity(&lambda, i);
                    let new = (lambda[i] + (rows[i].target - v) / wii).max(0.0);
                    max_change = max_change.max((new - lambda[i]).abs());
                    lambda[i] = new;
                }
                RowKind::Tangent { normal_row, mu } => {
                    let v = velocity(&lambda, i);
                    let bound = mu * lambda[normal_row];
                    let new = (lambda[i] + (rows[i].target - v) / wii).clamp(-bound, bound);
                    max_change = max_change.max((new - lambda[i]).abs());
                    lambda[i] = new;
                }
                RowKind::GroundLinear { partner, limit } if partner > i => {
                    let j = partner;
                    let vi = velocity(&lambda, i);
                    let vj = velocity(&lambda, j);
                    let mut a = lambda[i] + (rows[i].target - vi) / wii;
                    let mut b = lambda[j] + (rows[j].target - vj) / w[(j, j)];
                    let norm = a.hypot(b);
                    if norm > limit {
                        a *= limit / norm;
                        b *= limit / norm;
                    }
                    max_change = max_change
                        .max((a - lambda[i]).abs())
                        .max((b - lambda[j]).abs());
                    lambda[i] = a;
                    lambda[j] = b;
                }
                RowKind::GroundLinear { .. } => {}
                RowKind::GroundTorsion { limit } => {
                    let v = velocity(&lambda, i);
                    let new = (lambda[i] + (rows[i].target - v) / wii).clamp(-limit, limit);
                    max_change = max_change.max((new - lambda[i]).abs());
                    lambda[i] = new;
                }
            }
            i += 1;
        }
        if max_change < tol {
            return PgsOutcome {
                impulses: lambda,
                iterations: iter,
                converged: true,
            };
        }
    }
    PgsOutcome {
        impulses: lambda,
        iterations: max_iter,
        converged: false,
    }
}

fn project_all(rows: &[Row], lambda: &mut [f64]) {
    for i in 0..rows.len() {
        match rows[i].kind {
            RowKind::Normal => lambda[i] = lambda[i].max(0.0),
            RowKind::Tangent { normal_row, mu } => {
                let b = mu * lambda[normal_row].max(0.0);
                lambda[i] = lambda[i].clamp(-b, b);
            }
            RowKind::GroundLinear { partner, limit } if partner > i => {
                let norm = lambda[i].hypot(lambda[partner]);
                if norm > limit {
                    lambda[i] *= limit / norm;
                    lambda[partner] *= limit / norm;
                }
            }
            RowKind::GroundLinear { .. } => {}
            RowKind::GroundTorsion { limit } => lambda[i] = lambda[i].clamp(-limit, limit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disc_above_top_face() {
        let c = disc_rectangle_contact(
            &Vec2::new(0.05, 0.2 + 0.02 + 0.001),
            0.02,
            &Pose2::default(),
            [0.1, 0.2],
        );
        assert_relative_eq!(c.normal, Vec2::new(0.0, 1.0));
        assert_relative_eq!(c.gap, 0.001, epsilon = 1e-12);
        assert_relative_eq!((c.normal.norm() - 1.0).abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_rectangle_and_penetration() {
        let rect = Pose2::new(1.0, 1.0, std::f64::consts::FRAC_PI_2);
        // local +x face now faces world +y
        let c = disc_rectangle_contact(&Vec2::new(1.0, 1.0 + 0.1 + 0.015), 0.02, &rect, [0.1, 0.3]);
        assert_relative_eq!(c.normal, Vec2::new(0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(c.gap, -0.005, epsilon = 1e-12);
        let deep = disc_rectangle_contact(&Vec2::new(0.0, 0.09), 0.02, &Pose2::default(), [0.3, 0.1]);
        assert_relative_eq!(deep.normal, Vec2::new(0.0, 1.0));
        assert_relative_eq!(deep.gap, -0.03, epsilon = 1e-12);
    }

    #[test]
    fn prismatic_pusher_momentum() {
        // generalised velocities (pusher, object); one normal row closing the gap
        let (mr, mo, v) = (3.0, 2.0, 0.7);
        let rows = vec![Row {
            jac: DVector::from_vec(vec![-1.0, 1.0]),
            target: 0.0,
            kind: RowKind::Normal,
        }];
        let minv_jt = vec![DVector::from_vec(vec![-1.0 / mr, 1.0 / mo])];
        let u = DVector::from_vec(vec![v, 0.0]);
        let out = projected_gauss_seidel(&rows, &minv_jt, &u, &[], 200, 1e-14);
        assert!(out.converged);
        let post = &u + &minv_jt[0] * out.impulses[0];
        let common = mr * v / (mr + mo);
        assert_relative_eq!(post[0], common, epsilon = 1e-12);
        assert_relative_eq!(post[1], common, epsilon = 1e-12);
    }
}
