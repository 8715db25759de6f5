//! QP oracles shared by integration tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tirs_core::qp::{ConstraintRow, QpProblem};

/// Random strictly convex problem with a known feasible point.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = a.transpose() * &a + DMatrix::identity(n, n) * rng.gen_range(0.1..1.0);
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
    let rows = (0..m)
        .map(|_| {
            let a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = a.dot(&x0);
            let (lo, hi) = (v - rng.gen_range(0.0..0.5), v + rng.gen_range(0.0..0.5));
            match rng.gen_range(0..3) {
                0 => ConstraintRow { a, lb: lo, ub: f64::INFINITY },
                1 => ConstraintRow { a, lb: f64::NEG_INFINITY, ub: hi },
                _ => ConstraintRow { a, lb: lo, ub: hi },
            }
        })
        .collect();
    QpProblem::new(h, g, rows)
}

/// Accelerated projected gradient on the dual with split nonnegative
/// multipliers; returns the dual objective (a lower bound on the optimum).
pub fn projected_gradient_dual(p: &QpProblem) -> f64 {
    let hinv = p.regularized_hessian().try_inverse().unwrap();
    let mut cols = Vec::new();
    let mut rhs = Vec::new();
    for r in &p.rows {
        if r.lb.is_finite() {
            cols.push(r.a.clone());
            rhs.push(r.lb);
        }
        if r.ub.is_finite() {
            cols.push(-&r.a);
            rhs.push(-r.ub);
        }
    }
    let unconstrained = -0.5 * p.g.dot(&(&hinv * &p.g));
    if cols.is_empty() {
        return unconstrained;
    }
    let c = DMatrix::from_columns(&cols).transpose();
    let d = DVector::from_vec(rhs);
    let q = &c * &hinv * c.transpose();
    let lin = &d + &c * &hinv * &p.g;
    // dual(mu) = -0.5 mu'Q mu + lin'mu + unconstrained
    let dual = |mu: &DVector<f64>| -0.5 * mu.dot(&(&q * mu)) + lin.dot(mu) + unconstrained;
    let lip = q.clone().symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let m = d.len();
    let mut mu = DVector::<f64>::zeros(m);
    let mut y = mu.clone();
    let mut t = 1.0f64;
    let mut checkpoint = dual(&mu);
    for k in 1..=200_000 {
        let grad = &lin - &q * &y;
        let next = (&y + &grad * step).map(|v| v.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // gradient-based restart keeps the iteration monotone in practice
        if grad.dot(&(&next - &mu)) < 0.0 {
            y = mu.clone();
            t = 1.0;
            continue;
        }
        y = &next + (&next - &mu) * ((t - 1.0) / t_next);
        mu = next;
        t = t_next;
        if k % 200 == 0 {
            let val = dual(&mu);
            if val - checkpoint <= 1e-13 * (1.0 + val.abs()) {
                break;
            }
            checkpoint = val;
        }
    }
    dual(&mu)
}
