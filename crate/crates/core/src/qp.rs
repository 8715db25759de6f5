//! Dense strictly convex QP with two-sided linear constraints,
//!
//! ```text
//! min 0.5 x'Hx + g'x   s.t.   lb_i <= a_i'x <= ub_i
//! ```
//!
//! solved by the Goldfarb-Idnani dual active-set method. Infinite bounds
//! drop the corresponding side.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 200;

/// Relative size of the diagonal shift added to `H`.
pub const REGULARIZATION: f64 = 1e-8;

const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("row {0} has lb > ub")]
    Bounds(usize),
    #[error("Hessian is not positive definite after regularization")]
    NotConvex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub a: DVector<f64>,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub rows: Vec<ConstraintRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationCap,
}

/// Which side of a two-sided row is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Active rows in the order they entered.
    pub active_set: Vec<(usize, Side)>,
    /// Signed row multipliers: positive on an active lower bound, negative
    /// on an active upper bound.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, rows: Vec<ConstraintRow>) -> Self {
        Self { h, g, rows }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.h.shape() != (n, n) {
            return Err(QpError::Dimension(format!("H is {:?}, g has {n} entries", self.h.shape())));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != n {
                return Err(QpError::Dimension(format!("row {i} has {} entries, expected {n}", r.a.len())));
            }
            if r.lb > r.ub || r.lb.is_nan() || r.ub.is_nan() {
                return Err(QpError::Bounds(i));
            }
        }
        Ok(())
    }

    /// `H + eps I` with `eps = 1e-8 tr(H) / n`; this is the Hessian the
    /// solver actually minimises.
    pub fn regularized_hessian(&self) -> DMatrix<f64> {
        let n = self.dim();
        let eps = REGULARIZATION * self.h.trace().abs() / n.max(1) as f64;
        let sym = (&self.h + self.h.transpose()) * 0.5;
        sym + DMatrix::identity(n, n) * eps
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(self.regularized_hessian() * x)) + self.g.dot(x)
    }

    /// Largest bound violation over all rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let v = r.a.dot(x);
                (r.lb - v).max(v - r.ub).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// One-sided constraint `n'x >= b` derived from a row side.
#[derive(Clone, Copy)]
struct Half {
    row: usize,
    side: Side,
}

impl Half {
    fn normal(&self, p: &QpProblem) -> DVector<f64> {
        match self.side {
            Side::Lower => p.rows[self.row].a.clone(),
            Side::Upper => -&p.rows[self.row].a,
        }
    }

    fn rhs(&self, p: &QpProblem) -> f64 {
        match self.side {
            Side::Lower => p.rows[self.row].lb,
            Side::Upper => -p.rows[self.row].ub,
        }
    }

    fn slack(&self, p: &QpProblem, x: &DVector<f64>) -> f64 {
        let v = p.rows[self.row].a.dot(x);
        match self.side {
            Side::Lower => v - p.rows[self.row].lb,
            Side::Upper => p.rows[self.row].ub - v,
        }
    }

    fn tolerance(&self, p: &QpProblem) -> f64 {
        FEAS_TOL * (1.0 + self.rhs(p).abs())
    }
}

struct ActiveSolve {
    /// Primal step direction `H^-1 (I - N N*) n_p`.
    z: DVector<f64>,
    /// Multiplier sensitivity `N* n_p`.
    r: DVector<f64>,
}

fn active_directions(hinv: &DMatrix<f64>, normals: &[DVector<f64>], np: &DVector<f64>) -> Option<ActiveSolve> {
    let hn = hinv * np;
    if normals.is_empty() {
        return Some(ActiveSolve {
            z: hn,
            r: DVector::zeros(0),
        });
    }
    let n_mat = DMatrix::from_columns(normals);
    let hinv_n = hinv * &n_mat;
    let gram = n_mat.transpose() * &hinv_n;
    let chol = Cholesky::<f64, Dyn>::new(gram)?;
    let r = chol.solve(&(n_mat.transpose() * &hn));
    let z = hn - hinv_n * &r;
    Some(ActiveSolve { z, r })
}

/// Solves the QP. `warm_start` lists row sides tried first, typically the
/// active set of the previous control step; it never changes the optimum.
pub fn solve(problem: &QpProblem, warm_start: Option<&[(usize, Side)]>) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let hreg = problem.regularized_hessian();
    let chol = Cholesky::new(hreg).ok_or(QpError::NotConvex)?;
    let hinv = chol.inverse();

    let mut halves = Vec::new();
    for (i, r) in problem.rows.iter().enumerate() {
        if r.lb.is_finite() {
            halves.push(Half { row: i, side: Side::Lower });
        }
        if r.ub.is_finite() {
            halves.push(Half { row: i, side: Side::Upper });
        }
    }
    let mut x = -(&hinv * &problem.g);
    let mut active: Vec<usize> = Vec::new();
    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut queue: Vec<usize> = warm_start
        .unwrap_or(&[])
        .iter()
        .rev()
        .filter_map(|(row, side)| halves.iter().position(|h| h.row == *row && h.side == *side))
        .collect();

    let mut iterations = 0;
    let status = 'outer: loop {
        // choose the entering constraint
        let mut pick = None;
        while let Some(k) = queue.pop() {
            if !active.contains(&k) && halves[k].slack(problem, &x) < -halves[k].tolerance(problem) {
                pick = Some(k);
                break;
            }
        }
        if pick.is_none() {
            let mut worst = 0.0;
            for (k, h) in halves.iter().enumerate() {
                if active.contains(&k) {
                    continue;
                }
                let s = h.slack(problem, &x);
                if s < -h.tolerance(problem) && s < worst {
                    worst = s;
                    pick = Some(k);
                }
            }
        }
        let Some(p) = pick else {
            break QpStatus::Optimal;
        };
        let np = halves[p].normal(problem);
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > MAX_ITERATIONS {
                break 'outer QpStatus::IterationCap;
            }
            let Some(dir) = active_directions(&hinv, &normals, &np) else {
                break 'outer QpStatus::Infeasible;
            };
            // largest dual step keeping active multipliers nonnegative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, rj) in dir.r.iter().enumerate() {
                if *rj > 0.0 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let zn = dir.z.dot(&np);
            let scale = dir.z.norm() * np.norm();
            let t2 = if zn > 1e-14 * scale.max(1e-300) && dir.z.amax() > 0.0 {
                -halves[p].slack(problem, &x) / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                break 'outer QpStatus::Infeasible;
            }
            if t2.is_finite() {
                x += &dir.z * t;
            }
            for (uj, rj) in u.iter_mut().zip(dir.r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                normals.push(np.clone());
                u.push(up);
                break;
            }
            let j = drop.expect("partial step has a blocking constraint");
            active.remove(j);
            normals.remove(j);
            u.remove(j);
        }
    };

    let mut multipliers = DVector::zeros(problem.rows.len());
    let mut active_set = Vec::with_capacity(active.len());
    for (k, uk) in active.iter().zip(&u) {
        let h = halves[*k];
        active_set.push((h.row, h.side));
        multipliers[h.row] += match h.side {
            Side::Lower => *uk,
            Side::Upper => -*uk,
        };
    }
    debug_assert_eq!(x.len(), n);
    let mut sol = QpSolution {
        x,
        status,
        kkt_residual: f64::INFINITY,
        active_set,
        multipliers,
        iterations,
    };
    sol.kkt_residual = verify_kkt(problem, &sol);
    Ok(sol)
}

/// Infinity norm of the stationarity, primal feasibility and
/// complementarity residuals, using the solution's multipliers and the
/// regularized Hessian.
pub fn verify_kkt(problem: &QpProblem, sol: &QpSolution) -> f64 {
    let x = &sol.x;
    let mut grad = problem.regularized_hessian() * x + &problem.g;
    for (r, l) in problem.rows.iter().zip(sol.multipliers.iter()) {
        grad -= &r.a * *l;
    }
    let stationarity = grad.amax();
    let feasibility = problem.max_violation(x);
    let mut complementarity: f64 = 0.0;
    let mut dual_sign: f64 = 0.0;
    for (r, l) in problem.rows.iter().zip(sol.multipliers.iter()) {
        let v = r.a.dot(x);
        if *l > 0.0 {
            complementarity = complementarity.max((l * (v - r.lb)).abs());
            if r.lb == f64::NEG_INFINITY {
                dual_sign = f64::INFINITY;
            }
        } else if *l < 0.0 {
            complementarity = complementarity.max((l * (r.ub - v)).abs());
            if r.ub == f64::INFINITY {
                dual_sign = f64::INFINITY;
            }
        }
    }
    stationarity.max(feasibility).max(complementarity).max(dual_sign)
}
