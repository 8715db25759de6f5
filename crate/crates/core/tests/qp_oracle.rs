mod common;

use common::{projected_gradient_dual, random_problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tirs_core::qp::{solve, verify_kkt, QpStatus};

#[test]
fn unconstrained_matches_linear_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=14 {
        let p = random_problem(&mut rng, n, 0);
        let s = solve(&p, None).unwrap();
        let oracle = p.regularized_hessian().lu().solve(&(-&p.g)).unwrap();
        assert!((&s.x - oracle).amax() < 1e-10);
        assert!(verify_kkt(&p, &s) < 1e-10);
    }
}

#[test]
fn random_problems_match_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.gen_range(1..=14);
        let m = rng.gen_range(0..=6 * n);
        let p = random_problem(&mut rng, n, m);
        let s = solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "case {case}");
        assert!(p.max_violation(&s.x) <= 1e-8, "case {case}");
        assert!(s.kkt_residual < 1e-6, "case {case}");
        let primal = p.objective(&s.x);
        let dual = projected_gradient_dual(&p);
        let gap = primal - dual;
        worst = worst.max(gap.abs());
        assert!(gap.abs() <= 1e-8, "case {case}: gap {gap}");

        let warm = solve(&p, Some(&s.active_set)).unwrap();
        assert!((&warm.x - &s.x).amax() <= 1e-10, "case {case}");
    }
    eprintln!("worst objective gap {worst:e}");
}
