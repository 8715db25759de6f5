//! Acceptance gate. Each test prints one `PASS`/`FAIL criterion N` line to
//! stdout (bypassing the test harness capture) and then asserts.

mod common;

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tirs_core::controller::tasks::{limit_rows, mirror_operator, mirror_point};
use tirs_core::controller::{Mode, Variant};
use tirs_core::dynamics::{ObjectModel, Plant, RobotModel, RobotState, SimParams};
use tirs_core::fields::smoothstep;
use tirs_core::harness::{
    impact_dataset, run_ablation, run_rollout, target_accel_svg, velocity_svg, AblationMatrix, AblationReport, Grouping, Rollout,
    RolloutLog,
};
use tirs_core::qp::{solve, QpProblem};
use tirs_core::scenario::{InitConfig, ObjectChoice, ScenarioConfig, ScenarioKind};
use tirs_core::{Pose2, Vec2};

const PUSH_BUDGET: Duration = Duration::from_secs(5 * 60);
const GRAB_BUDGET: Duration = Duration::from_secs(8 * 60);

fn report(n: usize, name: &str, problems: &[String]) {
    let line = if problems.is_empty() {
        format!("PASS criterion {n}: {name}\n")
    } else {
        let shown: Vec<&str> = problems.iter().take(6).map(String::as_str).collect();
        let more = if problems.len() > shown.len() {
            format!(" (+{} more)", problems.len() - shown.len())
        } else {
            String::new()
        };
        format!("FAIL criterion {n}: {name}: {}{more}\n", shown.join("; "))
    };
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    drop(out);
    assert!(problems.is_empty(), "{}", line.trim_end());
}

struct Batch {
    report: AblationReport,
    elapsed: Duration,
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn batch(kind: ScenarioKind) -> &'static Batch {
    static PUSH: OnceLock<Batch> = OnceLock::new();
    static GRAB: OnceLock<Batch> = OnceLock::new();
    let cell = match kind {
        ScenarioKind::HitAndPush => &PUSH,
        ScenarioKind::DualArmGrab => &GRAB,
    };
    cell.get_or_init(|| {
        let t0 = Instant::now();
        let report = run_ablation(&AblationMatrix::full(kind), jobs()).expect("ablation runs");
        Batch {
            report,
            elapsed: t0.elapsed(),
        }
    })
}

/// Shared ordering checks for the two ablation criteria.
fn ordering_problems(b: &Batch, budget: Duration) -> Vec<String> {
    let mut problems: Vec<String> = b
        .report
        .failed()
        .map(|c| format!("cell {} failed: {}", c.index, c.failure.as_deref().unwrap_or("")))
        .collect();
    problems.extend(b.report.ordering_violations(Variant::Proposed));
    let overall = b.report.summary(Grouping::Overall);
    let mean = |v: Variant| overall.iter().find(|r| r.variant == v).map(|r| r.mean_max_target_accel);
    match (mean(Variant::NoRs), mean(Variant::Proposed)) {
        (Some(no_rs), Some(prop)) if no_rs >= 2.0 * prop => {}
        (Some(no_rs), Some(prop)) => problems.push(format!("no_rs {no_rs:.4} < 2 x proposed {prop:.4}")),
        _ => problems.push("overall summary lacks no_rs or proposed".into()),
    }
    if b.elapsed > budget {
        problems.push(format!("took {:.0?}, budget {budget:.0?}", b.elapsed));
    }
    problems
}

#[test]
fn criterion_01_push_ablation_ordering() {
    let b = batch(ScenarioKind::HitAndPush);
    report(1, "push ablation ordering", &ordering_problems(b, PUSH_BUDGET));
}

#[test]
fn criterion_02_grab_ablation_ordering() {
    let b = batch(ScenarioKind::DualArmGrab);
    let mut problems = ordering_problems(b, GRAB_BUDGET);
    for c in b.report.cells.iter().filter(|c| c.config.displacement > 0.0 && !c.failed()) {
        let right_first = match (c.detection_steps[0], c.detection_steps[1]) {
            (Some(left), Some(right)) => right < left,
            (None, Some(_)) => true,
            _ => false,
        };
        if !right_first {
            problems.push(format!("cell {}: detections {:?}, right robot not first", c.index, c.detection_steps));
        }
    }
    report(2, "grab ablation ordering and first-impact side", &problems);
}

fn dataset(cfg: &ScenarioConfig) -> Arc<tirs_core::impact_map::ImpactDataset> {
    let mut d = impact_dataset(cfg).unwrap();
    if d.weights().is_none() {
        d.build_weights().unwrap();
    }
    Arc::new(d)
}

#[test]
fn criterion_03_velocity_jump_structure() {
    let mut problems = Vec::new();
    for object in ObjectChoice::ALL {
        let cfg = ScenarioConfig::new(ScenarioKind::HitAndPush, object, InitConfig::A, 0.0, Variant::Proposed, 1);
        let mut r = Rollout::new(&cfg, Some(dataset(&cfg))).unwrap();
        let dt = r.controller.config.dt;
        let mut jump_checked = false;
        let mut reference_checked = false;
        // pre-impact snapshot, accumulated free joint velocity, impact steps
        let mut impact: Option<(tirs_core::controller::tasks::ArmSnapshot, DVector<f64>, usize)> = None;
        while !r.finished() {
            let arms = r.controller.snapshots(&r.world.robots);
            let Some(out) = r.step() else { break };
            let k = r.step_index() - 1;

            let contact = r.world.active_contacts.iter().find(|c| c.robot == 0 && c.normal_impulse > 0.0).cloned();
            if !jump_checked && (impact.is_some() || contact.is_some()) {
                // free-flight joint velocity over the impact steps; the
                // speculative contact may spread the impact over a few steps
                let arm = &arms[0];
                let minv = arm.inertia.clone().try_inverse().unwrap();
                let tau = r.plant.saturate(&out.torques).remove(0);
                let (pre, dq_free, steps) = impact.get_or_insert_with(|| (arm.clone(), arm.dq.clone(), 0));
                *dq_free += &minv * (tau - &arm.bias) * dt;
                *steps += 1;
                let closed = contact.as_ref().is_some_and(|c| c.normal_rel_velocity >= -1e-9);
                if closed {
                    jump_checked = true;
                    let c = contact.unwrap();
                    let model = &r.plant.robots[0];
                    let n = c.normal;
                    let jp = model.offset_point_jacobian(&pre.q, &(-model.ee_radius * n));
                    let jp = DMatrix::from_iterator(2, model.n_links(), jp.iter().copied());
                    let minv = pre.inertia.clone().try_inverse().unwrap();
                    let jn = DMatrix::from_row_slice(1, 2, &[n.x, n.y]) * &jp;
                    let approach = -(&jn * &*dq_free)[(0, 0)];
                    let m_eff = 1.0 / (&jn * &minv * jn.transpose())[(0, 0)];
                    let mo = r.plant.object.mass;
                    let friction = r.plant.object.surface_friction_mu * mo * r.plant.params.gravity * dt * *steps as f64;
                    let predicted = (m_eff * approach - friction) / (m_eff + mo);
                    let post = r.world.object.twist.linear().norm();
                    let ante = pre.v.fixed_rows::<2>(0).norm();
                    let rel = (post - predicted).abs() / predicted;
                    if !(rel <= 0.02) {
                        problems.push(format!("{}: post speed {post:.5} vs momentum prediction {predicted:.5}", object.name()));
                    }
                    if !(post < ante) {
                        problems.push(format!("{}: post speed {post:.5} not below ante speed {ante:.5}", object.name()));
                    }
                }
            }
            if r.controller.state.k_imp == Some(k) && !reference_checked {
                reference_checked = true;
                let predicted = r.controller.state.v_o_est_plus.expect("impact map variant").linear();
                let reference = out.references[0].linear();
                if reference != predicted {
                    problems.push(format!("{}: reference {reference:?} at detection, prediction {predicted:?}", object.name()));
                }
            }
        }
        if !jump_checked || !reference_checked {
            problems.push(format!("{}: no impact or no detection", object.name()));
        }
    }
    report(3, "velocity jump structure", &problems);
}

/// Single revolute link striking a frictionless box with the contact normal
/// perpendicular to the link: the effective mass is `I / L^2`.
fn one_dof_problems() -> Vec<String> {
    let (l, m, b, mo, omega) = (0.5, 2.0, 0.1, 1.3, 1.2);
    let arm = RobotModel::uniform_rods(&[l], &[m], &[b], Pose2::new(0.0, 0.0, 0.0));
    let half = [0.1, 0.075];
    let obj = ObjectModel::solid_box(mo, half, 0.3, 0.0);
    let plant = Plant::new(vec![arm.clone()], obj, SimParams::default()).unwrap();
    let pose = Pose2::new(l, arm.ee_radius + half[1], 0.0);
    let w = plant.world_at(
        vec![RobotState {
            q: DVector::from_element(1, 0.0),
            dq: DVector::from_element(1, omega),
        }],
        pose,
    );
    let after = plant.resolve_impact(&w).unwrap();
    let inertia = m * l * l / 3.0 + b;
    let m_eff = inertia / (l * l);
    let expected = m_eff * omega * l / (m_eff + mo);
    let mut problems = Vec::new();
    let v = after.object.twist;
    if !((v.vy - expected).abs() <= 1e-6 * expected) {
        problems.push(format!("1-DOF oracle: object speed {} vs {expected}", v.vy));
    }
    if !(v.vx.abs() <= 1e-6 * expected && v.omega.abs() <= 1e-6 * expected / l) {
        problems.push(format!("1-DOF oracle: spurious motion {v:?}"));
    }
    let tip = after.robots[0].dq[0] * l;
    if !((tip - expected).abs() <= 1e-6 * expected) {
        problems.push(format!("1-DOF oracle: link tip speed {tip} vs {expected}"));
    }
    problems
}

#[test]
fn criterion_04_impact_map_fidelity() {
    let mut problems = one_dof_problems();
    let push = ScenarioConfig::new(ScenarioKind::HitAndPush, ObjectChoice::Juice, InitConfig::A, 0.0, Variant::Proposed, 1);
    let grab = ScenarioConfig::new(ScenarioKind::DualArmGrab, ObjectChoice::Catfood, InitConfig::A, 0.0, Variant::Proposed, 1);
    for (cfg, expected_len) in [(push, 25), (grab, 49)] {
        let d = dataset(&cfg);
        let label = cfg.kind.name();
        if d.len() != expected_len {
            problems.push(format!("{label}: {} samples, expected {expected_len}", d.len()));
        }
        for (i, s) in d.samples.iter().enumerate() {
            let v = d.interpolate(&s.key).unwrap();
            let err = (v.as_vector() - s.v_o_plus.as_vector()).norm() / s.v_o_plus.norm();
            if !(err <= 1e-9) {
                problems.push(format!("{label}: node {i} reproduced with relative error {err:e}"));
            }
        }
        let mut loo = d.leave_one_out().unwrap();
        loo.sort_by(f64::total_cmp);
        let median = if loo.len() % 2 == 1 {
            loo[loo.len() / 2]
        } else {
            0.5 * (loo[loo.len() / 2 - 1] + loo[loo.len() / 2])
        };
        if !(median <= 0.10) {
            problems.push(format!("{label}: leave-one-out median {median:.4}"));
        }
    }
    report(4, "impact map fidelity", &problems);
}

/// Largest per-joint torque change between consecutive steps; entry `k`
/// compares steps `k - 1` and `k` (entry 0 is zero).
fn torque_jumps(log: &RolloutLog) -> Vec<f64> {
    let mut out = vec![0.0];
    for w in log.records.windows(2) {
        let jump = w[0]
            .robots
            .iter()
            .zip(&w[1].robots)
            .flat_map(|(a, b)| a.tau.iter().zip(&b.tau).map(|(x, y)| (y - x).abs()))
            .fold(0.0, f64::max);
        out.push(jump);
    }
    out
}

/// `(switch step, largest jump within the window, 95th percentile)` for
/// every switch whose window exceeds the percentile.
fn torque_peaks(log: &RolloutLog, window: usize) -> (usize, Vec<(usize, f64, f64)>) {
    let jumps = torque_jumps(log);
    let mut sorted = jumps[1..].to_vec();
    sorted.sort_by(f64::total_cmp);
    // nearest-rank percentile
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let p95 = sorted[rank - 1];
    let switches = log.mode_switches();
    let peaks = switches
        .iter()
        .filter_map(|&(s, _)| {
            let lo = s.saturating_sub(window).max(1);
            let hi = (s + window).min(jumps.len() - 1);
            let peak = jumps[lo..=hi].iter().copied().fold(0.0, f64::max);
            (peak > p95).then_some((s, peak, p95))
        })
        .collect();
    (switches.len(), peaks)
}

fn continuity_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for object in ObjectChoice::ALL {
        out.push(ScenarioConfig::new(ScenarioKind::HitAndPush, object, InitConfig::A, 0.0, Variant::Proposed, 1));
        out.push(ScenarioConfig::new(ScenarioKind::DualArmGrab, object, InitConfig::A, 0.015, Variant::Proposed, 1));
    }
    out
}

#[test]
fn criterion_05_torque_continuity() {
    let mut problems = Vec::new();
    for base in continuity_scenarios() {
        let label = format!("{} {}", base.kind.name(), base.object.name());
        let window = (0.010 / base.controller.dt).round() as usize;
        for variant in [Variant::Proposed, Variant::NoRs] {
            let mut cfg = base.clone();
            cfg.variant = variant;
            let ds = variant.uses_impact_map().then(|| dataset(&cfg));
            let log = run_rollout(&cfg, ds).unwrap();
            if let Some((k, msg)) = &log.failure {
                problems.push(format!("{label} {}: failed at step {k}: {msg}", variant.name()));
                continue;
            }
            let (switches, peaks) = torque_peaks(&log, window);
            if switches == 0 {
                problems.push(format!("{label} {}: no mode switch", variant.name()));
                continue;
            }
            match variant {
                Variant::Proposed => {
                    for (s, peak, p95) in peaks {
                        problems.push(format!("{label} proposed: jump {peak:.3} near switch {s} above p95 {p95:.3}"));
                    }
                }
                _ => {
                    if peaks.is_empty() {
                        problems.push(format!("{label} no_rs: no torque peak at the switch"));
                    }
                }
            }
        }
    }
    report(5, "torque continuity", &problems);
}

#[test]
fn criterion_06_qp_correctness() {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let n = rng.gen_range(1..=14);
        let m = rng.gen_range(0..=6 * n);
        let p = common::random_problem(&mut rng, n, m);
        let s = solve(&p, None).unwrap();
        let gap = p.objective(&s.x) - common::projected_gradient_dual(&p);
        if !(gap.abs() <= 1e-8) {
            problems.push(format!("random problem {case}: objective gap {gap:e}"));
        }
    }

    let push = ScenarioConfig::new(ScenarioKind::HitAndPush, ObjectChoice::Parcel, InitConfig::B, 0.03, Variant::Proposed, 2);
    let grab = ScenarioConfig::new(ScenarioKind::DualArmGrab, ObjectChoice::Juice, InitConfig::C, 0.03, Variant::Proposed, 2);
    for cfg in [push, grab] {
        let mut r = Rollout::new(&cfg, Some(dataset(&cfg))).unwrap();
        let dt = r.controller.config.dt;
        let mut worst: f64 = 0.0;
        while !r.finished() {
            let arms = r.controller.snapshots(&r.world.robots);
            let models = r.controller.models().to_vec();
            let dim: usize = models.iter().map(|m| m.n_links()).sum();
            let mut rows = Vec::new();
            let mut offset = 0;
            for (m, a) in models.iter().zip(&arms) {
                rows.extend(limit_rows(m, a, dt, offset, dim));
                offset += m.n_links();
            }
            let Some(out) = r.step() else { break };
            if out.qp_status != tirs_core::qp::QpStatus::Optimal {
                continue;
            }
            let bounds = QpProblem::new(DMatrix::zeros(dim, dim), DVector::zeros(dim), rows);
            worst = worst.max(bounds.max_violation(&out.ddq));
        }
        if !(worst <= 1e-8) {
            problems.push(format!("{} closed loop: limit violation {worst:e}", cfg.kind.name()));
        }
        if let Some((k, msg)) = &r.log.failure {
            problems.push(format!("{} closed loop failed at step {k}: {msg}", cfg.kind.name()));
        }
    }
    report(6, "QP correctness", &problems);
}

#[test]
fn criterion_07_field_properties() {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fields = Vec::new();
    for kind in [ScenarioKind::HitAndPush, ScenarioKind::DualArmGrab] {
        let cfg = ScenarioConfig::new(kind, ObjectChoice::Juice, InitConfig::A, 0.0, Variant::Proposed, 1);
        fields.extend(cfg.build().unwrap().setup.arms.into_iter().map(|a| a.ante));
    }
    let mut streamline_points = 0;
    for (fi, f) in fields.iter().enumerate() {
        let speed = f.v_imp.norm();
        for _ in 0..100 {
            let p = f.p_imp + Vec2::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            if let Ok(v) = f.velocity_raw(p) {
                let err = (v.norm() - speed).abs();
                if err > 4.0 * f64::EPSILON * speed {
                    problems.push(format!("field {fi}: raw speed off by {err:e} at {p:?}"));
                }
            }
            // inside r_min the field is exactly the impact velocity
            let dir = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let inner = f.p_o_est + dir * rng.gen_range(0.0..f.r_min);
            if f.velocity(inner) != Ok(f.v_imp) {
                problems.push(format!("field {fi}: velocity at {inner:?} is not v_imp"));
            }
        }

        // particle tracing against the convective feedforward
        let mut accepted = 0;
        while accepted < 100 {
            let p = f.p_imp + Vec2::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            let Ok(a) = f.acceleration(p) else { continue };
            let h = 1e-4;
            let trace = |sign: f64| -> Option<Vec2> {
                let v = |x: Vec2| f.velocity(x).ok().map(|v| v * sign);
                let k1 = v(p)?;
                let k2 = v(p + k1 * (h / 2.0))?;
                let k3 = v(p + k2 * (h / 2.0))?;
                let k4 = v(p + k3 * h)?;
                f.velocity(p + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)).ok()
            };
            let (Some(fwd), Some(back)) = (trace(1.0), trace(-1.0)) else { continue };
            accepted += 1;
            let a_trace = (fwd - back) / (2.0 * h);
            let err = (a_trace - a).norm();
            if err > 1e-3 * a.norm() {
                problems.push(format!("field {fi}: streamline accel {a_trace:?} vs feedforward {a:?} at {p:?}"));
            }
        }
        streamline_points += accepted;

        // C1 knots: matching values, and one-sided slopes vanishing linearly
        let (lo, hi) = (f.r_min, f.r_max);
        let span = hi - lo;
        if smoothstep(lo, lo, hi) != Ok(0.0) || smoothstep(hi, lo, hi) != Ok(1.0) {
            problems.push(format!("field {fi}: smoothstep knot values"));
        }
        for frac in [1e-3, 1e-4, 1e-5] {
            let d = frac * span;
            let bound = 3.0 * d / (span * span) * (1.0 + 1e-6) + 1e-9;
            let inner_lo = (smoothstep(lo + d, lo, hi).unwrap() - smoothstep(lo, lo, hi).unwrap()) / d;
            let inner_hi = (smoothstep(hi, lo, hi).unwrap() - smoothstep(hi - d, lo, hi).unwrap()) / d;
            let outer_lo = (smoothstep(lo, lo, hi).unwrap() - smoothstep(lo - d, lo, hi).unwrap()) / d;
            let outer_hi = (smoothstep(hi + d, lo, hi).unwrap() - smoothstep(hi, lo, hi).unwrap()) / d;
            if inner_lo.abs() > bound || inner_hi.abs() > bound || outer_lo != 0.0 || outer_hi != 0.0 {
                problems.push(format!("field {fi}: smoothstep slope at knots not continuous (step {d:e})"));
            }
        }
    }
    if streamline_points < 100 {
        problems.push(format!("only {streamline_points} streamline points"));
    }
    report(7, "field properties", &problems);
}

#[test]
fn criterion_08_interim_mode_contract() {
    let mut problems = Vec::new();
    let cases = [
        ScenarioConfig::new(ScenarioKind::HitAndPush, ObjectChoice::Catfood, InitConfig::B, 0.0, Variant::Proposed, 3),
        ScenarioConfig::new(ScenarioKind::DualArmGrab, ObjectChoice::Catfood, InitConfig::B, 0.015, Variant::Proposed, 3),
    ];
    for cfg in cases {
        let label = cfg.kind.name();
        let mut r = Rollout::new(&cfg, Some(dataset(&cfg))).unwrap();
        let interim_len = r.controller.config.interim_steps();
        let mut interim_steps = 0;
        let mut worst_blend: f64 = 0.0;
        while !r.finished() {
            let arms = r.controller.snapshots(&r.world.robots);
            let Some(out) = r.step() else { break };
            let k = r.step_index() - 1;
            let ctrl = &r.controller;
            if ctrl.state.k_imp == Some(k) {
                if out.mode != Mode::Interim || out.gamma != 0.0 || ctrl.gamma(k) != 0.0 {
                    problems.push(format!("{label}: switch step mode {:?}, gamma {}", out.mode, out.gamma));
                }
                if ctrl.gamma(k + interim_len) != 1.0 {
                    problems.push(format!("{label}: gamma {} at the end of the interim", ctrl.gamma(k + interim_len)));
                }
                // at the switch the pose feedback has nothing to correct
                for (i, arm) in arms.iter().enumerate() {
                    let f = &ctrl.setup.arms[i].ante;
                    let ff = if f.velocity(arm.p).is_ok() { f.acceleration(arm.p).unwrap() } else { Vec2::zeros() };
                    let feedback = Vec2::new(out.targets[i].x, out.targets[i].y) - ff;
                    if feedback != Vec2::zeros() {
                        problems.push(format!("{label}: arm {i} position feedback {feedback:?} at the switch"));
                    }
                }
            }
            if ctrl.state.mode == Mode::Interim {
                interim_steps += 1;
                let arms = ctrl.snapshots(&r.world.robots);
                let keys = ctrl.state.impact_keys.clone().unwrap();
                let p_o = ctrl.object_estimate(&arms, &keys);
                for (i, arm) in arms.iter().enumerate() {
                    let (blend, _) = ctrl.interim_target(i, arm, p_o, 1.0);
                    let (post, _) = ctrl.post_target(i, arm, p_o);
                    worst_blend = worst_blend.max((blend - post).amax());
                }
            }
        }
        if interim_steps == 0 {
            problems.push(format!("{label}: never entered the interim mode"));
        }
        if !(worst_blend <= 1e-12) {
            problems.push(format!("{label}: interim target at gamma 1 differs from post by {worst_blend:e}"));
        }
    }

    let grab = batch(ScenarioKind::DualArmGrab);
    for c in grab.report.cells.iter().filter(|c| c.config.variant.uses_interim() && !c.failed()) {
        let interim_len = c.config.controller.interim_steps();
        let done = match (c.switch_step, c.contact_steps.first().copied().flatten(), c.contact_steps.get(1).copied().flatten()) {
            (Some(s), Some(a), Some(b)) => Some((a.max(b), s + interim_len)),
            _ => None,
        };
        match done {
            Some((second, deadline)) if second < deadline => {}
            Some((second, deadline)) => problems.push(format!(
                "cell {} ({} {} {:+.3}): second contact at step {second}, interim ends at {deadline}",
                c.index,
                c.config.variant.name(),
                c.config.object.name(),
                c.config.displacement
            )),
            None => problems.push(format!("cell {}: contacts {:?}, switch {:?}", c.index, c.contact_steps, c.switch_step)),
        }
    }
    report(8, "interim mode contract", &problems);
}

#[test]
fn criterion_09_synchronisation() {
    let mut problems = Vec::new();
    let grab = batch(ScenarioKind::DualArmGrab);
    for init in InitConfig::ALL {
        let cells: Vec<_> = grab
            .report
            .cells
            .iter()
            .filter(|c| c.config.init == init && c.config.displacement == 0.0)
            .collect();
        if cells.is_empty() {
            problems.push(format!("init {}: no cells", init.name()));
        }
        for c in cells {
            match c.mirror_at_first_contact {
                Some(d) if d < 0.005 => {}
                other => problems.push(format!("cell {} init {}: mirror distance {other:?} at first impact", c.index, init.name())),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let n = Vec2::new(angle.cos(), angle.sin());
        let t = mirror_operator(&n);
        let err = (t * t - Matrix2::identity()).amax();
        let p = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let c = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let back = (mirror_point(&t, mirror_point(&t, p, c), c) - p).amax();
        if !(err <= 1e-14 && back <= 1e-14) {
            problems.push(format!("mirror operator for normal {n:?} is not an involution ({err:e}, {back:e})"));
        }
    }
    report(9, "synchronisation", &problems);
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn criterion_10_determinism_and_formats() {
    let mut problems = Vec::new();
    let configs = [
        ScenarioConfig::new(ScenarioKind::HitAndPush, ObjectChoice::Juice, InitConfig::C, -0.03, Variant::Proposed, 11),
        ScenarioConfig::new(ScenarioKind::DualArmGrab, ObjectChoice::Parcel, InitConfig::B, 0.03, Variant::Proposed, 11),
    ];
    for cfg in configs {
        let run = || run_rollout(&cfg, Some(dataset(&cfg))).unwrap().to_csv();
        if run() != run() {
            problems.push(format!("{}: repeated runs differ", cfg.kind.name()));
        }
    }
    let text = std::fs::read_to_string(fixture("push_impact_window.csv")).unwrap();
    let log = RolloutLog::from_csv(&text).unwrap();
    if log.to_csv() != text {
        problems.push("log CSV does not round-trip".into());
    }
    let goldens = [
        ("push_impact_window_velocity.svg", velocity_svg(&log).unwrap()),
        ("push_impact_window_target_accel.svg", target_accel_svg(&log).unwrap()),
    ];
    for (name, svg) in goldens {
        if std::fs::read_to_string(fixture(name)).unwrap() != svg {
            problems.push(format!("{name} differs from the golden file"));
        }
    }
    report(10, "determinism and formats", &problems);
}

/// Not a numbered criterion: contacts never sink past the solver tolerance
/// in any batch rollout.
#[test]
fn batches_respect_penetration_tolerance() {
    for kind in [ScenarioKind::HitAndPush, ScenarioKind::DualArmGrab] {
        for c in &batch(kind).report.cells {
            if let Some(gap) = c.min_gap {
                assert!(gap >= -c.config.sim.penetration_tolerance, "cell {} gap {gap}", c.index);
            }
        }
    }
}
