//! Per-step rollout log and its CSV form.
//!
//! Columns, in order (robots numbered from 1, joints from 1):
//!
//! ```text
//! step, t_s, mode, gamma, target_accel_norm_m_s2, qp_optimal, kkt_residual,
//! mirror_distance_m, min_gap_m,
//! obj_x_m, obj_y_m, obj_theta_rad, obj_vx_m_s, obj_vy_m_s, obj_omega_rad_s,
//! then per robot r:
//!   r{r}_ee_x_m, r{r}_ee_y_m, r{r}_ee_theta_rad,
//!   r{r}_ee_vx_m_s, r{r}_ee_vy_m_s, r{r}_ee_omega_rad_s,
//!   r{r}_ref_vx_m_s, r{r}_ref_vy_m_s, r{r}_ref_omega_rad_s,
//!   r{r}_target_ax_m_s2, r{r}_target_ay_m_s2, r{r}_target_alpha_rad_s2,
//!   r{r}_detected, r{r}_contact,
//!   r{r}_q{j}_rad..., r{r}_dq{j}_rad_s..., r{r}_tau{j}_nm...
//! ```
//!
//! Empty cells mean "not applicable" (mirror distance with one arm, gap
//! without contact). Floats use Rust's shortest round-trip formatting, so
//! a parsed log reproduces the written one exactly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::controller::{ControlOutput, Controller, Mode};
use crate::dynamics::{ObjectState, Plant, WorldState};
use crate::geometry::{Pose2, Twist2};
use crate::qp::QpStatus;
use crate::scenario::ScenarioConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RobotRecord {
    pub ee: Pose2,
    pub ee_twist: Twist2,
    pub reference: Twist2,
    pub target: [f64; 3],
    pub detected: bool,
    /// A contact with this robot carried load in the last plant step.
    pub contact: bool,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub mode: Mode,
    pub gamma: f64,
    pub target_norm: f64,
    pub qp_optimal: bool,
    pub kkt_residual: f64,
    pub mirror_distance: Option<f64>,
    pub min_gap: Option<f64>,
    pub object: ObjectState,
    pub robots: Vec<RobotRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutLog {
    /// Absent for logs read back from CSV.
    pub scenario: Option<ScenarioConfig>,
    pub joints: Vec<usize>,
    pub detection_latency: usize,
    pub records: Vec<StepRecord>,
    pub failure: Option<(usize, String)>,
    pub detection_steps: Vec<Option<usize>>,
    pub switch_step: Option<usize>,
    pub qp_fallbacks: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum LogParseError {
    #[error("log is empty")]
    Empty,
    #[error("unexpected header")]
    Header,
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
}

impl RolloutLog {
    pub fn new(cfg: &ScenarioConfig, joints: Vec<usize>, detection_latency: usize) -> Self {
        let n = joints.len();
        Self {
            scenario: Some(cfg.clone()),
            joints,
            detection_latency,
            records: Vec::new(),
            failure: None,
            detection_steps: vec![None; n],
            switch_step: None,
            qp_fallbacks: 0,
        }
    }

    pub(crate) fn fail(&mut self, step: usize, msg: String) {
        log::warn!("rollout failed at step {step}: {msg}");
        self.failure = Some((step, msg));
    }

    pub(crate) fn push(&mut self, k: usize, plant: &Plant, world: &WorldState, out: &ControlOutput, ctrl: &Controller) {
        let robots = plant
            .robots
            .iter()
            .zip(&world.robots)
            .enumerate()
            .map(|(i, (m, s))| {
                let (p, theta) = m.forward_kinematics(&s.q);
                let v = m.geometric_jacobian(&s.q) * &s.dq;
                let t = out.targets[i];
                RobotRecord {
                    ee: Pose2::new(p.x, p.y, theta),
                    ee_twist: Twist2::new(v[0], v[1], v[2]),
                    reference: out.references[i],
                    target: [t.x, t.y, t.z],
                    detected: ctrl.state.impact_detected[i],
                    contact: world
                        .active_contacts
                        .iter()
                        .any(|c| c.robot == i && c.normal_impulse > 0.0),
                    q: s.q.iter().copied().collect(),
                    dq: s.dq.iter().copied().collect(),
                    tau: out.torques[i].iter().copied().collect(),
                }
            })
            .collect();
        self.records.push(StepRecord {
            step: k,
            t: k as f64 * ctrl.config.dt,
            mode: out.mode,
            gamma: out.gamma,
            target_norm: out.target_norm(),
            qp_optimal: out.qp_status == QpStatus::Optimal,
            kkt_residual: out.kkt_residual,
            mirror_distance: out.mirror_distance,
            min_gap: world.min_gap(),
            object: world.object,
            robots,
        });
    }

    /// The ablation metric: largest stacked target-acceleration norm.
    pub fn max_target_norm(&self) -> f64 {
        self.records.iter().map(|r| r.target_norm).fold(0.0, f64::max)
    }

    /// Steps at which the mode differs from the previous record.
    pub fn mode_switches(&self) -> Vec<(usize, Mode)> {
        self.records
            .windows(2)
            .filter(|w| w[0].mode != w[1].mode)
            .map(|w| (w[1].step, w[1].mode))
            .collect()
    }

    pub fn mode_sequence(&self) -> Vec<Mode> {
        let mut seq: Vec<Mode> = Vec::new();
        for r in &self.records {
            if seq.last() != Some(&r.mode) {
                seq.push(r.mode);
            }
        }
        seq
    }

    /// First step with a load-carrying contact, per robot.
    pub fn first_contact_steps(&self) -> Vec<Option<usize>> {
        (0..self.joints.len())
            .map(|i| self.records.iter().find(|r| r.robots[i].contact).map(|r| r.step))
            .collect()
    }

    /// Mirror distance logged at the first step with any contact.
    pub fn mirror_distance_at_first_contact(&self) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.robots.iter().any(|x| x.contact))
            .and_then(|r| r.mirror_distance)
    }

    /// Smallest signed contact gap over the rollout.
    pub fn min_gap(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.min_gap).reduce(f64::min)
    }

    /// First step at which any detection flag is reported.
    pub fn first_detection_step(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.robots.iter().any(|x| x.detected))
            .map(|r| r.step)
    }

    pub fn csv_header(joints: &[usize]) -> String {
        let mut cols: Vec<String> = [
            "step",
            "t_s",
            "mode",
            "gamma",
            "target_accel_norm_m_s2",
            "qp_optimal",
            "kkt_residual",
            "mirror_distance_m",
            "min_gap_m",
            "obj_x_m",
            "obj_y_m",
            "obj_theta_rad",
            "obj_vx_m_s",
            "obj_vy_m_s",
            "obj_omega_rad_s",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for (r, &n) in joints.iter().enumerate() {
            let r = r + 1;
            for c in [
                "ee_x_m",
                "ee_y_m",
                "ee_theta_rad",
                "ee_vx_m_s",
                "ee_vy_m_s",
                "ee_omega_rad_s",
                "ref_vx_m_s",
                "ref_vy_m_s",
                "ref_omega_rad_s",
                "target_ax_m_s2",
                "target_ay_m_s2",
                "target_alpha_rad_s2",
                "detected",
                "contact",
            ] {
                cols.push(format!("r{r}_{c}"));
            }
            for (name, unit) in [("q", "rad"), ("dq", "rad_s"), ("tau", "nm")] {
                for j in 1..=n {
                    cols.push(format!("r{r}_{name}{j}_{unit}"));
                }
            }
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::csv_header(&self.joints);
        s.push('\n');
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let o = &r.object;
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.t,
                r.mode.name(),
                r.gamma,
                r.target_norm,
                r.qp_optimal as u8,
                r.kkt_residual,
                opt(r.mirror_distance),
                opt(r.min_gap),
                o.pose.x,
                o.pose.y,
                o.pose.theta,
                o.twist.vx,
                o.twist.vy,
                o.twist.omega
            );
            for x in &r.robots {
                let _ = write!(
                    s,
                    ",{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    x.ee.x,
                    x.ee.y,
                    x.ee.theta,
                    x.ee_twist.vx,
                    x.ee_twist.vy,
                    x.ee_twist.omega,
                    x.reference.vx,
                    x.reference.vy,
                    x.reference.omega,
                    x.target[0],
                    x.target[1],
                    x.target[2],
                    x.detected as u8,
                    x.contact as u8
                );
                for v in x.q.iter().chain(&x.dq).chain(&x.tau) {
                    let _ = write!(s, ",{v}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses a CSV written by [`RolloutLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, LogParseError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(LogParseError::Empty)?;
        let cols: Vec<&str> = header.split(',').collect();
        let mut joints = Vec::new();
        for r in 1..=2 {
            let prefix = format!("r{r}_q");
            let n = cols.iter().filter(|c| c.starts_with(&prefix) && c.ends_with("_rad")).count();
            if n > 0 {
                joints.push(n);
            }
        }
        if joints.is_empty() || Self::csv_header(&joints) != header {
            return Err(LogParseError::Header);
        }
        let width = cols.len();
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| LogParseError::Row { line: idx + 1, msg };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != width {
                return Err(err(format!("{} fields, expected {width}", f.len())));
            }
            let num = |i: usize| -> Result<f64, LogParseError> {
                f[i].parse::<f64>().map_err(|_| err(format!("column {} is not a number: {:?}", cols[i], f[i])))
            };
            let opt = |i: usize| -> Result<Option<f64>, LogParseError> {
                if f[i].is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            let flag = |i: usize| -> Result<bool, LogParseError> {
                match f[i] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(err(format!("column {} is not 0/1: {other:?}", cols[i]))),
                }
            };
            let step = f[0].parse::<usize>().map_err(|_| err("bad step".into()))?;
            let mode = match f[2] {
                "ante" => Mode::Ante,
                "interim" => Mode::Interim,
                "post" => Mode::Post,
                other => return Err(err(format!("unknown mode {other:?}"))),
            };
            let object = ObjectState {
                pose: Pose2::new(num(9)?, num(10)?, num(11)?),
                twist: Twist2::new(num(12)?, num(13)?, num(14)?),
            };
            let mut at = 15;
            let mut robots = Vec::with_capacity(joints.len());
            for &n in &joints {
                let v = |k: usize| num(at + k);
                let rec = RobotRecord {
                    ee: Pose2::new(v(0)?, v(1)?, v(2)?),
                    ee_twist: Twist2::new(v(3)?, v(4)?, v(5)?),
                    reference: Twist2::new(v(6)?, v(7)?, v(8)?),
                    target: [v(9)?, v(10)?, v(11)?],
                    detected: flag(at + 12)?,
                    contact: flag(at + 13)?,
                    q: (0..n).map(|j| v(14 + j)).collect::<Result<_, _>>()?,
                    dq: (0..n).map(|j| v(14 + n + j)).collect::<Result<_, _>>()?,
                    tau: (0..n).map(|j| v(14 + 2 * n + j)).collect::<Result<_, _>>()?,
                };
                robots.push(rec);
                at += 14 + 3 * n;
            }
            records.push(StepRecord {
                step,
                t: num(1)?,
                mode,
                gamma: num(3)?,
                target_norm: num(4)?,
                qp_optimal: flag(5)?,
                kkt_residual: num(6)?,
                mirror_distance: opt(7)?,
                min_gap: opt(8)?,
                object,
                robots,
            });
        }
        if records.is_empty() {
            return Err(LogParseError::Empty);
        }
        if records.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(LogParseError::Row {
                line: 0,
                msg: "time is not strictly increasing".into(),
            });
        }
        let n = joints.len();
        let switch_step = records
            .windows(2)
            .find(|w| w[0].mode == Mode::Ante && w[1].mode != Mode::Ante)
            .map(|w| w[1].step);
        let detection_steps = (0..n)
            .map(|i| records.iter().find(|r| r.robots[i].detected).map(|r| r.step))
            .collect();
        Ok(Self {
            scenario: None,
            joints,
            detection_latency: 0,
            records,
            failure: None,
            detection_steps,
            switch_step,
            qp_fallbacks: 0,
        })
    }
}
