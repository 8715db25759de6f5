//! Three-mode time-invariant reference-spreading controller.
//!
//! Each control step solves one task-space QP over the joint accelerations
//! of all arms and converts the optimum to torques through the free-motion
//! equations of motion. The active mode decides the tracking target:
//!
//! - ante: ante-impact field feedforward plus velocity feedback, a
//!   redundancy task on the first joint and, for two arms, a mirror
//!   synchronisation task;
//! - interim: a blend, over `dt_int`, from feedforward plus position
//!   feedback toward an integrated ante-field position into the post
//!   target;
//! - post: post-impact object field feedforward, a feedforward wrench and
//!   velocity feedback.

mod detect;
mod modes;
pub mod tasks;

pub use detect::ImpactDetector;
pub use modes::{next_mode, Mode, Variant};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{RobotModel, RobotState};
use crate::fields::{AnteFieldParams, FieldError, PostFieldParams};
use crate::geometry::{Twist2, Vec2};
use crate::impact_map::{ImpactDataset, MapError};
use crate::qp::{self, QpError, QpStatus, Side};
use tasks::{ArmSnapshot, CostBlock};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error("variant {0} needs an impact dataset")]
    MissingDataset(&'static str),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// Velocity feedback gains (x, y, angular).
    #[serde(rename = "d_track_1_s")]
    pub d_track: [f64; 3],
    /// Interim pose feedback gains (x, y, angular).
    #[serde(rename = "k_track_1_s2")]
    pub k_track: [f64; 3],
    #[serde(rename = "k_q_1_s2")]
    pub k_q: f64,
    #[serde(rename = "k_sync_1_s2")]
    pub k_sync: f64,
    pub w_track: f64,
    pub w_q: f64,
    pub w_sync: f64,
    #[serde(rename = "dt_int_s")]
    pub dt_int: f64,
    pub variant: Variant,
    #[serde(rename = "detection_threshold_rad_s")]
    pub detection_threshold: f64,
    pub detection_latency_steps: usize,
    /// Design acceleration used to size the grab clamping force.
    #[serde(rename = "grab_a_max_m_s2")]
    pub grab_a_max: f64,
    pub clamp_safety: f64,
    /// Below this reference speed the friction feedforward fades out.
    #[serde(rename = "friction_ff_speed_m_s")]
    pub friction_ff_speed: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            d_track: [40.0; 3],
            k_track: [40.0; 3],
            k_q: 250.0,
            k_sync: 200.0,
            w_track: 1.0,
            w_q: 1.0,
            w_sync: 100.0,
            dt_int: 0.1,
            variant: Variant::Proposed,
            detection_threshold: 0.05,
            detection_latency_steps: 3,
            grab_a_max: 1.0,
            clamp_safety: 1.5,
            friction_ff_speed: 0.05,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            self.dt,
            self.k_q,
            self.k_sync,
            self.w_track,
            self.detection_threshold,
            self.clamp_safety,
            self.friction_ff_speed,
        ];
        let gains = self.d_track.iter().chain(&self.k_track);
        if positive.iter().chain(gains).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(ControlError::Config("gains, weights and dt must be positive".into()));
        }
        if !(self.w_q >= 0.0 && self.w_sync >= 0.0) {
            return Err(ControlError::Config("task weights must be non-negative".into()));
        }
        if !(self.dt_int > self.dt) {
            return Err(ControlError::Config("dt_int must exceed dt".into()));
        }
        Ok(())
    }

    /// Number of control steps in the interim mode.
    pub fn interim_steps(&self) -> usize {
        (self.dt_int / self.dt).round() as usize
    }
}

/// Per-arm task geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmTask {
    pub ante: AnteFieldParams,
    /// End-effector centre when touching the nominal face midpoint.
    #[serde(rename = "face_origin_m")]
    pub face_origin: Vec2,
    /// Unit vector along the face.
    pub face_tangent: Vec2,
    /// Outward unit face normal (toward this arm).
    pub face_normal: Vec2,
    /// Distance from the object centre to `face_origin` along the normal.
    #[serde(rename = "contact_offset_m")]
    pub contact_offset: f64,
    #[serde(rename = "theta_d_post_rad")]
    pub theta_d_post: f64,
    /// Elbow sign for closed-form IK.
    pub elbow: f64,
}

impl ArmTask {
    pub fn project(&self, p: Vec2) -> f64 {
        (p - self.face_origin).dot(&self.face_tangent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostTemplate {
    #[serde(rename = "p_of_m")]
    pub p_of: Vec2,
    #[serde(rename = "kappa_p_1_s")]
    pub kappa_p: f64,
    #[serde(rename = "r_min_m")]
    pub r_min: f64,
    #[serde(rename = "r_max_m")]
    pub r_max: f64,
    #[serde(rename = "kappa_r_1_s")]
    pub kappa_r: f64,
}

/// Feedforward post-impact wrench model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WrenchModel {
    None,
    /// Compensates Coulomb ground friction of a pushed object.
    Push {
        mu_ground: f64,
        #[serde(rename = "mass_kg")]
        mass: f64,
        #[serde(rename = "gravity_m_s2")]
        gravity: f64,
    },
    /// Clamps the object between two arms and shares its ground friction.
    Grab {
        mu_ground: f64,
        mu_contact: f64,
        #[serde(rename = "mass_kg")]
        mass: f64,
        #[serde(rename = "gravity_m_s2")]
        gravity: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSetup {
    pub arms: Vec<ArmTask>,
    pub post: PostTemplate,
    pub wrench: WrenchModel,
    #[serde(rename = "arm_gravity_m_s2")]
    pub arm_gravity: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub mode: Mode,
    /// Control step of the mode switch out of ante.
    pub k_imp: Option<usize>,
    pub t_imp: Option<f64>,
    /// Reported detection flags.
    pub impact_detected: Vec<bool>,
    /// Control step at which each robot's flag was first reported.
    pub detection_step: Vec<Option<usize>>,
    /// Integrated interim position references.
    pub p_int: Vec<Vec2>,
    pub v_o_est_plus: Option<Twist2>,
    pub p_o_plus: Option<Vec2>,
    /// Projected face coordinates at the switch.
    pub impact_keys: Option<Vec<f64>>,
    pub post_fields: Vec<PostFieldParams>,
    pub previous_ddq: Option<DVector<f64>>,
    pub warm_start: Vec<(usize, Side)>,
    pub qp_fallbacks: usize,
}

#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub torques: Vec<DVector<f64>>,
    pub ddq: DVector<f64>,
    /// Per-arm target acceleration `(ax, ay, alpha)`.
    pub targets: Vec<Vector3<f64>>,
    /// Per-arm velocity reference of the active mode.
    pub references: Vec<Twist2>,
    pub mode: Mode,
    pub gamma: f64,
    pub qp_status: QpStatus,
    pub kkt_residual: f64,
    /// `|p_2m - p_1|` for two arms.
    pub mirror_distance: Option<f64>,
    /// Object position inferred from the end effectors (post modes).
    pub object_estimate: Option<Vec2>,
    pub degenerate_field: bool,
}

impl ControlOutput {
    /// Norm of the stacked target accelerations.
    pub fn target_norm(&self) -> f64 {
        self.targets.iter().map(|t| t.norm_squared()).sum::<f64>().sqrt()
    }
}

pub struct Controller {
    pub config: ControllerConfig,
    pub setup: ControllerSetup,
    models: Vec<RobotModel>,
    dataset: Option<Arc<ImpactDataset>>,
    detector: ImpactDetector,
    pub state: ControllerState,
    step: usize,
}

impl Controller {
    pub fn new(
        config: ControllerConfig,
        setup: ControllerSetup,
        models: Vec<RobotModel>,
        dataset: Option<Arc<ImpactDataset>>,
    ) -> Result<Self, ControlError> {
        config.validate()?;
        if setup.arms.len() != models.len() || !(1..=2).contains(&models.len()) {
            return Err(ControlError::Config(format!(
                "{} arm tasks for {} robot models",
                setup.arms.len(),
                models.len()
            )));
        }
        if config.variant.uses_impact_map() {
            match &dataset {
                Some(d) if d.weights().is_some() && d.arm_count == models.len() => {}
                Some(_) => return Err(ControlError::Config("impact dataset does not match the arms or lacks weights".into())),
                None => return Err(ControlError::MissingDataset(config.variant.name())),
            }
        }
        let n = models.len();
        let detector = ImpactDetector::new(n, config.detection_threshold, config.detection_latency_steps);
        Ok(Self {
            config,
            setup,
            models,
            dataset,
            detector,
            state: ControllerState {
                mode: Mode::Ante,
                k_imp: None,
                t_imp: None,
                impact_detected: vec![false; n],
                detection_step: vec![None; n],
                p_int: vec![Vec2::zeros(); n],
                v_o_est_plus: None,
                p_o_plus: None,
                impact_keys: None,
                post_fields: Vec::new(),
                previous_ddq: None,
                warm_start: Vec::new(),
                qp_fallbacks: 0,
            },
            step: 0,
        })
    }

    pub fn set_detection_latency(&mut self, steps: usize) {
        self.detector.latency = steps;
    }

    pub fn models(&self) -> &[RobotModel] {
        &self.models
    }

    pub fn snapshots(&self, robots: &[RobotState]) -> Vec<ArmSnapshot> {
        self.models
            .iter()
            .zip(robots)
            .map(|(m, s)| ArmSnapshot::new(m, s, &self.setup.arm_gravity))
            .collect()
    }

    /// Blend factor of the interim mode at control step `k`.
    pub fn gamma(&self, k: usize) -> f64 {
        match self.state.k_imp {
            Some(k0) if k >= k0 => ((k - k0) as f64 / self.config.interim_steps() as f64).min(1.0),
            _ => 0.0,
        }
    }

    /// Object position implied by the end effectors and the face
    /// coordinates cached at the switch.
    pub fn object_estimate(&self, arms: &[ArmSnapshot], keys: &[f64]) -> Vec2 {
        let sum: Vec2 = self
            .setup
            .arms
            .iter()
            .zip(arms)
            .zip(keys)
            .map(|((task, a), s)| a.p - task.contact_offset * task.face_normal - *s * task.face_tangent)
            .sum();
        sum / arms.len() as f64
    }

    /// Ante target `a_d(p) + D (v_d(p) - v)` and the reference twist.
    pub fn ante_target(&self, i: usize, arm: &ArmSnapshot) -> (Vector3<f64>, Twist2, bool) {
        let f = &self.setup.arms[i].ante;
        let (v, degenerate) = f.velocity_or_impact(arm.p);
        let a = if degenerate {
            Vec2::zeros()
        } else {
            f.acceleration(arm.p).unwrap_or_else(|_| Vec2::zeros())
        };
        let (w, alpha) = crate::fields::angular_refs(arm.theta, f.theta_d, f.kappa_r);
        let vref = Vector3::new(v.x, v.y, w);
        let d = Vector3::from(self.config.d_track);
        let target = Vector3::new(a.x, a.y, alpha) + d.component_mul(&(vref - arm.v));
        (target, Twist2::from_vector(&vref), degenerate)
    }

    /// Feedforward wrench for arm `i` given the post reference velocity.
    pub fn feedforward_wrench(&self, i: usize, v_ref: Vec2) -> Vector3<f64> {
        let speed = v_ref.norm();
        let along = if speed > 0.0 {
            v_ref / speed * (speed / self.config.friction_ff_speed).min(1.0)
        } else {
            Vec2::zeros()
        };
        let n_arms = self.models.len() as f64;
        let f = match self.setup.wrench {
            WrenchModel::None => Vec2::zeros(),
            WrenchModel::Push { mu_ground, mass, gravity } => mu_ground * mass * gravity * along / n_arms,
            WrenchModel::Grab {
                mu_ground,
                mu_contact,
                mass,
                gravity,
            } => {
                let load = mu_ground * mass * gravity;
                let clamp = self.config.clamp_safety * (mass * self.config.grab_a_max).max(load) / (2.0 * mu_contact);
                -clamp * self.setup.arms[i].face_normal + load * along / n_arms
            }
        };
        Vector3::new(f.x, f.y, 0.0)
    }

    /// Post target `a_d^p(p_o) + Lambda^-1 f + D (v_d^p(p_o) - v)` and the
    /// reference twist.
    pub fn post_target(&self, i: usize, arm: &ArmSnapshot, p_o: Vec2) -> (Vector3<f64>, Twist2) {
        let f = &self.state.post_fields[i];
        let v = f.velocity(p_o).unwrap_or_else(|_| f.attractor(p_o));
        let a = f.acceleration(p_o).unwrap_or_else(|_| Vec2::zeros());
        let (w, alpha) = crate::fields::angular_refs(arm.theta, f.theta_d, f.kappa_r);
        let vref = Vector3::new(v.x, v.y, w);
        let wrench = self.feedforward_wrench(i, v);
        let d = Vector3::from(self.config.d_track);
        let target = Vector3::new(a.x, a.y, alpha) + arm.inverse_task_inertia() * wrench + d.component_mul(&(vref - arm.v));
        (target, Twist2::from_vector(&vref))
    }

    /// Interim target at blend factor `gamma`; the first term is the ante
    /// feedforward plus pose feedback toward `p_int`.
    pub fn interim_target(&self, i: usize, arm: &ArmSnapshot, p_o: Vec2, gamma: f64) -> (Vector3<f64>, Twist2) {
        let f = &self.setup.arms[i].ante;
        let a = if f.velocity(arm.p).is_ok() {
            f.acceleration(arm.p).unwrap_or_else(|_| Vec2::zeros())
        } else {
            Vec2::zeros()
        };
        let (_, alpha) = crate::fields::angular_refs(arm.theta, f.theta_d, f.kappa_r);
        let dp = self.state.p_int[i] - arm.p;
        let pose_err = Vector3::new(dp.x, dp.y, tasks::orientation_error(arm.theta, f.theta_d));
        let k = Vector3::from(self.config.k_track);
        let ante = Vector3::new(a.x, a.y, alpha) + k.component_mul(&pose_err);
        let (post, vref) = self.post_target(i, arm, p_o);
        ((1.0 - gamma) * ante + gamma * post, vref)
    }

    fn enter_post_phase(&mut self, k: usize, arms: &[ArmSnapshot]) -> Result<(), ControlError> {
        let keys: Vec<f64> = self.setup.arms.iter().zip(arms).map(|(t, a)| t.project(a.p)).collect();
        let p_o_plus = self.object_estimate(arms, &keys);
        let v_est = if self.config.variant.uses_impact_map() {
            let d = self.dataset.as_ref().expect("checked at construction");
            Some(d.interpolate(&keys)?)
        } else {
            None
        };
        let tpl = &self.setup.post;
        self.state.post_fields = self
            .setup
            .arms
            .iter()
            .map(|t| PostFieldParams {
                p_of: tpl.p_of,
                kappa_p: tpl.kappa_p,
                r_min: tpl.r_min,
                r_max: tpl.r_max,
                v_o_est_plus: v_est.map(|v| v.linear()),
                p_o_plus,
                kappa_r: tpl.kappa_r,
                theta_d: t.theta_d_post,
            })
            .collect();
        if let Err(e) = self.state.post_fields[0].validate() {
            log::warn!("post-impact field at step {k}: {e}");
        }
        self.state.k_imp = Some(k);
        self.state.t_imp = Some(k as f64 * self.config.dt);
        self.state.p_int = arms.iter().map(|a| a.p).collect();
        self.state.v_o_est_plus = v_est;
        self.state.p_o_plus = Some(p_o_plus);
        self.state.impact_keys = Some(keys);
        Ok(())
    }

    /// One control step from the measured robot states.
    pub fn step(&mut self, robots: &[RobotState]) -> Result<ControlOutput, ControlError> {
        let k = self.step;
        self.step += 1;
        let arms = self.snapshots(robots);
        let ee: Vec<Vec2> = arms.iter().map(|a| a.p).collect();
        let dq: Vec<DVector<f64>> = robots.iter().map(|r| r.dq.clone()).collect();
        let center = self.setup.arms[0].ante.p_o_est;
        let radius = self.setup.arms[0].ante.r_min;
        let flags = self.detector.update(k, &dq, &ee, center, radius);
        for (i, f) in flags.iter().enumerate() {
            if *f && self.state.detection_step[i].is_none() {
                self.state.detection_step[i] = Some(k);
            }
        }
        self.state.impact_detected = flags.clone();

        let interim_steps = self.state.k_imp.map_or(0, |k0| k - k0);
        let next = next_mode(self.config.variant, self.state.mode, &flags, interim_steps, self.config.interim_steps());
        if self.state.mode == Mode::Ante && next != Mode::Ante {
            self.enter_post_phase(k, &arms)?;
        }
        self.state.mode = next;

        let n_arms = arms.len();
        let object_estimate = self
            .state
            .impact_keys
            .as_ref()
            .map(|keys| self.object_estimate(&arms, keys));
        let gamma = if self.state.mode == Mode::Interim { self.gamma(k) } else { 0.0 };
        let mut targets = Vec::with_capacity(n_arms);
        let mut references = Vec::with_capacity(n_arms);
        let mut degenerate_field = false;
        for (i, arm) in arms.iter().enumerate() {
            let (t, r) = match self.state.mode {
                Mode::Ante => {
                    let (t, r, deg) = self.ante_target(i, arm);
                    degenerate_field |= deg;
                    (t, r)
                }
                Mode::Interim => self.interim_target(i, arm, object_estimate.expect("set on switch"), gamma),
                Mode::Post => self.post_target(i, arm, object_estimate.expect("set on switch")),
            };
            targets.push(t);
            references.push(r);
        }

        // synchronisation task
        let mut mirror_distance = None;
        let mut sync_targets = Vec::new();
        if n_arms == 2 {
            let n = self.setup.arms[0].face_normal;
            let ts = tasks::mirror_operator(&n);
            let d12 = (tasks::mirror_point(&ts, arms[1].p, center) - arms[0].p).norm();
            let d21 = (tasks::mirror_point(&ts, arms[0].p, center) - arms[1].p).norm();
            debug_assert!((d12 - d21).abs() <= 1e-9 * (1.0 + d12));
            mirror_distance = Some(d12);
            if self.state.mode == Mode::Ante {
                for i in 0..2 {
                    let j = 1 - i;
                    let own = (arms[i].p, arms[i].linear_velocity());
                    let partner = (arms[j].p, arms[j].linear_velocity());
                    sync_targets.push(tasks::sync_target(self.config.k_sync, &ts, center, own, partner));
                }
            }
        }

        // QP over stacked joint accelerations
        let dims: Vec<usize> = self.models.iter().map(|m| m.n_links()).collect();
        let dim: usize = dims.iter().sum();
        let mut blocks = Vec::with_capacity(n_arms);
        let mut rows = Vec::new();
        let mut offset = 0;
        for (i, arm) in arms.iter().enumerate() {
            let n = dims[i];
            let mut block = CostBlock::new(n);
            let jac = DMatrix::from_iterator(3, n, arm.jac.iter().copied());
            block.add_least_squares(self.config.w_track, &jac, &DVector::from_column_slice((targets[i] - arm.jdot_qdot).as_slice()));
            if n >= 4 {
                let kq = self.config.k_q;
                let damping = if self.state.mode == Mode::Interim { gamma } else { 1.0 } * 2.0 * kq.sqrt();
                let xi_d = self.setup.arms[i].ante.xi_d;
                let b = -damping * arm.dq[0] + kq * (xi_d - arm.q[0]);
                let mut a = DMatrix::zeros(1, n);
                a[(0, 0)] = 1.0;
                block.add_least_squares(self.config.w_q, &a, &DVector::from_element(1, b));
            }
            if let (Some(s), Some(d)) = (sync_targets.get(i), mirror_distance) {
                let jl = jac.rows(0, 2).into_owned();
                let b = DVector::from_column_slice(&[s.x - arm.jdot_qdot[0], s.y - arm.jdot_qdot[1]]);
                block.add_least_squares(self.config.w_sync * d, &jl, &b);
            }
            blocks.push(block);
            rows.extend(tasks::limit_rows(&self.models[i], arm, self.config.dt, offset, dim));
            offset += n;
        }
        let problem = tasks::assemble(blocks, rows);
        let sol = qp::solve(&problem, Some(&self.state.warm_start))?;
        let ddq = if sol.status == QpStatus::Optimal {
            self.state.warm_start = sol.active_set.clone();
            sol.x.clone()
        } else {
            self.state.qp_fallbacks += 1;
            log::warn!("QP {:?} at step {k}; reusing previous accelerations", sol.status);
            self.state.previous_ddq.clone().unwrap_or_else(|| DVector::zeros(dim))
        };
        self.state.previous_ddq = Some(ddq.clone());

        let mut torques = Vec::with_capacity(n_arms);
        let mut offset = 0;
        for (i, arm) in arms.iter().enumerate() {
            let seg = ddq.rows(offset, dims[i]).into_owned();
            torques.push(arm.torque(&seg));
            offset += dims[i];
        }

        // advance the interim position references
        if self.state.mode == Mode::Interim {
            for (i, task) in self.setup.arms.iter().enumerate() {
                let (v, _) = task.ante.velocity_or_impact(self.state.p_int[i]);
                self.state.p_int[i] += v * self.config.dt;
            }
        }

        Ok(ControlOutput {
            torques,
            ddq,
            targets,
            references,
            mode: self.state.mode,
            gamma,
            qp_status: sol.status,
            kkt_residual: sol.kkt_residual,
            mirror_distance,
            object_estimate,
            degenerate_field,
        })
    }
}
