//! Scenario presets and the JSON scenario file.
//!
//! Two use cases are provided: a single 4-link arm that hits and pushes a
//! box across the ground, and two mirrored 4-link arms that grab a box
//! between opposite faces. Every scenario is fully described by a
//! [`ScenarioConfig`].

use std::path::PathBuf;

use nalgebra::{DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::{ArmTask, ControllerConfig, ControllerSetup, PostTemplate, Variant, WrenchModel};
use crate::dynamics::ik::{joint_velocity_for_twist, solve_pose, IkError};
use crate::dynamics::{ModelError, ObjectModel, Plant, RobotModel, RobotState, SimParams, WorldState};
use crate::fields::AnteFieldParams;
use crate::geometry::{Pose2, Twist2, Vec2};
use crate::impact_map::{ImpactArm, ImpactSetup};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial configuration {0:?} is infeasible: {1}")]
    Ik(InitConfig, IkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HitAndPush,
    DualArmGrab,
}

impl ScenarioKind {
    pub fn arm_count(self) -> usize {
        match self {
            ScenarioKind::HitAndPush => 1,
            ScenarioKind::DualArmGrab => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::HitAndPush => "hit_and_push",
            ScenarioKind::DualArmGrab => "dual_arm_grab",
        }
    }

    /// Displacements of the ablation matrix, metres along the shifted axis.
    pub fn displacements(self) -> [f64; 3] {
        match self {
            ScenarioKind::HitAndPush => [-0.03, 0.0, 0.03],
            ScenarioKind::DualArmGrab => [0.0, 0.015, 0.03],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectChoice {
    Parcel,
    Catfood,
    Juice,
}

impl ObjectChoice {
    pub const ALL: [ObjectChoice; 3] = [ObjectChoice::Parcel, ObjectChoice::Catfood, ObjectChoice::Juice];

    pub fn mass(self) -> f64 {
        match self {
            ObjectChoice::Parcel => 0.60,
            ObjectChoice::Catfood => 1.30,
            ObjectChoice::Juice => 2.20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectChoice::Parcel => "parcel",
            ObjectChoice::Catfood => "catfood",
            ObjectChoice::Juice => "juice",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InitConfig {
    A,
    B,
    C,
}

impl InitConfig {
    pub const ALL: [InitConfig; 3] = [InitConfig::A, InitConfig::B, InitConfig::C];

    pub fn name(self) -> &'static str {
        match self {
            InitConfig::A => "A",
            InitConfig::B => "B",
            InitConfig::C => "C",
        }
    }
}

/// Reference-field parameters shared by both use cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    #[serde(rename = "alpha_1_s")]
    pub alpha: f64,
    #[serde(rename = "r_min_a_m")]
    pub r_min_a: f64,
    #[serde(rename = "r_max_a_m")]
    pub r_max_a: f64,
    #[serde(rename = "kappa_r_1_s")]
    pub kappa_r: f64,
    #[serde(rename = "kappa_p_1_s")]
    pub kappa_p: f64,
    #[serde(rename = "r_min_p_m")]
    pub r_min_p: f64,
    #[serde(rename = "r_max_p_m")]
    pub r_max_p: f64,
    /// Approach speed along the face normal.
    #[serde(rename = "impact_normal_speed_m_s")]
    pub impact_normal_speed: f64,
    /// Approach speed along the face (grab only).
    #[serde(rename = "impact_tangent_speed_m_s")]
    pub impact_tangent_speed: f64,
    /// Goal offset of the object from its estimated position.
    #[serde(rename = "goal_offset_m")]
    pub goal_offset: f64,
}

impl FieldConfig {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let base = Self {
            alpha: 5.0,
            r_min_a: 0.15,
            r_max_a: 0.30,
            kappa_r: 30.0,
            kappa_p: 2.0,
            r_min_p: 0.1,
            r_max_p: 0.3,
            impact_normal_speed: 0.5,
            impact_tangent_speed: 0.0,
            goal_offset: 0.38,
        };
        match kind {
            ScenarioKind::HitAndPush => base,
            ScenarioKind::DualArmGrab => Self {
                impact_normal_speed: 0.45,
                impact_tangent_speed: 0.2,
                goal_offset: 0.33,
                ..base
            },
        }
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self::for_kind(ScenarioKind::HitAndPush)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactMapConfig {
    /// Grid size; defaults to 25 (one arm) or 49 (two arms).
    pub samples: Option<usize>,
    /// Half-range of the sampled face coordinate.
    #[serde(rename = "face_extent_m")]
    pub face_extent: f64,
    /// Pre-generated dataset file; generated on demand when absent.
    pub dataset: Option<PathBuf>,
}

impl Default for ImpactMapConfig {
    fn default() -> Self {
        Self {
            samples: None,
            face_extent: 0.04,
            dataset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub object: ObjectChoice,
    pub init: InitConfig,
    /// Unmodelled object shift: along the impacted face normal (push) or
    /// toward the second arm (grab).
    #[serde(rename = "displacement_m", default)]
    pub displacement: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "duration_s", default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub fields: Option<FieldConfig>,
    #[serde(default)]
    pub impact_map: ImpactMapConfig,
    /// Replaces the preset arm models.
    #[serde(default)]
    pub robots: Option<Vec<RobotModel>>,
}

fn default_variant() -> Variant {
    Variant::Proposed
}

fn default_duration() -> f64 {
    2.0
}

/// Everything needed to run one rollout.
#[derive(Clone, Debug)]
pub struct BuiltScenario {
    pub plant: Plant,
    pub controller_config: ControllerConfig,
    pub setup: ControllerSetup,
    pub impact: ImpactSetup,
    pub initial: WorldState,
    pub detection_latency: usize,
    pub steps: usize,
}

/// Box half extents in the object frame. Every scenario presents the short
/// side (0.075 m) to the impacting arms, so impact points lie within the
/// detector radius of the object centre even under a 30 mm displacement.
pub const OBJECT_HALF_EXTENTS: [f64; 2] = [0.10, 0.075];
pub const GROUND_MU: f64 = 0.3;
pub const CONTACT_MU: f64 = 0.6;

const PUSH_CENTER: [f64; 2] = [0.65, 0.0];
// The end effector is a disc, so its orientation is a free design choice.
// These poses keep every preset configuration inside the joint limits with
// the first joint held, and make the normal impulse at the nominal impact
// pose nearly decoupled from the end-effector rotation.
const PUSH_XI: f64 = 0.0;
const PUSH_THETA: f64 = 2.0;
const PUSH_ELBOW: f64 = 1.0;
const GRAB_CENTER: [f64; 2] = [0.0, -0.6];
const GRAB_BASE_X: f64 = 0.575;
const GRAB_XI: f64 = -1.375;
const GRAB_THETA: f64 = -0.25;
const GRAB_ELBOW: f64 = 1.0;

fn push_arm() -> RobotModel {
    RobotModel::uniform_rods(
        &[0.40, 0.35, 0.25, 0.10],
        &[3.0, 2.5, 1.5, 0.8],
        &[0.25, 0.25, 0.15, 0.10],
        Pose2::default(),
    )
}

fn grab_arms() -> Vec<RobotModel> {
    let base = |x: f64, th: f64| {
        RobotModel::uniform_rods(
            &[0.40, 0.35, 0.25, 0.10],
            &[3.0, 2.5, 1.5, 0.8],
            &[0.25, 0.25, 0.15, 0.10],
            Pose2::new(x, 0.0, th),
        )
    };
    vec![base(-GRAB_BASE_X, 0.0), base(GRAB_BASE_X, std::f64::consts::PI)]
}

/// Reflection of `p` across the line through `origin` along `dir`.
fn reflect_across_line(p: Vec2, origin: Vec2, dir: Vec2) -> Vec2 {
    let u = dir.normalize();
    let r = 2.0 * u * u.transpose() - Matrix2::identity();
    origin + r * (p - origin)
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, object: ObjectChoice, init: InitConfig, displacement: f64, variant: Variant, seed: u64) -> Self {
        Self {
            kind,
            object,
            init,
            displacement,
            variant,
            seed,
            duration: default_duration(),
            controller: ControllerConfig::default(),
            sim: SimParams::default(),
            fields: None,
            impact_map: ImpactMapConfig::default(),
            robots: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn field_config(&self) -> FieldConfig {
        self.fields.clone().unwrap_or_else(|| FieldConfig::for_kind(self.kind))
    }

    pub fn robot_models(&self) -> Vec<RobotModel> {
        self.robots.clone().unwrap_or_else(|| match self.kind {
            ScenarioKind::HitAndPush => vec![push_arm()],
            ScenarioKind::DualArmGrab => grab_arms(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.impact_map.samples.unwrap_or(match self.kind {
            ScenarioKind::HitAndPush => 25,
            ScenarioKind::DualArmGrab => 49,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.displacement.abs() <= 0.05) {
            return bad("displacement must lie within ±0.05 m");
        }
        if !(self.duration >= 2.0 && self.duration.is_finite()) {
            return bad("duration must be at least 2 s");
        }
        if self.robot_models().len() != self.kind.arm_count() {
            return bad("robot count does not match the scenario kind");
        }
        let f = self.field_config();
        if !(f.r_min_a < f.r_max_a && f.r_min_p < f.r_max_p) {
            return bad("blend radii must satisfy r_min < r_max");
        }
        if !(f.alpha > 0.0 && f.kappa_r > 0.0 && f.kappa_p > 0.0 && f.impact_normal_speed > 0.0) {
            return bad("field gains and impact speed must be positive");
        }
        if !(f.impact_tangent_speed.is_finite() && f.goal_offset > 0.0) {
            return bad("invalid impact tangent speed or goal offset");
        }
        if !(self.impact_map.face_extent > 0.0 && self.impact_map.face_extent < OBJECT_HALF_EXTENTS[1]) {
            return bad("face_extent_m must be positive and inside the face");
        }
        let n = self.n_samples();
        let grid_ok = match self.kind.arm_count() {
            1 => n >= 2,
            _ => {
                let m = (n as f64).sqrt().round() as usize;
                m >= 2 && m * m == n
            }
        };
        // the kernel system is dense; larger grids are impractical anyway
        if !grid_ok || n > 2500 {
            return bad("impact map samples must be at least 2 (one arm) or a square of at least 4 (two arms), and at most 2500");
        }
        self.controller
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Hash of everything the impact map depends on.
    pub fn map_hash(&self) -> String {
        let key = serde_json::json!({
            "kind": self.kind,
            "object": self.object,
            "sim": self.sim,
            "fields": self.field_config(),
            "robots": self.robot_models(),
            "samples": self.n_samples(),
            "face_extent_m": self.impact_map.face_extent,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }

    fn object_model(&self) -> ObjectModel {
        let [a, b] = OBJECT_HALF_EXTENTS;
        let half = match self.kind {
            ScenarioKind::HitAndPush => [a, b],
            // grabbed across the x axis
            ScenarioKind::DualArmGrab => [b, a],
        };
        ObjectModel::solid_box(self.object.mass(), half, GROUND_MU, CONTACT_MU)
    }

    /// Per-arm tasks and the estimated object centre.
    fn tasks(&self, models: &[RobotModel]) -> (Vec<ArmTask>, PostTemplate, Vec2) {
        let f = self.field_config();
        let [_, h] = OBJECT_HALF_EXTENTS;
        let make = |center: Vec2, normal: Vec2, tangent: Vec2, half: f64, radius: f64, theta_d: f64, xi: f64, elbow: f64, v_imp: Vec2| {
            let offset = half + radius;
            let origin = center + offset * normal;
            ArmTask {
                ante: AnteFieldParams {
                    p_imp: origin,
                    v_imp,
                    alpha: f.alpha,
                    r_min: f.r_min_a,
                    r_max: f.r_max_a,
                    p_o_est: center,
                    theta_d,
                    kappa_r: f.kappa_r,
                    xi_d: xi,
                },
                face_origin: origin,
                face_tangent: tangent,
                face_normal: normal,
                contact_offset: offset,
                theta_d_post: theta_d,
                elbow,
            }
        };
        match self.kind {
            ScenarioKind::HitAndPush => {
                let c = Vec2::new(PUSH_CENTER[0], PUSH_CENTER[1]);
                let n = Vec2::new(0.0, 1.0);
                let v_imp = -f.impact_normal_speed * n + f.impact_tangent_speed * Vec2::new(1.0, 0.0);
                let arm = make(c, n, Vec2::new(1.0, 0.0), h, models[0].ee_radius, PUSH_THETA, PUSH_XI, PUSH_ELBOW, v_imp);
                let post = PostTemplate {
                    p_of: c - f.goal_offset * n,
                    kappa_p: f.kappa_p,
                    r_min: f.r_min_p,
                    r_max: f.r_max_p,
                    kappa_r: f.kappa_r,
                };
                (vec![arm], post, c)
            }
            ScenarioKind::DualArmGrab => {
                let c = Vec2::new(GRAB_CENTER[0], GRAB_CENTER[1]);
                let up = Vec2::new(0.0, 1.0);
                let n1 = Vec2::new(-1.0, 0.0);
                let n2 = Vec2::new(1.0, 0.0);
                let a1 = make(c, n1, up, h, models[0].ee_radius, GRAB_THETA, GRAB_XI, GRAB_ELBOW, -f.impact_normal_speed * n1 + f.impact_tangent_speed * up);
                let a2 = make(c, n2, up, h, models[1].ee_radius, std::f64::consts::PI - GRAB_THETA, -GRAB_XI, -GRAB_ELBOW, -f.impact_normal_speed * n2 + f.impact_tangent_speed * up);
                let post = PostTemplate {
                    p_of: c + f.goal_offset * up,
                    kappa_p: f.kappa_p,
                    r_min: f.r_min_p,
                    r_max: f.r_max_p,
                    kappa_r: f.kappa_r,
                };
                (vec![a1, a2], post, c)
            }
        }
    }

    /// Initial end-effector positions of the chosen configuration.
    pub fn initial_positions(&self, tasks: &[ArmTask]) -> Vec<Vec2> {
        // (distance back along the approach, lateral offset)
        let (back, side) = match self.init {
            InitConfig::A => (0.36, -0.08),
            InitConfig::B => (0.32, 0.08),
            InitConfig::C => (0.42, 0.0),
        };
        let t = &tasks[0];
        let u = t.ante.v_imp.normalize();
        let p1 = t.ante.p_imp - back * u + side * Vec2::new(-u.y, u.x);
        match self.kind {
            ScenarioKind::HitAndPush => vec![p1],
            ScenarioKind::DualArmGrab => {
                // arm 2 starts at the mirror image of arm 1's start reflected
                // across arm 1's approach ray: asymmetric poses, matched
                // approach lengths
                let reflected = reflect_across_line(p1, t.ante.p_imp, t.ante.v_imp);
                let ts = crate::controller::tasks::mirror_operator(&t.face_normal);
                vec![p1, crate::controller::tasks::mirror_point(&ts, reflected, t.ante.p_o_est)]
            }
        }
    }

    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        self.validate()?;
        let models = self.robot_models();
        let mut controller_config = self.controller.clone();
        controller_config.variant = self.variant;
        let (arms, post, center) = self.tasks(&models);
        let object = self.object_model();
        for a in &arms {
            a.ante
                .validate(object.circumradius())
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let plant = Plant::new(models.clone(), object.clone(), self.sim.clone())?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let starts = self.initial_positions(&arms);
        let mut robots = Vec::with_capacity(models.len());
        for ((model, task), p) in models.iter().zip(&arms).zip(starts) {
            let delta: f64 = rng.gen_range(-0.01..=0.01);
            let q = self.perturbed_pose(model, task, p, delta)?;
            let (v, _) = task.ante.velocity_or_impact(p);
            let dq = joint_velocity_for_twist(model, &q, Twist2::new(v.x, v.y, 0.0)).map_err(|e| ScenarioError::Ik(self.init, e))?;
            robots.push(RobotState { q, dq });
        }
        let jitter: i64 = rng.gen_range(-1..=1);
        let detection_latency = (controller_config.detection_latency_steps as i64 + jitter).max(0) as usize;

        let shift = match self.kind {
            ScenarioKind::HitAndPush => arms[0].face_normal * self.displacement,
            ScenarioKind::DualArmGrab => arms[1].face_normal * self.displacement,
        };
        let pose = Pose2::new(center.x + shift.x, center.y + shift.y, 0.0);
        let initial = plant.world_at(robots, pose);

        let wrench = match self.kind {
            ScenarioKind::HitAndPush => WrenchModel::Push {
                mu_ground: GROUND_MU,
                mass: object.mass,
                gravity: self.sim.gravity,
            },
            ScenarioKind::DualArmGrab => WrenchModel::Grab {
                mu_ground: GROUND_MU,
                mu_contact: CONTACT_MU,
                mass: object.mass,
                gravity: self.sim.gravity,
            },
        };
        let arm_gravity = Vec2::new(self.sim.arm_gravity[0], self.sim.arm_gravity[1]);
        let setup = ControllerSetup {
            arms: arms.clone(),
            post,
            wrench,
            arm_gravity,
        };
        let impact = ImpactSetup {
            plant: plant.clone(),
            arms: arms
                .iter()
                .map(|a| ImpactArm {
                    field: a.ante.clone(),
                    face_origin: a.face_origin,
                    face_tangent: a.face_tangent,
                    elbow: a.elbow,
                })
                .collect(),
            object_pose: Pose2::new(center.x, center.y, 0.0),
            scenario_hash: self.map_hash(),
        };
        let steps = (self.duration / controller_config.dt).round() as usize;
        Ok(BuiltScenario {
            plant,
            controller_config,
            setup,
            impact,
            initial,
            detection_latency,
            steps,
        })
    }

    /// Pose with the redundancy angle shifted by `delta`, keeping the
    /// end-effector pose; halves the shift until no joint moves more than
    /// 0.01 rad.
    fn perturbed_pose(&self, model: &RobotModel, task: &ArmTask, p: Vec2, delta: f64) -> Result<DVector<f64>, ScenarioError> {
        let theta = task.ante.theta_d;
        let nominal = solve_pose(model, p, theta, task.ante.xi_d, task.elbow).map_err(|e| ScenarioError::Ik(self.init, e))?;
        let mut d = delta;
        for _ in 0..30 {
            if let Ok(q) = solve_pose(model, p, theta, task.ante.xi_d + d, task.elbow) {
                if (&q - &nominal).amax() <= 0.01 {
                    return Ok(q);
                }
            }
            d *= 0.5;
        }
        Ok(nominal)
    }
}
