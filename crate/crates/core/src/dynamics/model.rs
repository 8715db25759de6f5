use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose2;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("robot model has no links")]
    Empty,
    #[error("field `{field}` has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("field `{field}` entry {index} must be {requirement} (got {value})")]
    Value {
        field: &'static str,
        index: usize,
        requirement: &'static str,
        value: f64,
    },
    #[error("bounds `{field}` are inverted at joint {index}")]
    Bounds { field: &'static str, index: usize },
    #[error("object restitution must be exactly 0 (got {0})")]
    Restitution(f64),
}

/// Kinematic and inertial description of a planar revolute chain.
///
/// Link `k` rotates about joint `k`; its centre of mass sits `com_offsets[k]`
/// along the link axis. `motor_inertia` is the diagonal apparent motor
/// inertia added to the link-side mass matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    #[serde(rename = "link_lengths_m")]
    pub link_lengths: Vec<f64>,
    #[serde(rename = "link_masses_kg")]
    pub link_masses: Vec<f64>,
    #[serde(rename = "link_inertias_kgm2")]
    pub link_inertias: Vec<f64>,
    #[serde(rename = "com_offsets_m")]
    pub com_offsets: Vec<f64>,
    #[serde(rename = "motor_inertia_kgm2")]
    pub motor_inertia: Vec<f64>,
    pub base_pose: Pose2,
    #[serde(rename = "q_min_rad")]
    pub q_min: Vec<f64>,
    #[serde(rename = "q_max_rad")]
    pub q_max: Vec<f64>,
    #[serde(rename = "dq_min_rad_s")]
    pub dq_min: Vec<f64>,
    #[serde(rename = "dq_max_rad_s")]
    pub dq_max: Vec<f64>,
    #[serde(rename = "tau_min_nm")]
    pub tau_min: Vec<f64>,
    #[serde(rename = "tau_max_nm")]
    pub tau_max: Vec<f64>,
    /// Radius of the disc-shaped end effector.
    #[serde(rename = "ee_radius_m")]
    pub ee_radius: f64,
}

impl RobotModel {
    pub fn n_links(&self) -> usize {
        self.link_lengths.len()
    }

    /// Uniform slender-rod chain, handy for tests and presets.
    pub fn uniform_rods(
        lengths: &[f64],
        masses: &[f64],
        motor_inertia: &[f64],
        base_pose: Pose2,
    ) -> Self {
        let n = lengths.len();
        Self {
            link_lengths: lengths.to_vec(),
            link_masses: masses.to_vec(),
            link_inertias: lengths
                .iter()
                .zip(masses)
                .map(|(l, m)| m * l * l / 12.0)
                .collect(),
            com_offsets: lengths.iter().map(|l| 0.5 * l).collect(),
            motor_inertia: motor_inertia.to_vec(),
            base_pose,
            q_min: vec![-2.9; n],
            q_max: vec![2.9; n],
            dq_min: vec![-3.0; n],
            dq_max: vec![3.0; n],
            tau_min: vec![-100.0; n],
            tau_max: vec![100.0; n],
            ee_radius: 0.02,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_links();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let vecs: [(&'static str, &Vec<f64>); 11] = [
            ("link_masses", &self.link_masses),
            ("link_inertias", &self.link_inertias),
            ("com_offsets", &self.com_offsets),
            ("motor_inertia", &self.motor_inertia),
            ("q_min", &self.q_min),
            ("q_max", &self.q_max),
            ("dq_min", &self.dq_min),
            ("dq_max", &self.dq_max),
            ("tau_min", &self.tau_min),
            ("tau_max", &self.tau_max),
            ("link_lengths", &self.link_lengths),
        ];
        for (field, v) in vecs {
            if v.len() != n {
                return Err(ModelError::Length {
                    field,
                    got: v.len(),
                    expected: n,
                });
            }
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(ModelError::Value {
                    field,
                    index,
                    requirement: "finite",
                    value: v[index],
                });
            }
        }
        let positive: [(&'static str, &Vec<f64>); 3] = [
            ("link_lengths", &self.link_lengths),
            ("link_masses", &self.link_masses),
            ("link_inertias", &self.link_inertias),
        ];
        for (field, v) in positive {
            if let Some(index) = v.iter().position(|&x| x <= 0.0) {
                return Err(ModelError::Value {
                    field,
                    index,
                    requirement: "strictly positive",
                    value: v[index],
                });
            }
        }
        if let Some(index) = self.motor_inertia.iter().position(|&x| x < 0.0) {
            return Err(ModelError::Value {
                field: "motor_inertia",
                index,
                requirement: "non-negative",
                value: self.motor_inertia[index],
            });
        }
        if !(self.ee_radius > 0.0) {
            return Err(ModelError::Value {
                field: "ee_radius",
                index: 0,
                requirement: "strictly positive",
                value: self.ee_radius,
            });
        }
        let pairs: [(&'static str, &Vec<f64>, &Vec<f64>); 3] = [
            ("q", &self.q_min, &self.q_max),
            ("dq", &self.dq_min, &self.dq_max),
            ("tau", &self.tau_min, &self.tau_max),
        ];
        for (field, lo, hi) in pairs {
            if let Some(index) = lo.iter().zip(hi).position(|(a, b)| a >= b) {
                return Err(ModelError::Bounds { field, index });
            }
        }
        Ok(())
    }
}

/// Rigid rectangular object sliding on the ground plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "inertia_kgm2")]
    pub inertia: f64,
    #[serde(rename = "half_extents_m")]
    pub half_extents: [f64; 2],
    /// Object-ground Coulomb coefficient.
    pub surface_friction_mu: f64,
    /// End-effector-object Coulomb coefficient.
    pub contact_friction_mu: f64,
    #[serde(default)]
    pub restitution: f64,
}

impl ObjectModel {
    /// Solid box of uniform density.
    pub fn solid_box(mass: f64, half_extents: [f64; 2], surface_mu: f64, contact_mu: f64) -> Self {
        let [a, b] = half_extents;
        Self {
            mass,
            inertia: mass * (a * a + b * b) / 3.0,
            half_extents,
            surface_friction_mu: surface_mu,
            contact_friction_mu: contact_mu,
            restitution: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("mass", self.mass, self.mass > 0.0),
            ("inertia", self.inertia, self.inertia > 0.0),
            ("half_extents", self.half_extents[0], self.half_extents[0] > 0.0),
            ("half_extents", self.half_extents[1], self.half_extents[1] > 0.0),
        ];
        for (field, value, ok) in checks {
            if !ok {
                return Err(ModelError::Value {
                    field,
                    index: 0,
                    requirement: "strictly positive",
                    value,
                });
            }
        }
        for (field, value) in [
            ("surface_friction_mu", self.surface_friction_mu),
            ("contact_friction_mu", self.contact_friction_mu),
        ] {
            if !(value >= 0.0) {
                return Err(ModelError::Value {
                    field,
                    index: 0,
                    requirement: "non-negative",
                    value,
                });
            }
        }
        if self.restitution != 0.0 {
            return Err(ModelError::Restitution(self.restitution));
        }
        Ok(())
    }

    /// Largest distance from the centre to a corner.
    pub fn circumradius(&self) -> f64 {
        self.half_extents[0].hypot(self.half_extents[1])
    }
}
