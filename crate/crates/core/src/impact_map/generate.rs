use rayon::prelude::*;

use super::rbf::{ImpactDataset, ImpactSample};
use super::MapError;
use crate::dynamics::ik::{joint_velocity_for_twist, solve_pose};
use crate::dynamics::Plant;
use crate::fields::AnteFieldParams;
use crate::geometry::{Pose2, Twist2, Vec2};

/// Per-robot impact geometry for sampling.
#[derive(Clone, Debug)]
pub struct ImpactArm {
    pub field: AnteFieldParams,
    /// Nominal end-effector centre at contact with the face midpoint.
    pub face_origin: Vec2,
    /// Unit direction along the face; keys are coordinates along it.
    pub face_tangent: Vec2,
    /// Elbow sign for the closed-form IK.
    pub elbow: f64,
}

impl ImpactArm {
    /// Projected impact coordinate of an end-effector position.
    pub fn project(&self, p: Vec2) -> f64 {
        (p - self.face_origin).dot(&self.face_tangent)
    }
}

#[derive(Clone, Debug)]
pub struct ImpactSetup {
    pub plant: Plant,
    pub arms: Vec<ImpactArm>,
    pub object_pose: Pose2,
    pub scenario_hash: String,
}

/// Uniform grid over `[-extent, extent]` per arm: `n` points for one arm,
/// `sqrt(n)` squared for two.
pub fn grid_keys(arm_count: usize, n: usize, extent: f64) -> Result<Vec<Vec<f64>>, MapError> {
    let axis = |m: usize| -> Vec<f64> {
        if m == 1 {
            vec![0.0]
        } else {
            (0..m).map(|i| -extent + 2.0 * extent * i as f64 / (m - 1) as f64).collect()
        }
    };
    match arm_count {
        1 if n > 0 => Ok(axis(n).into_iter().map(|s| vec![s]).collect()),
        2 => {
            let m = (n as f64).sqrt().round() as usize;
            if m == 0 || m * m != n {
                return Err(MapError::NotSquare(n));
            }
            let a = axis(m);
            Ok(a.iter().flat_map(|s1| a.iter().map(move |s2| vec![*s1, *s2])).collect())
        }
        1 => Err(MapError::Empty),
        other => Err(MapError::ArmCount(other)),
    }
}

fn sample_at(setup: &ImpactSetup, key: &[f64]) -> Result<Option<ImpactSample>, MapError> {
    let mut qs = Vec::with_capacity(setup.arms.len());
    let mut dqs = Vec::with_capacity(setup.arms.len());
    for (arm, (model, s)) in setup.arms.iter().zip(setup.plant.robots.iter().zip(key)) {
        let p = arm.face_origin + *s * arm.face_tangent;
        let q = match solve_pose(model, p, arm.field.theta_d, arm.field.xi_d, arm.elbow) {
            Ok(q) => q,
            Err(e) => {
                log::warn!("impact-map sample {key:?} skipped: {e}");
                return Ok(None);
            }
        };
        let (v, _) = arm.field.velocity_or_impact(p);
        let dq = match joint_velocity_for_twist(model, &q, Twist2::new(v.x, v.y, 0.0)) {
            Ok(dq) => dq,
            Err(e) => {
                log::warn!("impact-map sample {key:?} skipped: {e}");
                return Ok(None);
            }
        };
        qs.push(q);
        dqs.push(dq);
    }
    let v_o_plus = setup.plant.simulate_impact_event(&qs, &dqs, setup.object_pose)?;
    Ok(Some(ImpactSample {
        key: key.to_vec(),
        v_o_plus,
    }))
}

/// Samples the impact map on a grid of face coordinates. Samples run in
/// parallel; the result keeps grid order.
pub fn generate_dataset(setup: &ImpactSetup, n_samples: usize, face_extent: f64) -> Result<ImpactDataset, MapError> {
    let arm_count = setup.arms.len();
    if arm_count != setup.plant.robots.len() {
        return Err(MapError::Setup {
            setup: arm_count,
            plant: setup.plant.robots.len(),
        });
    }
    let keys = grid_keys(arm_count, n_samples, face_extent)?;
    let results: Vec<Result<Option<ImpactSample>, MapError>> = keys.par_iter().map(|k| sample_at(setup, k)).collect();
    let mut samples = Vec::with_capacity(keys.len());
    for r in results {
        if let Some(s) = r? {
            samples.push(s);
        }
    }
    if samples.len() * 5 < keys.len() * 4 {
        return Err(MapError::TooFewSamples {
            kept: samples.len(),
            requested: keys.len(),
        });
    }
    let mut d = ImpactDataset::new(samples, arm_count, None, setup.scenario_hash.clone())?;
    d.build_weights()?;
    Ok(d)
}
