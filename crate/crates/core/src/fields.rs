//! Time-invariant ante- and post-impact reference fields.
//!
//! The ante-impact field steers each end effector onto a straight approach
//! ray through the desired impact location and, close to the object,
//! collapses to the constant impact velocity. The post-impact field blends
//! the predicted post-impact object velocity into a linear attractor toward
//! the final object position.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Twist2, Vec2};

/// Central-difference step for field Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FieldError {
    #[error("blend radii must satisfy r_min < r_max (got {r_min} and {r_max})")]
    InvalidBounds { r_min: f64, r_max: f64 },
    #[error("ante-impact direction is degenerate")]
    DegenerateDirection,
    #[error("invalid field parameter: {0}")]
    Parameter(&'static str),
}

/// First-order smoothstep: 0 below `r_min`, 1 above `r_max`, `3w^2 - 2w^3`
/// in between.
pub fn smoothstep(r: f64, r_min: f64, r_max: f64) -> Result<f64, FieldError> {
    if !(r_min < r_max) {
        return Err(FieldError::InvalidBounds { r_min, r_max });
    }
    Ok(if r <= r_min {
        0.0
    } else if r >= r_max {
        1.0
    } else {
        let w = (r - r_min) / (r_max - r_min);
        w * w * (3.0 - 2.0 * w)
    })
}

/// Angular velocity and acceleration references driving `theta` to
/// `theta_d` exponentially.
pub fn angular_refs(theta: f64, theta_d: f64, kappa: f64) -> (f64, f64) {
    let err = wrap_angle(theta - theta_d);
    (-kappa * err, kappa * kappa * err)
}

/// `(d field / d p) * field(p)` by central differences.
fn convective_acceleration<F>(field: F, p: Vec2) -> Result<Vec2, FieldError>
where
    F: Fn(Vec2) -> Result<Vec2, FieldError>,
{
    let v = field(p)?;
    let h = JACOBIAN_STEP;
    let dx = (field(p + Vec2::new(h, 0.0))? - field(p - Vec2::new(h, 0.0))?) / (2.0 * h);
    let dy = (field(p + Vec2::new(0.0, h))? - field(p - Vec2::new(0.0, h))?) / (2.0 * h);
    let jac = Matrix2::from_columns(&[dx, dy]);
    Ok(jac * v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnteFieldParams {
    /// Desired impact location.
    #[serde(rename = "p_imp_m")]
    pub p_imp: Vec2,
    /// Desired impact velocity.
    #[serde(rename = "v_imp_m_s")]
    pub v_imp: Vec2,
    /// Shaping gain pulling the end effector onto the approach ray.
    #[serde(rename = "alpha_1_s")]
    pub alpha: f64,
    #[serde(rename = "r_min_m")]
    pub r_min: f64,
    #[serde(rename = "r_max_m")]
    pub r_max: f64,
    /// Estimated object centre.
    #[serde(rename = "p_o_est_m")]
    pub p_o_est: Vec2,
    #[serde(rename = "theta_d_rad")]
    pub theta_d: f64,
    #[serde(rename = "kappa_r_1_s")]
    pub kappa_r: f64,
    /// Desired first-joint position (redundancy reference).
    #[serde(rename = "xi_d_rad")]
    pub xi_d: f64,
}

impl AnteFieldParams {
    /// Checks the parameter invariants; `object_circumradius` is the largest
    /// centre-to-corner distance of the object.
    pub fn validate(&self, object_circumradius: f64) -> Result<(), FieldError> {
        if !(self.v_imp.norm() > 0.0) {
            return Err(FieldError::Parameter("impact velocity must be non-zero"));
        }
        if !(self.r_min < self.r_max) {
            return Err(FieldError::InvalidBounds {
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        if !(self.r_min > object_circumradius) {
            return Err(FieldError::Parameter("r_min must exceed the object circumradius"));
        }
        if !(self.alpha > 0.0 && self.kappa_r > 0.0) {
            return Err(FieldError::Parameter("alpha and kappa_r must be positive"));
        }
        Ok(())
    }

    pub fn intermediate_target(&self, p: Vec2) -> Vec2 {
        self.p_imp - self.v_imp * ((self.p_imp - p).norm() / self.v_imp.norm())
    }

    /// Direction-shaped field with magnitude `|v_imp|`.
    pub fn velocity_raw(&self, p: Vec2) -> Result<Vec2, FieldError> {
        let dir = self.v_imp + self.alpha * (self.intermediate_target(p) - p);
        let norm = dir.norm();
        if norm < DEGENERATE_NORM {
            return Err(FieldError::DegenerateDirection);
        }
        Ok(dir * (self.v_imp.norm() / norm))
    }

    pub fn blend(&self, p: Vec2) -> f64 {
        smoothstep((p - self.p_o_est).norm(), self.r_min, self.r_max).expect("validated radii")
    }

    /// Extended field: raw field far away, exactly `v_imp` near the object.
    pub fn velocity(&self, p: Vec2) -> Result<Vec2, FieldError> {
        let beta = smoothstep((p - self.p_o_est).norm(), self.r_min, self.r_max)?;
        if beta == 0.0 {
            return Ok(self.v_imp);
        }
        Ok(beta * self.velocity_raw(p)? + (1.0 - beta) * self.v_imp)
    }

    /// Like [`velocity`](Self::velocity) but substitutes `v_imp` on the
    /// degenerate ray; the flag reports whether that happened.
    pub fn velocity_or_impact(&self, p: Vec2) -> (Vec2, bool) {
        match self.velocity(p) {
            Ok(v) => (v, false),
            Err(_) => (self.v_imp, true),
        }
    }

    /// Acceleration of a particle flowing along the extended field.
    pub fn acceleration(&self, p: Vec2) -> Result<Vec2, FieldError> {
        convective_acceleration(|x| self.velocity(x), p)
    }

    pub fn twist(&self, p: Vec2, theta: f64) -> Result<Twist2, FieldError> {
        let v = self.velocity(p)?;
        let (w, _) = angular_refs(theta, self.theta_d, self.kappa_r);
        Ok(Twist2::new(v.x, v.y, w))
    }

    pub fn accel_twist(&self, p: Vec2, theta: f64) -> Result<Twist2, FieldError> {
        let a = self.acceleration(p)?;
        let (_, alpha) = angular_refs(theta, self.theta_d, self.kappa_r);
        Ok(Twist2::new(a.x, a.y, alpha))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostFieldParams {
    /// Desired final object position.
    #[serde(rename = "p_of_m")]
    pub p_of: Vec2,
    #[serde(rename = "kappa_p_1_s")]
    pub kappa_p: f64,
    #[serde(rename = "r_min_m")]
    pub r_min: f64,
    #[serde(rename = "r_max_m")]
    pub r_max: f64,
    /// Predicted post-impact object velocity; `None` reduces the field to
    /// the pure attractor.
    #[serde(rename = "v_o_est_plus_m_s")]
    pub v_o_est_plus: Option<Vec2>,
    /// Object position when the impact was detected.
    #[serde(rename = "p_o_plus_m")]
    pub p_o_plus: Vec2,
    #[serde(rename = "kappa_r_1_s")]
    pub kappa_r: f64,
    #[serde(rename = "theta_d_rad")]
    pub theta_d: f64,
}

impl PostFieldParams {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.r_min < self.r_max) {
            return Err(FieldError::InvalidBounds {
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        if self.r_max > (self.p_o_plus - self.p_of).norm() {
            return Err(FieldError::Parameter(
                "r_max must not exceed the distance from the impact position to the goal",
            ));
        }
        if !(self.kappa_p > 0.0 && self.kappa_r > 0.0) {
            return Err(FieldError::Parameter("kappa_p and kappa_r must be positive"));
        }
        Ok(())
    }

    pub fn attractor(&self, p_o: Vec2) -> Vec2 {
        self.kappa_p * (self.p_of - p_o)
    }

    pub fn blend(&self, p_o: Vec2) -> Result<f64, FieldError> {
        match self.v_o_est_plus {
            Some(_) => smoothstep((self.p_o_plus - p_o).norm(), self.r_min, self.r_max),
            None => Ok(1.0),
        }
    }

    pub fn velocity(&self, p_o: Vec2) -> Result<Vec2, FieldError> {
        let Some(v_est) = self.v_o_est_plus else {
            return Ok(self.attractor(p_o));
        };
        let beta = smoothstep((self.p_o_plus - p_o).norm(), self.r_min, self.r_max)?;
        Ok(beta * self.attractor(p_o) + (1.0 - beta) * v_est)
    }

    pub fn acceleration(&self, p_o: Vec2) -> Result<Vec2, FieldError> {
        convective_acceleration(|x| self.velocity(x), p_o)
    }

    pub fn twist(&self, p_o: Vec2, theta: f64) -> Result<Twist2, FieldError> {
        let v = self.velocity(p_o)?;
        let (w, _) = angular_refs(theta, self.theta_d, self.kappa_r);
        Ok(Twist2::new(v.x, v.y, w))
    }

    pub fn accel_twist(&self, p_o: Vec2, theta: f64) -> Result<Twist2, FieldError> {
        let a = self.acceleration(p_o)?;
        let (_, alpha) = angular_refs(theta, self.theta_d, self.kappa_r);
        Ok(Twist2::new(a.x, a.y, alpha))
    }
}
