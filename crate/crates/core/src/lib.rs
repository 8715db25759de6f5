//! Planar simulation and control toolkit for robot motions with intentional,
//! nominally simultaneous impacts.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: planar n-link arms, a rigid rectangular object and an
//!   impulse-based inelastic contact solver. Used both as the closed-loop
//!   plant and to sample impact maps.
//! - [`fields`]: time-invariant ante- and post-impact velocity fields.
//! - [`impact_map`]: simulation-sampled impact datasets and Gaussian RBF
//!   interpolation of the post-impact object velocity.
//! - [`qp`]: dense dual active-set QP solver.
//! - [`controller`]: the three-mode (ante / interim / post) task-space QP
//!   controller and its ablation variants.
//! - [`scenario`] and [`harness`]: scenario presets, rollouts, ablation
//!   batches, CSV and SVG artifacts.

pub mod controller;
pub mod dynamics;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod impact_map;
pub mod qp;
pub mod scenario;

pub use geometry::{wrap_angle, Pose2, Twist2, Vec2};
