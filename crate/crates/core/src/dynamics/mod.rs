//! Planar articulated-arm and free-body dynamics with impulse-based,
//! perfectly inelastic contact.
//!
//! Arms are revolute chains in the horizontal plane, so gravity does not
//! enter the arm dynamics; the object's weight shows up only through the
//! object-ground Coulomb friction.

mod arm;
mod contact;
pub mod ik;
mod model;
mod world;

pub use arm::link_com_positions;
pub use contact::{disc_rectangle_contact, ContactGeometry};
pub use model::{ModelError, ObjectModel, RobotModel};
pub use world::{
    ContactPoint, ObjectState, Plant, RobotState, SimError, SimParams, WorldState,
    IMPACT_MAP_STEP,
};
