//! Centroidal net-wrench optimal control and the contact-force QP behind it.
//!
//! The crate is split bottom-up:
//!
//! * [`model`] holds the centroidal dynamics layer (net wrench, pendular force,
//!   friction cones, ZMP and DCM).
//! * [`forceqp`] solves the per-step contact-force QP with exact second-order
//!   cones.
//! * [`analysis`] evaluates the closed-form predictions: moment-Jacobian SVD,
//!   scaling constant, two-foot floor, friction kink and task prefactor.
//! * [`ocp`] transcribes the trajectory problem over a fixed horizon.
//! * [`harness`] drives the parameter sweeps and writes CSV/SVG artifacts.

pub mod analysis;
pub mod error;
pub mod forceqp;
pub mod harness;
pub mod model;
pub mod ocp;

pub use error::{Error, Result};
pub use model::Vec3;
