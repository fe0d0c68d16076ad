//! Curved-road emergency collision avoidance.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: planar halfspaces, circles and n-dimensional polytope algebra
//!   (Minkowski sum, Pontryagin difference, minimal robust positively invariant sets).
//! * [`models`]: kinematic bicycle prediction models, the path-error augmented model
//!   and the velocity-parameterised vertex family used by the tube planner.
//! * [`reference_path`]: clothoid centreline generation and projection.
//! * [`constraints`]: virtual-straight-road boundaries and forward/rear collision
//!   avoidance halfspaces.
//! * [`qp`]: dense convex QP assembly and an interior-point solver.
//! * [`mpc`]: nominal, offset-free and tube-based robust planners.
//! * [`torque_vectoring`]: speed loop, command interpreter and force allocation.
//! * [`plant`]: double-track vehicle with magic-formula tyres.
//! * [`simulation`]: the closed loop, metrics and sweeps.

pub mod constraints;
pub mod error;
pub mod geometry;
pub mod models;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod reference_path;
pub mod simulation;
pub mod tol;
pub mod torque_vectoring;

pub use error::{Error, Result};
pub use geometry::{Circle, Halfspace, Point2, Polytope, Sense};
pub use models::{ControlInput, KinematicState, VehicleParams};
pub use mpc::{MpcConfig, PlannerOutput, Variant};
pub use reference_path::RoadPath;
pub use simulation::{Metrics, Scenario, SimTrace};
