//! Periodic-orbit laboratory for suspension flows over hyperbolic torus maps.

pub mod cli_runner;
pub mod error;
pub mod homoclinic_shadowing;
pub mod hp;
pub mod jet;
pub mod lattice;
pub mod ode;
pub mod period_asymptotics;
pub mod perturbation_lab;
pub mod rigidity_compare;
pub mod suspension_flow;
pub mod templates_obstruction;
pub mod thermo_orbit_sums;
pub mod torus_maps;

pub use error::{LabError, Result};
