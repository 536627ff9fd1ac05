pub mod cli;
pub mod error;
pub mod feasibility;
pub mod io;
pub mod mech;
pub mod ode;
pub mod sim;
pub mod singular_solver;
pub mod spline;
pub mod trajectory;
pub mod transverse;
pub mod vhc;

pub use error::{Error, Result};
