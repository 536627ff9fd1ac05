//! Transverse coordinates around the periodic orbit, the linearized transverse
//! dynamics, and periodic LQR synthesis.

pub mod chart;
pub mod lqr;
pub mod ltv;

pub use chart::{chart_invert, orbit_error, to_transverse, wrap_angle, TicTocChart, TransverseChart, TransverseCoords};
pub use lqr::{monodromy, monodromy_from, periodic_lqr, transition, GainSchedule, Monodromy, Multiplier};
pub use ltv::{full_linearization, gramian, gramian_from, linearize, orthogonal_linearization, Gramian, LtvModel};
