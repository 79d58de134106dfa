//! Simulation and certification of `L^p` string stability for homogeneous chains
//! of interconnected ODE subsystems.
//!
//! * [`signals`]: sampled signals, `L^p` norms, boundary-input generators.
//! * [`string_sim`]: string assembly, guarded RK4 integration, bound checking.
//! * [`certificates`]: composing component gains or dissipation certificates
//!   into length-uniform bounds.
//! * [`linear_string`]: closed-form analysis of the scalar linear chain.
//! * [`lyapunov_check`]: sampling falsifier for pointwise inequalities and
//!   integrated dissipation budgets along trajectories.
//! * [`platoon`]: a bidirectional cruise-controlled vehicle string with barrier
//!   potential, its transformed form, certified constants, and verification runs.
//! * [`cli`]: experiment drivers behind the `sslab` binary.

pub mod certificates;
pub mod cli;
pub mod error;
pub mod linear_string;
pub mod lyapunov_check;
pub mod maps;
pub mod platoon;
pub mod signals;
pub mod string_sim;

pub use error::{Error, Result};
