//! Landau-level exciton and trion exact diagonalization feeding a driven
//! cavity model, with pulse-based gate synthesis on top.
//!
//! Scalar-generic pieces (special functions, quadrature, Coulomb integrals,
//! pulse envelopes, the optimizer) take any [`Real`]; the aliases below fix
//! them at `f64`, which is what the rest of the pipeline uses.

pub mod basis;
pub mod control;
pub mod coulomb;
pub mod effective;
pub mod error;
pub mod fewbody;
pub mod pulse;
pub mod response;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Pulse = pulse::Pulse<f64>;
pub type PulseTrain = pulse::PulseTrain<f64>;
pub type Bounds = control::Bounds<f64>;
pub type NelderMeadResult = control::NelderMeadResult<f64>;
pub type CoulombIntegrator = coulomb::CoulombIntegrator<f64>;
