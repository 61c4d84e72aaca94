//! Nonlinear spin-exchange dynamics on the Boolean cube, the associated Kac
//! particle system and conservative Down-Up walks, with exact small-instance
//! solvers and Monte Carlo checks.

pub mod error;
pub mod chaos;
pub mod cli;
pub mod downup;
pub mod dynamics;
pub mod field;
pub mod kac;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod model;
pub mod mpp;
pub mod spin;
pub mod table;
pub mod verify;
pub mod wild;

pub use error::{Error, Result};
