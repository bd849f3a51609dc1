//! Coordinated active and reactive power scheduling for off-grid renewable
//! hydrogen plants with several electrolyzers.
//!
//! The crate is layered bottom-up: [`elz_phys`] and [`rectifier`] describe a
//! single unit, [`fleet`] the commitment logic of several units, [`grid`] the
//! radial network and its resources. [`optimizer`] turns a [`scenario`] into
//! a mixed-integer second-order cone model and solves it; [`simulator`]
//! replays any schedule through the nonlinear models and an AC power flow.

pub mod elz_phys;
pub mod error;
pub mod fleet;
pub mod grid;
pub mod optimizer;
pub mod rectifier;
pub mod scenario;
pub mod simulator;
pub mod synth;

pub use error::{Error, Result};
