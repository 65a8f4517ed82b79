//! Output tracking control of an age-structured chemostat population.
//!
//! Two simulation routes are provided: a Galerkin modal scheme
//! ([`galerkin`]) and an exact delay-coordinate solver ([`delay`]). Both
//! drive the same saturated output controller ([`controller`]); the
//! Lyapunov certificate and its numerical checks live in [`certificate`].

pub mod certificate;
pub mod controller;
pub mod delay;
pub mod error;
pub mod galerkin;
pub mod grid;
pub mod integrate;
pub mod model;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{AgeGrid, GridFunction};
pub use model::{Equilibrium, InputBounds, ModelParams, Profile};
pub use trajectory::Trajectory;
