//! Learning globally stable point-to-point motion models from demonstrations.
//!
//! A learned state transform `y = g(x)` induces the Lyapunov candidate
//! `V = ½‖y‖²`. Latent velocities are projected so that `yᵀẏ < 0` away from
//! the origin and pulled back to state space through the inverse input
//! Jacobian, which makes every learned field converge to the demonstrated
//! target.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command-line tool
//! and parallel evaluation live in the `stable-ds` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod diffengine;
pub mod dynamics;
mod error;
pub mod evaluation;
pub mod model;
pub mod networks;
pub mod training;

pub use error::{Error, Result};
pub use model::StableDsModel;

/// Largest supported state dimension. Jacobians are inverted in closed form.
pub const MAX_DIM: usize = 3;
