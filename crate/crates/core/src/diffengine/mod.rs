//! Exact derivatives for the model.
//!
//! Input Jacobians `∂y/∂x` come from forward-mode [`Dual`]s. Parameter
//! gradients of the training loss run the same forward pass on a reverse
//! [`Tape`], so the Jacobian, its closed-form inverse and the projection are
//! all differentiated exactly.

mod dual;
mod engine;
mod gradient;
pub mod linalg;
mod tape;

use alloc::vec::Vec;

pub use dual::{Dual, DualVec};
pub use engine::{sigmoid, softplus, Engine, Plain};
pub use gradient::{batch_loss, loss_gradient, GradientBundle, GradientWorkspace, Sample};
pub use tape::{gradient_of, Gradients, Tape, Var};

use crate::networks::{transform_dual, TransformSpec};
use crate::Result;

/// `y = g(x)` together with `∂y/∂x` from a single forward-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major `d × d`: `jacobian[i·d + k] = ∂yᵢ/∂xₖ`.
    pub jacobian: Vec<f64>,
}

impl JacobianEval {
    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

pub fn eval_with_jacobian(spec: &TransformSpec, x: &[f64]) -> Result<JacobianEval> {
    spec.check_dim(x)?;
    let mut e = Plain;
    let seeded = DualVec::seed(&mut e, x);
    let y = transform_dual(&mut e, &spec.m1.plain_views(), &spec.m2.plain_views(), seeded)?;
    Ok(JacobianEval {
        x: x.to_vec(),
        jacobian: y.jacobian(),
        y: y.values,
    })
}
