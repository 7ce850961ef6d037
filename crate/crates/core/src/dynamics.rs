//! Lyapunov candidate, projected latent velocity and the pulled-back state
//! velocity: the inference path of a learned system.
//!
//! All functions here work in normalized, target-shifted coordinates; the
//! target is the origin. [`StableDsModel`] offers wrappers in workspace units.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffengine::{eval_with_jacobian, linalg, Engine, JacobianEval};
use crate::model::StableDsModel;
use crate::networks::{forward_dual, LayerView, MlpParams};
use crate::diffengine::DualVec;
use crate::{Error, Result};

/// Jacobians with `|det| <` this are treated as singular.
pub const SINGULAR_DET: f64 = 1e-10;

/// Below this `yᵀn(y)` the training-time projection factor `relu(s)/s` is
/// taken as zero.
pub const SWITCH_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsMode {
    /// `ẏ` comes from the projected latent network.
    Learned,
    /// `ẏ = −y`; the latent network is ignored.
    FixedContraction,
}

impl core::str::FromStr for DynamicsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "fixed-contraction" => Ok(Self::FixedContraction),
            _ => Err(Error::InvalidConfig("mode must be `learned` or `fixed-contraction`")),
        }
    }
}

impl core::fmt::Display for DynamicsMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Learned => "learned",
            Self::FixedContraction => "fixed-contraction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDynamics {
    pub n: MlpParams,
    /// Contraction rate used on the projected branch, in 1/time.
    pub beta: f64,
    pub mode: DynamicsMode,
}

impl LatentDynamics {
    pub fn new(n: MlpParams, beta: f64, mode: DynamicsMode) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig("beta must be positive and finite"));
        }
        Ok(Self { n, beta, mode })
    }

    /// `ẏ` at latent state `y`.
    pub fn velocity(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            DynamicsMode::FixedContraction => Ok(y.iter().map(|v| -v).collect()),
            DynamicsMode::Learned => {
                if y.iter().all(|&v| v == 0.0) {
                    return Ok(vec![0.0; y.len()]);
                }
                let raw = self.n.forward(y)?;
                Ok(project(y, &raw, self.beta))
            }
        }
    }
}

/// `V(y) = ½ yᵀy`.
pub fn lyapunov(y: &[f64]) -> f64 {
    0.5 * y.iter().map(|v| v * v).sum::<f64>()
}

/// The stability projection: keep `n` when `yᵀn < 0`, otherwise fall back
/// to `−βy`. Either branch gives `yᵀẏ < 0` for `y ≠ 0`.
pub fn project(y: &[f64], raw: &[f64], beta: f64) -> Vec<f64> {
    let s: f64 = y.iter().zip(raw).map(|(a, b)| a * b).sum();
    if s < 0.0 {
        raw.to_vec()
    } else {
        y.iter().map(|v| -beta * v).collect()
    }
}

/// Differentiable form used for training:
/// `ẏ = n − (n + βy)·relu(s)/s`, `s = yᵀn`, with `relu(s)/s := 0` for
/// `s ≤ SWITCH_EPS`.
pub fn latent_velocity_recorded<E: Engine>(
    e: &mut E,
    n: &[LayerView<'_, E::Scalar>],
    beta: f64,
    mode: DynamicsMode,
    y: &[E::Scalar],
) -> Result<Vec<E::Scalar>> {
    if mode == DynamicsMode::FixedContraction {
        return Ok(y.iter().map(|&v| e.neg(v)).collect());
    }
    let raw = forward_dual(e, "n", n, DualVec::values_only(y.to_vec()))?.values;
    let s = e.dot(y, &raw);
    if e.value(s) <= SWITCH_EPS {
        return Ok(raw);
    }
    let r = e.relu(s);
    let factor = e.div(r, s);
    Ok(raw
        .iter()
        .zip(y)
        .map(|(&ni, &yi)| {
            let by = e.scale(yi, beta);
            let push = e.add(ni, by);
            let corr = e.mul(push, factor);
            e.sub(ni, corr)
        })
        .collect())
}

/// `ẋ = (∂y/∂x)⁻¹ ẏ` at normalized state `z`.
///
/// Returns exactly zero at the origin without evaluating the solve.
pub fn state_velocity(model: &StableDsModel, z: &[f64]) -> Result<Vec<f64>> {
    Ok(pullback(model, z)?.map_or_else(|| vec![0.0; z.len()], |p| p.velocity))
}

/// `V̇ = yᵀẏ` at normalized state `z`.
pub fn lyapunov_rate(model: &StableDsModel, z: &[f64]) -> Result<f64> {
    Ok(match pullback(model, z)? {
        None => 0.0,
        Some(p) => dot(&p.eval.y, &p.latent_velocity),
    })
}

/// Everything computed on the way to a state velocity.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub eval: JacobianEval,
    pub latent_velocity: Vec<f64>,
    pub velocity: Vec<f64>,
    pub det: f64,
}

impl Pullback {
    /// `‖Jẋ − ẏ‖`
    pub fn residual(&self) -> f64 {
        let d = self.velocity.len();
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.eval.jacobian[i * d..(i + 1) * d];
            let r = dot(row, &self.velocity) - self.latent_velocity[i];
            acc += r * r;
        }
        libm::sqrt(acc)
    }
}

/// Full pullback at `z`, or `None` at the origin.
pub fn pullback(model: &StableDsModel, z: &[f64]) -> Result<Option<Pullback>> {
    model.transform.check_dim(z)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("state must be finite"));
    }
    if z.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let eval = eval_with_jacobian(&model.transform, z)?;
    let latent_velocity = model.latent.velocity(&eval.y)?;
    let d = z.len();
    let det = linalg::det(&eval.jacobian, d);
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::NearSingularJacobian { x: z.to_vec(), det });
    }
    let velocity = linalg::solve(&eval.jacobian, &latent_velocity)
        .ok_or_else(|| Error::NearSingularJacobian { x: z.to_vec(), det })?;
    Ok(Some(Pullback {
        eval,
        latent_velocity,
        velocity,
        det,
    }))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
