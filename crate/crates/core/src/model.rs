use alloc::vec::Vec;

use crate::data::Normalization;
use crate::dynamics::{self, lyapunov, DynamicsMode, LatentDynamics};
use crate::networks::{init_params, Layout, TransformSpec};
use crate::{Error, Result};

/// The deployable artifact: transform networks, latent dynamics and the
/// normalization that maps workspace units to the model's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StableDsModel {
    pub transform: TransformSpec,
    pub latent: LatentDynamics,
    pub normalization: Normalization,
}

impl StableDsModel {
    pub fn new(transform: TransformSpec, latent: LatentDynamics, normalization: Normalization) -> Result<Self> {
        let d = transform.state_dim;
        for found in [latent.n.input_dim, latent.n.output_dim, normalization.dim()] {
            if found != d {
                return Err(Error::DimensionMismatch { expected: d, found });
            }
        }
        Ok(Self {
            transform,
            latent,
            normalization,
        })
    }

    /// A freshly initialized model.
    pub fn initialize(
        seed: u64,
        layout: &Layout,
        beta: f64,
        mode: DynamicsMode,
        normalization: Normalization,
    ) -> Result<Self> {
        let (transform, n) = init_params(seed, layout)?;
        Self::new(transform, LatentDynamics::new(n, beta, mode)?, normalization)
    }

    pub fn state_dim(&self) -> usize {
        self.transform.state_dim
    }

    pub fn mode(&self) -> DynamicsMode {
        self.latent.mode
    }

    pub fn beta(&self) -> f64 {
        self.latent.beta
    }

    pub fn target(&self) -> &[f64] {
        &self.normalization.target
    }

    pub fn param_count(&self) -> usize {
        self.transform.param_count() + self.latent.n.param_count()
    }

    /// All trainable parameters in `m1 | m2 | n` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.transform.m1.write_flat(&mut out);
        self.transform.m2.write_flat(&mut out);
        self.latent.n.write_flat(&mut out);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length");
        let mut at = self.transform.m1.read_flat(flat);
        at += self.transform.m2.read_flat(&flat[at..]);
        self.latent.n.read_flat(&flat[at..]);
    }

    /// State velocity in workspace units at workspace state `x`.
    pub fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let z = self.normalization.to_normalized(x);
        let zdot = dynamics::state_velocity(self, &z)?;
        Ok(self.normalization.velocity_from_normalized(&zdot))
    }

    /// `V̇ = yᵀẏ` at workspace state `x` (normalized time units).
    pub fn lyapunov_rate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        dynamics::lyapunov_rate(self, &self.normalization.to_normalized(x))
    }

    /// `V = ½‖g(x)‖²` at workspace state `x`.
    pub fn lyapunov(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let y = self.transform.transform(&self.normalization.to_normalized(x))?;
        Ok(lyapunov(&y))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}
