//! Mean squared velocity error and its parameter gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::dual::DualVec;
use super::engine::{Engine, Plain};
use super::linalg::{cofactor_inverse, mat_vec};
use super::tape::{Tape, Var};
use crate::dynamics::{latent_velocity_recorded, DynamicsMode, SINGULAR_DET};
use crate::model::StableDsModel;
use crate::networks::{transform_dual, LayerView};
use crate::{Error, Result};

/// One normalized `(x, ẋ)` training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Sample {
    pub fn new(state: Vec<f64>, velocity: Vec<f64>) -> Self {
        Self { state, velocity }
    }
}

/// Loss, gradient and sample accounting for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Mean of `‖x̂̇ − ẋ‖²` over the samples that were not skipped.
    pub loss: f64,
    /// `∂loss/∂θ` in [`StableDsModel::flat_params`] order.
    pub gradient: Vec<f64>,
    pub used: usize,
    pub skipped: usize,
}

struct ModelView<'a, S> {
    m1: Vec<LayerView<'a, S>>,
    m2: Vec<LayerView<'a, S>>,
    n: Vec<LayerView<'a, S>>,
    beta: f64,
    mode: DynamicsMode,
}

impl<'a, S> ModelView<'a, S> {
    fn over(model: &StableDsModel, flat: &'a [S]) -> Self {
        let mut at = 0;
        let m1 = model.transform.m1.views_into(flat, &mut at);
        let m2 = model.transform.m2.views_into(flat, &mut at);
        let n = model.latent.n.views_into(flat, &mut at);
        debug_assert_eq!(at, flat.len());
        Self {
            m1,
            m2,
            n,
            beta: model.latent.beta,
            mode: model.latent.mode,
        }
    }
}

/// Squared velocity error of one sample, or `None` when its Jacobian is
/// near-singular.
fn squared_error<E: Engine>(e: &mut E, view: &ModelView<'_, E::Scalar>, sample: &Sample) -> Result<Option<E::Scalar>> {
    let d = sample.state.len();
    let x = DualVec::seed(e, &sample.state);
    let y = transform_dual(e, &view.m1, &view.m2, x)?;
    let jac = y.jacobian();
    let (det, inv) = cofactor_inverse(e, &jac, d);
    if !(e.value(det).abs() >= SINGULAR_DET) {
        return Ok(None);
    }
    let ydot = latent_velocity_recorded(e, &view.n, view.beta, view.mode, &y.values)?;
    let xdot = mat_vec(e, &inv, &ydot);
    let terms: Vec<_> = xdot
        .iter()
        .zip(&sample.velocity)
        .map(|(&pred, &want)| {
            let want = e.constant(want);
            let r = e.sub(pred, want);
            e.square(r)
        })
        .collect();
    Ok(Some(e.sum(&terms)))
}

fn check_batch(model: &StableDsModel, batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = model.state_dim();
    for s in batch {
        for found in [s.state.len(), s.velocity.len()] {
            if found != d {
                return Err(Error::DimensionMismatch { expected: d, found });
            }
        }
    }
    Ok(())
}

/// Batch loss with plain floats: `(mean squared error, skipped samples)`.
pub fn batch_loss(model: &StableDsModel, batch: &[Sample]) -> Result<(f64, usize)> {
    check_batch(model, batch)?;
    let flat = model.flat_params();
    let view = ModelView::over(model, &flat);
    let mut total = 0.0;
    let mut used = 0;
    for s in batch {
        if let Some(err) = squared_error(&mut Plain, &view, s)? {
            total += err;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateBatch { skipped: batch.len() });
    }
    Ok((total / used as f64, batch.len() - used))
}

/// Reusable buffers for repeated gradient evaluations.
#[derive(Debug, Default)]
pub struct GradientWorkspace {
    tape: Tape,
    leaves: Vec<Var>,
    adjoints: Vec<f64>,
}

impl GradientWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Gradient of the mean squared velocity error over `batch`.
    ///
    /// Each sample is recorded on its own tape pass and reversed; per-sample
    /// gradients are summed in batch order.
    pub fn loss_gradient(&mut self, model: &StableDsModel, batch: &[Sample]) -> Result<GradientBundle> {
        check_batch(model, batch)?;
        let flat = model.flat_params();
        let p = flat.len();
        let mut gradient = vec![0.0; p];
        let mut total = 0.0;
        let mut used = 0;
        for sample in batch {
            self.tape.clear();
            self.leaves.clear();
            for &v in &flat {
                let leaf = self.tape.leaf(v);
                self.leaves.push(leaf);
            }
            let view = ModelView::over(model, &self.leaves);
            let Some(err) = squared_error(&mut self.tape, &view, sample)? else {
                continue;
            };
            total += self.tape.value(err);
            used += 1;
            self.tape.backward_into(err, &mut self.adjoints);
            for (g, a) in gradient.iter_mut().zip(&self.adjoints[..p]) {
                *g += a;
            }
        }
        if used == 0 {
            return Err(Error::DegenerateBatch { skipped: batch.len() });
        }
        let inv = 1.0 / used as f64;
        gradient.iter_mut().for_each(|g| *g *= inv);
        Ok(GradientBundle {
            loss: total * inv,
            gradient,
            used,
            skipped: batch.len() - used,
        })
    }
}

pub fn loss_gradient(model: &StableDsModel, batch: &[Sample]) -> Result<GradientBundle> {
    GradientWorkspace::new().loss_gradient(model, batch)
}
