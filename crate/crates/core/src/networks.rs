//! The three MLPs and the state transform built from them.
//!
//! The transform is
//!
//! ```text
//! g1(x) = m1(x) ⊙ x
//! y1    = x + g1(x)
//! y     = y1 + m2(g1(x))
//! ```
//!
//! `m1` ends in a Softplus so `1 + m1(x) > 1` component-wise and `g1`
//! vanishes only at the origin; `m2` is bias-free with odd activations so
//! `m2(0) = 0`. Together `g(0) = 0`.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffengine::{DualVec, Engine, Plain};
use crate::{Error, Result, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
    Relu,
    Linear,
}

/// One affine layer followed by an activation. Weights are row-major
/// `output_dim × input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Layer>,
}

/// Borrowed layer parameters in some engine's scalar type.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a, S> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub weights: &'a [S],
    pub bias: Option<&'a [S]>,
}

impl MlpParams {
    /// Validates that layer dimensions chain and weight shapes match.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or(Error::Contract("network has no layers"))?;
        let input_dim = first.input_dim;
        let mut dim = input_dim;
        for layer in &layers {
            if layer.input_dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: layer.input_dim,
                });
            }
            if layer.weights.len() != layer.input_dim * layer.output_dim {
                return Err(Error::Contract("weight matrix shape does not match layer dimensions"));
            }
            if let Some(b) = &layer.bias {
                if b.len() != layer.output_dim {
                    return Err(Error::Contract("bias length does not match layer output"));
                }
            }
            dim = layer.output_dim;
        }
        Ok(Self {
            input_dim,
            output_dim: dim,
            layers,
        })
    }

    /// A fully connected network with uniform fan-in initialization.
    ///
    /// `widths` lists every layer width from input to output. Hidden layers
    /// use `hidden`; the last layer uses `output` and has its weights scaled
    /// by `output_scale`.
    pub fn random(
        rng: &mut impl Rng,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        with_bias: bool,
        output_scale: f64,
    ) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let last = i + 1 == n;
                let scale = if last { output_scale } else { 1.0 };
                let weights = (0..fan_in * fan_out)
                    .map(|_| scale * rng.gen_range(-bound..bound))
                    .collect();
                let bias = with_bias.then(|| {
                    (0..fan_out)
                        .map(|_| scale * rng.gen_range(-bound..bound))
                        .collect()
                });
                Layer {
                    input_dim: fan_in,
                    output_dim: fan_out,
                    activation: if last { output } else { hidden },
                    weights,
                    bias,
                }
            })
            .collect();
        Self {
            input_dim: widths[0],
            output_dim: widths[n],
            layers,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_bias_free(&self) -> bool {
        self.layers.iter().all(|l| l.bias.is_none())
    }

    /// Appends the parameters (per layer: weights, then bias) to `out`.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
    }

    /// Overwrites the parameters from `flat`, returning how many were read.
    pub fn read_flat(&mut self, flat: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + n]);
            at += n;
            if let Some(b) = &mut l.bias {
                let n = b.len();
                b.copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        at
    }

    pub fn plain_views(&self) -> Vec<LayerView<'_, f64>> {
        self.layers
            .iter()
            .map(|l| LayerView {
                input_dim: l.input_dim,
                output_dim: l.output_dim,
                activation: l.activation,
                weights: &l.weights,
                bias: l.bias.as_deref(),
            })
            .collect()
    }

    /// Views into a flat parameter vector laid out as by [`write_flat`](Self::write_flat).
    pub fn views_into<'a, S>(&self, flat: &'a [S], offset: &mut usize) -> Vec<LayerView<'a, S>> {
        self.layers
            .iter()
            .map(|l| {
                let w = &flat[*offset..*offset + l.weights.len()];
                *offset += l.weights.len();
                let bias = l.bias.as_ref().map(|b| {
                    let s = &flat[*offset..*offset + b.len()];
                    *offset += b.len();
                    s
                });
                LayerView {
                    input_dim: l.input_dim,
                    output_dim: l.output_dim,
                    activation: l.activation,
                    weights: w,
                    bias,
                }
            })
            .collect()
    }

    /// Plain forward pass.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: v.len(),
            });
        }
        let out = forward_dual(&mut Plain, "mlp", &self.plain_views(), DualVec::values_only(v.to_vec()))?;
        Ok(out.values)
    }
}

/// Affine-then-activation composition over every layer, propagating
/// tangents when the input carries them.
pub fn forward_dual<E: Engine>(
    e: &mut E,
    network: &'static str,
    layers: &[LayerView<'_, E::Scalar>],
    input: DualVec<E::Scalar>,
) -> Result<DualVec<E::Scalar>> {
    let mut h = input;
    for (index, layer) in layers.iter().enumerate() {
        debug_assert_eq!(h.len(), layer.input_dim);
        let rows = layer.output_dim;
        let cols = layer.input_dim;
        let mut z = DualVec {
            values: Vec::with_capacity(rows),
            tangents: h.tangents.iter().map(|_| Vec::with_capacity(rows)).collect(),
        };
        for r in 0..rows {
            let w = &layer.weights[r * cols..(r + 1) * cols];
            let b = layer.bias.map(|b| b[r]);
            z.values.push(e.affine(w, &h.values, b));
            for (k, t) in h.tangents.iter().enumerate() {
                z.tangents[k].push(e.dot(w, t));
            }
        }
        if layer.activation != Activation::Linear {
            let d = z.directions();
            let duals: Vec<_> = (0..rows)
                .map(|i| z.get(i).activate(e, layer.activation))
                .collect();
            z = DualVec::from_duals(&duals, d);
        }
        let finite = |v: &[E::Scalar]| v.iter().all(|&s| e.value(s).is_finite());
        if !finite(&z.values) || !z.tangents.iter().all(|t| finite(t)) {
            return Err(Error::NumericalOverflow { network, layer: index });
        }
        h = z;
    }
    Ok(h)
}

/// Hidden-layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub state_dim: usize,
    pub m1_hidden: Vec<usize>,
    pub m2_hidden: Vec<usize>,
    pub n_hidden: Vec<usize>,
}

impl Layout {
    /// Three hidden layers of 20 (`m1`, `n`) and 40 (`m2`) units.
    pub fn standard(state_dim: usize) -> Self {
        Self {
            state_dim,
            m1_hidden: alloc::vec![20; 3],
            m2_hidden: alloc::vec![40; 3],
            n_hidden: alloc::vec![20; 3],
        }
    }

    fn widths(&self, hidden: &[usize]) -> Vec<usize> {
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(self.state_dim);
        w.extend_from_slice(hidden);
        w.push(self.state_dim);
        w
    }
}

/// `m1` (Softplus, with bias) and `m2` (Tanh, bias-free), both `ℝᵈ → ℝᵈ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub m1: MlpParams,
    pub m2: MlpParams,
    pub state_dim: usize,
}

/// Final-layer weight scale of freshly initialized networks.
pub const OUTPUT_SCALE: f64 = 0.1;
/// Initial output bias of `m1`; `softplus(-3) ≈ 0.049` keeps `∂y/∂x(0)` near `I`.
pub const M1_OUTPUT_BIAS: f64 = -3.0;

impl TransformSpec {
    pub fn new(m1: MlpParams, m2: MlpParams) -> Result<Self> {
        let d = m1.input_dim;
        if d == 0 || d > MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        for net in [&m1, &m2] {
            if net.input_dim != d || net.output_dim != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: if net.input_dim != d { net.input_dim } else { net.output_dim },
                });
            }
        }
        if !m2.is_bias_free() {
            return Err(Error::InvalidConfig("m2 must be bias-free"));
        }
        Ok(Self { m1, m2, state_dim: d })
    }

    /// `y = g(x)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let (m1, m2) = (self.m1.plain_views(), self.m2.plain_views());
        let y = transform_dual(&mut Plain, &m1, &m2, DualVec::values_only(x.to_vec()))?;
        Ok(y.values)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.m1.param_count() + self.m2.param_count()
    }
}

/// The transform over an arbitrary engine, propagating tangents of `x`.
pub fn transform_dual<E: Engine>(
    e: &mut E,
    m1: &[LayerView<'_, E::Scalar>],
    m2: &[LayerView<'_, E::Scalar>],
    x: DualVec<E::Scalar>,
) -> Result<DualVec<E::Scalar>> {
    let m1x = forward_dual(e, "m1", m1, x.clone())?;
    let g1 = m1x.hadamard(e, &x);
    let y1 = x.add(e, &g1);
    let m2g = forward_dual(e, "m2", m2, g1)?;
    Ok(y1.add(e, &m2g))
}

/// Seed-determined initialization of `(m1, m2)` and the latent network `n`.
pub fn init_params(seed: u64, layout: &Layout) -> Result<(TransformSpec, MlpParams)> {
    let d = layout.state_dim;
    if d == 0 || d > MAX_DIM {
        return Err(Error::UnsupportedDimension(d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m1 = MlpParams::random(
        &mut rng,
        &layout.widths(&layout.m1_hidden),
        Activation::Softplus,
        Activation::Softplus,
        true,
        OUTPUT_SCALE,
    );
    if let Some(b) = m1.layers.last_mut().and_then(|l| l.bias.as_mut()) {
        for v in b.iter_mut() {
            *v += M1_OUTPUT_BIAS;
        }
    }
    let m2 = MlpParams::random(
        &mut rng,
        &layout.widths(&layout.m2_hidden),
        Activation::Tanh,
        Activation::Linear,
        false,
        OUTPUT_SCALE,
    );
    let n = MlpParams::random(
        &mut rng,
        &layout.widths(&layout.n_hidden),
        Activation::Tanh,
        Activation::Linear,
        true,
        1.0,
    );
    Ok((TransformSpec::new(m1, m2)?, n))
}
