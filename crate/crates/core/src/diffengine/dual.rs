//! Forward-mode dual numbers carrying one tangent per state dimension.
//!
//! Duals are generic over an [`Engine`] scalar, so the same forward pass
//! yields `∂y/∂x` with plain floats and records it on a tape when parameter
//! gradients are needed.

use alloc::vec::Vec;
use arrayvec::ArrayVec;

use super::engine::Engine;
use crate::networks::Activation;
use crate::MAX_DIM;

/// A value together with its derivatives along `d ≤ MAX_DIM` directions.
#[derive(Debug, Clone)]
pub struct Dual<S> {
    pub value: S,
    pub tangents: ArrayVec<S, MAX_DIM>,
}

impl<S: Copy> Dual<S> {
    /// A dual with all tangents zero.
    pub fn constant<E: Engine<Scalar = S>>(e: &mut E, value: f64, dim: usize) -> Self {
        let zero = e.constant(0.0);
        Self {
            value: e.constant(value),
            tangents: (0..dim).map(|_| zero).collect(),
        }
    }

    /// Seeds direction `k`: tangent `k` is one, the others zero.
    pub fn variable<E: Engine<Scalar = S>>(e: &mut E, value: f64, dim: usize, k: usize) -> Self {
        let zero = e.constant(0.0);
        let one = e.constant(1.0);
        Self {
            value: e.constant(value),
            tangents: (0..dim).map(|j| if j == k { one } else { zero }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.tangents.len()
    }

    pub fn add<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        Self {
            value: e.add(self.value, other.value),
            tangents: self
                .tangents
                .iter()
                .zip(&other.tangents)
                .map(|(&a, &b)| e.add(a, b))
                .collect(),
        }
    }

    pub fn sub<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        Self {
            value: e.sub(self.value, other.value),
            tangents: self
                .tangents
                .iter()
                .zip(&other.tangents)
                .map(|(&a, &b)| e.sub(a, b))
                .collect(),
        }
    }

    /// Product rule, one affine node per tangent.
    pub fn mul<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        let value = e.mul(self.value, other.value);
        let tangents = self
            .tangents
            .iter()
            .zip(&other.tangents)
            .map(|(&da, &db)| e.dot(&[self.value, da], &[db, other.value]))
            .collect();
        Self { value, tangents }
    }

    pub fn div<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        let value = e.div(self.value, other.value);
        // (da - q·db) / b
        let tangents = self
            .tangents
            .iter()
            .zip(&other.tangents)
            .map(|(&da, &db)| {
                let qdb = e.mul(value, db);
                let num = e.sub(da, qdb);
                e.div(num, other.value)
            })
            .collect();
        Self { value, tangents }
    }

    pub fn neg<E: Engine<Scalar = S>>(&self, e: &mut E) -> Self {
        Self {
            value: e.neg(self.value),
            tangents: self.tangents.iter().map(|&t| e.neg(t)).collect(),
        }
    }

    pub fn scale<E: Engine<Scalar = S>>(&self, e: &mut E, c: f64) -> Self {
        Self {
            value: e.scale(self.value, c),
            tangents: self.tangents.iter().map(|&t| e.scale(t, c)).collect(),
        }
    }

    /// Applies an activation: `σ(a)` with tangents `σ'(a)·da`.
    pub fn activate<E: Engine<Scalar = S>>(&self, e: &mut E, act: Activation) -> Self {
        let (value, slope) = activate_with_slope(e, act, self.value);
        let tangents = match slope {
            Some(s) => self.tangents.iter().map(|&t| e.mul(s, t)).collect(),
            None => self.tangents.clone(),
        };
        Self { value, tangents }
    }
}

/// Returns `σ(a)` and, unless `σ` is the identity, `σ'(a)` as a recorded
/// scalar (so that tangents stay differentiable with respect to `a`).
fn activate_with_slope<E: Engine>(e: &mut E, act: Activation, a: E::Scalar) -> (E::Scalar, Option<E::Scalar>) {
    match act {
        Activation::Linear => (a, None),
        Activation::Softplus => {
            let v = e.softplus(a);
            let s = e.sigmoid(a);
            (v, Some(s))
        }
        Activation::Tanh => {
            let t = e.tanh(a);
            // 1 - tanh² as a function of a
            let tv = e.value(t);
            let s = e.unary(a, 1.0 - tv * tv, || -2.0 * tv * (1.0 - tv * tv));
            (t, Some(s))
        }
        Activation::Relu => {
            let on = e.value(a) > 0.0;
            let v = e.relu(a);
            let s = e.constant(if on { 1.0 } else { 0.0 });
            (v, Some(s))
        }
    }
}

/// A vector of duals in structure-of-arrays layout: `tangents[k][i]` is
/// `∂values[i]/∂x_k`.
#[derive(Debug, Clone)]
pub struct DualVec<S> {
    pub values: Vec<S>,
    pub tangents: ArrayVec<Vec<S>, MAX_DIM>,
}

impl<S: Copy> DualVec<S> {
    /// Seeds `x` as the independent variable: tangent direction `k` is `e_k`.
    pub fn seed<E: Engine<Scalar = S>>(e: &mut E, x: &[f64]) -> Self {
        let zero = e.constant(0.0);
        let one = e.constant(1.0);
        let values = x.iter().map(|&v| e.constant(v)).collect();
        let tangents = (0..x.len())
            .map(|k| (0..x.len()).map(|i| if i == k { one } else { zero }).collect())
            .collect();
        Self { values, tangents }
    }

    /// Values without tangents.
    pub fn values_only(values: Vec<S>) -> Self {
        Self {
            values,
            tangents: ArrayVec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn directions(&self) -> usize {
        self.tangents.len()
    }

    pub fn get(&self, i: usize) -> Dual<S> {
        Dual {
            value: self.values[i],
            tangents: self.tangents.iter().map(|t| t[i]).collect(),
        }
    }

    pub fn from_duals(duals: &[Dual<S>], directions: usize) -> Self {
        Self {
            values: duals.iter().map(|d| d.value).collect(),
            tangents: (0..directions)
                .map(|k| duals.iter().map(|d| d.tangents[k]).collect())
                .collect(),
        }
    }

    pub fn add<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        let zip = |e: &mut E, a: &[S], b: &[S]| -> Vec<S> {
            a.iter().zip(b).map(|(&x, &y)| e.add(x, y)).collect()
        };
        Self {
            values: zip(e, &self.values, &other.values),
            tangents: self
                .tangents
                .iter()
                .zip(&other.tangents)
                .map(|(a, b)| zip(e, a, b))
                .collect(),
        }
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard<E: Engine<Scalar = S>>(&self, e: &mut E, other: &Self) -> Self {
        let d = self.directions();
        let duals: Vec<Dual<S>> = (0..self.len())
            .map(|i| self.get(i).mul(e, &other.get(i)))
            .collect();
        Self::from_duals(&duals, d)
    }

    /// `∂values[i]/∂x_k` in row-major order.
    pub fn jacobian(&self) -> Vec<S> {
        let n = self.len();
        let d = self.directions();
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for k in 0..d {
                out.push(self.tangents[k][i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::engine::Plain;
    use super::*;

    type UnaryCase = (&'static str, fn(&mut Plain, &Dual<f64>) -> Dual<f64>, fn(f64) -> f64);

    fn unary_cases() -> [UnaryCase; 6] {
        [
            ("softplus", |e, a| a.activate(e, Activation::Softplus), super::super::engine::softplus),
            ("tanh", |e, a| a.activate(e, Activation::Tanh), libm::tanh),
            ("relu", |e, a| a.activate(e, Activation::Relu), |x| x.max(0.0)),
            ("linear", |e, a| a.activate(e, Activation::Linear), |x| x),
            ("neg", |e, a| a.neg(e), |x| -x),
            ("scale", |e, a| a.scale(e, 2.5), |x| 2.5 * x),
        ]
    }

    #[test]
    fn unary_duals_match_central_differences() {
        let h = 1e-5;
        let mut e = Plain;
        for (name, op, f) in unary_cases() {
            let mut x: f64 = -2.0;
            while x <= 2.0 {
                if name == "relu" && x.abs() < 2.0 * h {
                    x += 0.0625;
                    continue;
                }
                let d = Dual::variable(&mut e, x, 1, 0);
                let out = op(&mut e, &d);
                let fd = (f(x + h) - f(x - h)) / (2.0 * h);
                assert!((out.value - f(x)).abs() < 1e-15, "{name} value at {x}");
                assert!((out.tangents[0] - fd).abs() < 1e-6, "{name} at {x}: {} vs {fd}", out.tangents[0]);
                x += 0.0625;
            }
        }
    }

    #[test]
    fn binary_duals_match_central_differences() {
        let h = 1e-5;
        let mut e = Plain;
        let ops: [(&str, fn(&mut Plain, &Dual<f64>, &Dual<f64>) -> Dual<f64>, fn(f64, f64) -> f64); 4] = [
            ("add", |e, a, b| a.add(e, b), |a, b| a + b),
            ("sub", |e, a, b| a.sub(e, b), |a, b| a - b),
            ("mul", |e, a, b| a.mul(e, b), |a, b| a * b),
            ("div", |e, a, b| a.div(e, b), |a, b| a / (b + 3.0)),
        ];
        for (name, op, f) in ops {
            for &(x, y) in &[(-2.0, 1.5), (0.3, -0.7), (1.9, 2.0), (0.0, -2.0)] {
                let mut a = Dual::variable(&mut e, x, 2, 0);
                let mut b = Dual::variable(&mut e, y, 2, 1);
                if name == "div" {
                    let three = Dual::constant(&mut e, 3.0, 2);
                    b = b.add(&mut e, &three);
                    a = a.scale(&mut e, 1.0);
                }
                let out = op(&mut e, &a, &b);
                let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
                let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
                assert!((out.tangents[0] - fx).abs() < 1e-6, "{name} d/dx");
                assert!((out.tangents[1] - fy).abs() < 1e-6, "{name} d/dy");
            }
        }
    }

    #[test]
    fn seeded_vector_has_identity_jacobian() {
        let mut e = Plain;
        let v = DualVec::seed(&mut e, &[0.3, -0.7, 2.0]);
        assert_eq!(v.jacobian(), alloc::vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn hadamard_product_rule() {
        let mut e = Plain;
        let x = DualVec::seed(&mut e, &[2.0, 3.0]);
        let sq = x.hadamard(&mut e, &x);
        assert_eq!(sq.values, alloc::vec![4.0, 9.0]);
        assert_eq!(sq.jacobian(), alloc::vec![4.0, 0.0, 0.0, 6.0]);
    }
}
