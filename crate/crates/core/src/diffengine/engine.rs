//! Scalar evaluation backends.
//!
//! Model code is written once against [`Engine`]. [`Plain`] evaluates with
//! bare `f64`s; [`Tape`](super::Tape) records every primitive together with
//! its local partials so parameter gradients can be accumulated in reverse.

/// A backend for scalar arithmetic.
///
/// Implementors only provide the recording primitives (`constant`, `unary`,
/// `binary`, `affine`). The arithmetic and activation functions are provided
/// on top of them, so every backend shares the same value and partial
/// formulas.
pub trait Engine {
    type Scalar: Copy + core::fmt::Debug;

    fn constant(&mut self, value: f64) -> Self::Scalar;

    fn value(&self, s: Self::Scalar) -> f64;

    /// Records `f(a)` given its value and `∂f/∂a`.
    ///
    /// The partial is lazy so that backends which never differentiate can
    /// skip computing it.
    fn unary(
        &mut self,
        a: Self::Scalar,
        value: f64,
        partial: impl FnOnce() -> f64,
    ) -> Self::Scalar;

    /// Records `f(a, b)` given its value and `(∂f/∂a, ∂f/∂b)`.
    fn binary(
        &mut self,
        a: Self::Scalar,
        b: Self::Scalar,
        value: f64,
        partials: impl FnOnce() -> (f64, f64),
    ) -> Self::Scalar;

    /// Records `bias + Σ wᵢ·xᵢ` as a single node.
    fn affine(
        &mut self,
        w: &[Self::Scalar],
        x: &[Self::Scalar],
        bias: Option<Self::Scalar>,
    ) -> Self::Scalar;

    fn dot(&mut self, w: &[Self::Scalar], x: &[Self::Scalar]) -> Self::Scalar {
        self.affine(w, x, None)
    }

    fn add(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, || (1.0, 1.0))
    }

    fn sub(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, || (1.0, -1.0))
    }

    fn mul(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let (va, vb) = (self.value(a), self.value(b));
        self.binary(a, b, va * vb, || (vb, va))
    }

    fn div(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let (va, vb) = (self.value(a), self.value(b));
        let q = va / vb;
        self.binary(a, b, q, || (1.0 / vb, -q / vb))
    }

    fn neg(&mut self, a: Self::Scalar) -> Self::Scalar {
        let v = -self.value(a);
        self.unary(a, v, || -1.0)
    }

    /// `c·a` for a constant `c`.
    fn scale(&mut self, a: Self::Scalar, c: f64) -> Self::Scalar {
        let v = c * self.value(a);
        self.unary(a, v, || c)
    }

    fn square(&mut self, a: Self::Scalar) -> Self::Scalar {
        let v = self.value(a);
        self.unary(a, v * v, || 2.0 * v)
    }

    fn sqrt(&mut self, a: Self::Scalar) -> Self::Scalar {
        let r = libm::sqrt(self.value(a));
        self.unary(a, r, || 0.5 / r)
    }

    fn softplus(&mut self, a: Self::Scalar) -> Self::Scalar {
        let v = self.value(a);
        self.unary(a, softplus(v), || sigmoid(v))
    }

    fn sigmoid(&mut self, a: Self::Scalar) -> Self::Scalar {
        let s = sigmoid(self.value(a));
        self.unary(a, s, || s * (1.0 - s))
    }

    fn tanh(&mut self, a: Self::Scalar) -> Self::Scalar {
        let t = libm::tanh(self.value(a));
        self.unary(a, t, || 1.0 - t * t)
    }

    /// `max(a, 0)` with the subgradient convention `relu'(0) = 0`.
    fn relu(&mut self, a: Self::Scalar) -> Self::Scalar {
        let v = self.value(a);
        if v > 0.0 {
            self.unary(a, v, || 1.0)
        } else {
            self.constant(0.0)
        }
    }

    fn sum(&mut self, xs: &[Self::Scalar]) -> Self::Scalar {
        let mut it = xs.iter().copied();
        let Some(first) = it.next() else {
            return self.constant(0.0);
        };
        it.fold(first, |acc, x| self.add(acc, x))
    }
}

/// Numerically stable `ln(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Evaluates with plain `f64` and records nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Engine for Plain {
    type Scalar = f64;

    #[inline]
    fn constant(&mut self, value: f64) -> f64 {
        value
    }

    #[inline]
    fn value(&self, s: f64) -> f64 {
        s
    }

    #[inline]
    fn unary(&mut self, _a: f64, value: f64, _partial: impl FnOnce() -> f64) -> f64 {
        value
    }

    #[inline]
    fn binary(
        &mut self,
        _a: f64,
        _b: f64,
        value: f64,
        _partials: impl FnOnce() -> (f64, f64),
    ) -> f64 {
        value
    }

    #[inline]
    fn affine(&mut self, w: &[f64], x: &[f64], bias: Option<f64>) -> f64 {
        debug_assert_eq!(w.len(), x.len());
        let mut acc = bias.unwrap_or(0.0);
        for (wi, xi) in w.iter().zip(x) {
            acc += wi * xi;
        }
        acc
    }
}
