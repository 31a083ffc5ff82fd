//! The scalar abstraction shared by every differentiable computation.
//!
//! Physics, losses and linear algebra are written once against [`Real`] and
//! run unchanged on plain `f64` (fast forward path), [`CScalar`] (forward
//! complex step), tape variables (reverse mode, optionally perturbed) and the
//! bicomplex oracle. Vector/matrix primitives are trait methods whose default
//! bodies are the plain elementwise procedure; the tape variable overrides
//! them with single fat nodes carrying closed-form adjoints.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

use crate::error::Result;
use crate::linalg::{elementwise, Csr, Factorization, M3};
use crate::scalar::{note_abs_kink, CScalar};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;

    /// Real part; the only thing control flow may look at.
    fn re(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn recip(self) -> Self {
        Self::one() / self
    }

    fn powi(self, n: i32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n.unsigned_abs() {
            acc = acc * self;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    fn powf(self, p: f64) -> Self {
        (self.ln() * p).exp()
    }

    fn square(self) -> Self {
        self * self
    }

    /// Branch-local absolute value (see [`CScalar::abs`]).
    fn abs(self) -> Self {
        let r = self.re();
        if r == 0.0 {
            note_abs_kink();
        }
        if r < 0.0 {
            -self
        } else {
            self
        }
    }

    fn max_re(self, other: Self) -> Self {
        if other.re() > self.re() {
            other
        } else {
            self
        }
    }

    fn min_re(self, other: Self) -> Self {
        if other.re() < self.re() {
            other
        } else {
            self
        }
    }

    /// `xᵀy`.
    fn dot(x: &[Self], y: &[Self]) -> Self {
        elementwise::dot(x, y)
    }

    /// `‖x‖²`.
    fn sqnorm(x: &[Self]) -> Self {
        elementwise::sqnorm(x)
    }

    /// `tr(XᵀX)` of a matrix given by its entries.
    fn trace_gram(x: &[Self]) -> Self {
        elementwise::sqnorm(x)
    }

    fn det3(m: &M3<Self>) -> Self {
        elementwise::det3(m)
    }

    /// Row-major `(r×k)·(k×c)` product.
    fn matmul(a: &[Self], b: &[Self], r: usize, k: usize, c: usize) -> Vec<Self> {
        elementwise::matmul(a, b, r, k, c)
    }

    /// Product with a constant sparse matrix.
    fn const_matvec(m: &Arc<Csr>, x: &[Self]) -> Vec<Self> {
        elementwise::const_matvec(m, x)
    }

    /// `A⁻¹x` for a constant, already factorized real `A`.
    fn solve_const(a: &Arc<Factorization>, x: &[Self]) -> Vec<Self>;

    /// `X⁻¹b` for a variable square matrix `X` (row-major, `n×n`).
    fn solve_var(x: &[Self], b: &[Self], n: usize) -> Result<Vec<Self>> {
        elementwise::gauss_solve(x, b, n)
    }

    /// First Piola stress of the stable Neo-Hookean model.
    fn neo_hookean_piola(f: &M3<Self>, mu: f64, lambda: f64) -> M3<Self> {
        elementwise::neo_hookean_piola(f, mu, lambda)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn solve_const(a: &Arc<Factorization>, x: &[Self]) -> Vec<Self> {
        a.solve(x)
    }
}

impl Real for CScalar {
    fn cst(v: f64) -> Self {
        CScalar::real(v)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        CScalar::sin(self)
    }
    fn cos(self) -> Self {
        CScalar::cos(self)
    }
    fn exp(self) -> Self {
        CScalar::exp(self)
    }
    fn ln(self) -> Self {
        CScalar::ln(self)
    }
    fn sqrt(self) -> Self {
        CScalar::sqrt(self)
    }
    fn sinh(self) -> Self {
        CScalar::sinh(self)
    }
    fn cosh(self) -> Self {
        CScalar::cosh(self)
    }
    fn tanh(self) -> Self {
        CScalar::tanh(self)
    }
    fn recip(self) -> Self {
        CScalar::recip(self)
    }
    fn solve_const(a: &Arc<Factorization>, x: &[Self]) -> Vec<Self> {
        let re: Vec<f64> = x.iter().map(|v| v.re).collect();
        let im: Vec<f64> = x.iter().map(|v| v.im).collect();
        let zr = a.solve(&re);
        let zi = a.solve(&im);
        zr.into_iter().zip(zi).map(|(r, i)| CScalar::new(r, i)).collect()
    }
}
