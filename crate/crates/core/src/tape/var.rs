use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

use super::{fat, flag_domain, with_tape, NodeKind, CONST_IDX};
use crate::error::Result;
use crate::linalg::{Csr, Factorization, M3};
use crate::real::Real;
use crate::scalar::{AnalyticFn, CScalar};

/// A scalar on the active tape, or a constant that never touches it.
#[derive(Clone, Copy)]
pub struct Var {
    idx: u32,
    val: CScalar,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index() {
            Some(i) => write!(f, "Var#{i}({})", self.val),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl Var {
    pub fn constant(val: CScalar) -> Self {
        Var { idx: CONST_IDX, val }
    }

    pub(crate) fn from_parts(idx: u32, val: CScalar) -> Self {
        Var { idx, val }
    }

    pub fn value(self) -> CScalar {
        self.val
    }

    pub fn index(self) -> Option<usize> {
        (self.idx != CONST_IDX).then_some(self.idx as usize)
    }

    pub(crate) fn raw(self) -> u32 {
        self.idx
    }

    pub fn is_constant(self) -> bool {
        self.idx == CONST_IDX
    }

    fn unary(self, val: CScalar, d: CScalar) -> Var {
        if self.is_constant() {
            return Var::constant(val);
        }
        with_tape(|t| t.push(NodeKind::Unary, [self.idx, CONST_IDX], [d, CScalar::ZERO], val))
    }

    fn binary(self, other: Var, val: CScalar, da: CScalar, db: CScalar) -> Var {
        match (self.is_constant(), other.is_constant()) {
            (true, true) => Var::constant(val),
            (false, true) => self.unary(val, da),
            (true, false) => other.unary(val, db),
            (false, false) => with_tape(|t| {
                t.push(NodeKind::Binary, [self.idx, other.idx], [da, db], val)
            }),
        }
    }

    fn analytic(self, f: AnalyticFn) -> Var {
        if !f.in_domain(self.val.re) {
            flag_domain(f.name(), self.val.re);
        }
        self.unary(self.val.eval(f), self.val.derivative(f))
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, rhs: Var) -> Var {
        self.binary(rhs, self.val + rhs.val, CScalar::ONE, CScalar::ONE)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, rhs: Var) -> Var {
        self.binary(rhs, self.val - rhs.val, CScalar::ONE, -CScalar::ONE)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, rhs: Var) -> Var {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, rhs: Var) -> Var {
        if rhs.val.re == 0.0 {
            flag_domain("div", rhs.val.re);
        }
        let val = self.val / rhs.val;
        let inv = rhs.val.recip();
        self.binary(rhs, val, inv, -val * inv)
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(-self.val, -CScalar::ONE)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    fn add(self, rhs: f64) -> Var {
        self.unary(self.val + rhs, CScalar::ONE)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    fn sub(self, rhs: f64) -> Var {
        self.unary(self.val - rhs, CScalar::ONE)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    fn mul(self, rhs: f64) -> Var {
        self.unary(self.val * rhs, CScalar::real(rhs))
    }
}

impl Div<f64> for Var {
    type Output = Var;
    fn div(self, rhs: f64) -> Var {
        if rhs == 0.0 {
            flag_domain("div", rhs);
        }
        self.unary(self.val / rhs, CScalar::real(1.0 / rhs))
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, rhs: Var) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, rhs: Var) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, rhs: Var) {
        *self = *self * rhs;
    }
}

impl Real for Var {
    fn cst(v: f64) -> Self {
        Var::constant(CScalar::real(v))
    }

    fn re(self) -> f64 {
        self.val.re
    }

    fn sin(self) -> Self {
        self.analytic(AnalyticFn::Sin)
    }
    fn cos(self) -> Self {
        self.analytic(AnalyticFn::Cos)
    }
    fn exp(self) -> Self {
        self.analytic(AnalyticFn::Exp)
    }
    fn ln(self) -> Self {
        self.analytic(AnalyticFn::Ln)
    }
    fn sqrt(self) -> Self {
        self.analytic(AnalyticFn::Sqrt)
    }
    fn sinh(self) -> Self {
        self.analytic(AnalyticFn::Sinh)
    }
    fn cosh(self) -> Self {
        self.analytic(AnalyticFn::Cosh)
    }
    fn tanh(self) -> Self {
        self.analytic(AnalyticFn::Tanh)
    }

    fn recip(self) -> Self {
        if self.val.re == 0.0 {
            flag_domain("div", 0.0);
        }
        let r = self.val.recip();
        self.unary(r, -r * r)
    }

    fn powf(self, p: f64) -> Self {
        if self.val.re <= 0.0 {
            flag_domain("powf", self.val.re);
        }
        let v = self.val.powf(p);
        self.unary(v, self.val.powf(p - 1.0) * p)
    }

    fn dot(x: &[Self], y: &[Self]) -> Self {
        fat::dot(x, y)
    }

    fn sqnorm(x: &[Self]) -> Self {
        fat::sqnorm(x)
    }

    fn trace_gram(x: &[Self]) -> Self {
        fat::trace_gram(x)
    }

    fn det3(m: &M3<Self>) -> Self {
        fat::det3(m)
    }

    fn matmul(a: &[Self], b: &[Self], r: usize, k: usize, c: usize) -> Vec<Self> {
        fat::matmul(a, b, r, k, c)
    }

    fn const_matvec(m: &Arc<Csr>, x: &[Self]) -> Vec<Self> {
        fat::const_matvec(m, x)
    }

    fn solve_const(a: &Arc<Factorization>, x: &[Self]) -> Vec<Self> {
        fat::solve_const(a, x)
    }

    fn solve_var(x: &[Self], b: &[Self], n: usize) -> Result<Vec<Self>> {
        fat::solve_var(x, b, n)
    }

    fn neo_hookean_piola(f: &M3<Self>, mu: f64, lambda: f64) -> M3<Self> {
        fat::neo_hookean_piola(f, mu, lambda)
    }
}
