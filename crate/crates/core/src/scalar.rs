//! Complex numbers carrying a value in the real part and a complex-step
//! perturbation in the imaginary part.
//!
//! Every operator here is the analytic promotion of its real counterpart, so
//! `Im(f(x + ih)) / h` is the derivative of `f` at `x` with no subtractive
//! cancellation. Relational operators and branch decisions look at the real
//! part only, which keeps the executed branch identical to the unperturbed
//! program.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::error::{Error, Result};

static ABS_KINKS: AtomicU64 = AtomicU64::new(0);

/// Number of times `abs` was evaluated exactly at its kink (real part zero)
/// since process start.
pub fn abs_kink_count() -> u64 {
    ABS_KINKS.load(AtomicOrdering::Relaxed)
}

pub(crate) fn note_abs_kink() {
    ABS_KINKS.fetch_add(1, AtomicOrdering::Relaxed);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CScalar {
    pub re: f64,
    pub im: f64,
}

/// Imaginary perturbation magnitude used for complex-step differentiation.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct PerturbStep(f64);

impl PerturbStep {
    pub const DEFAULT: PerturbStep = PerturbStep(1e-20);

    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(PerturbStep(h))
        } else {
            Err(Error::Config(format!("perturbation step must be positive and finite, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for PerturbStep {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Relational operators, all decided on real parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

/// Elementary functions with analytic complex promotions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyticFn {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Cosh,
    Sinh,
}

impl AnalyticFn {
    pub fn name(self) -> &'static str {
        match self {
            AnalyticFn::Sin => "sin",
            AnalyticFn::Cos => "cos",
            AnalyticFn::Exp => "exp",
            AnalyticFn::Ln => "ln",
            AnalyticFn::Sqrt => "sqrt",
            AnalyticFn::Tanh => "tanh",
            AnalyticFn::Cosh => "cosh",
            AnalyticFn::Sinh => "sinh",
        }
    }

    /// Real-domain check applied to the real part of the argument.
    pub fn in_domain(self, re: f64) -> bool {
        match self {
            AnalyticFn::Ln => re > 0.0,
            AnalyticFn::Sqrt => re >= 0.0,
            _ => re.is_finite(),
        }
    }
}

impl CScalar {
    pub const ZERO: CScalar = CScalar { re: 0.0, im: 0.0 };
    pub const ONE: CScalar = CScalar { re: 1.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        CScalar { re, im }
    }

    pub const fn real(re: f64) -> Self {
        CScalar { re, im: 0.0 }
    }

    /// `x + i h`.
    pub fn perturbed(x: f64, h: PerturbStep) -> Self {
        CScalar { re: x, im: h.get() }
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn compare(self, other: CScalar, rel: Rel) -> bool {
        match rel {
            Rel::Lt => self.re < other.re,
            Rel::Le => self.re <= other.re,
            Rel::Gt => self.re > other.re,
            Rel::Ge => self.re >= other.re,
            Rel::Eq => self.re == other.re,
        }
    }

    pub fn max(self, other: CScalar) -> CScalar {
        if other.re > self.re {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: CScalar) -> CScalar {
        if other.re < self.re {
            other
        } else {
            self
        }
    }

    pub fn checked_div(self, rhs: CScalar) -> Result<CScalar> {
        if rhs.re == 0.0 {
            return Err(Error::Domain { op: "div", value: rhs.re });
        }
        Ok(self / rhs)
    }

    pub fn recip(self) -> CScalar {
        CScalar::ONE / self
    }

    pub fn sin(self) -> CScalar {
        CScalar::new(self.re.sin() * self.im.cosh(), self.re.cos() * self.im.sinh())
    }

    pub fn cos(self) -> CScalar {
        CScalar::new(self.re.cos() * self.im.cosh(), -self.re.sin() * self.im.sinh())
    }

    pub fn exp(self) -> CScalar {
        let m = self.re.exp();
        CScalar::new(m * self.im.cos(), m * self.im.sin())
    }

    /// Principal logarithm; NaN for a non-positive real part.
    pub fn ln(self) -> CScalar {
        if self.re <= 0.0 {
            return CScalar::new(f64::NAN, f64::NAN);
        }
        CScalar::new(self.re.hypot(self.im).ln(), self.im.atan2(self.re))
    }

    /// Principal square root; NaN for a negative real part.
    pub fn sqrt(self) -> CScalar {
        if self.re < 0.0 {
            return CScalar::new(f64::NAN, f64::NAN);
        }
        if self.im == 0.0 {
            return CScalar::real(self.re.sqrt());
        }
        let r = self.re.hypot(self.im);
        let s = ((r + self.re) * 0.5).sqrt();
        CScalar::new(s, self.im / (2.0 * s))
    }

    pub fn sinh(self) -> CScalar {
        CScalar::new(self.re.sinh() * self.im.cos(), self.re.cosh() * self.im.sin())
    }

    pub fn cosh(self) -> CScalar {
        CScalar::new(self.re.cosh() * self.im.cos(), self.re.sinh() * self.im.sin())
    }

    /// `(sinh 2a + i sin 2b) / (cosh 2a + cos 2b)`; the quotient form of
    /// sinh/cosh cancels in the imaginary part for large |a|.
    pub fn tanh(self) -> CScalar {
        let (a, b) = (self.re, self.im);
        if a.abs() > 20.0 {
            let im = 4.0 * b.sin() * b.cos() * (-2.0 * a.abs()).exp();
            return CScalar::new(a.signum(), im);
        }
        let d = (2.0 * a).cosh() + (2.0 * b).cos();
        // the O(b²) correction to the real part is below rounding for small b
        let re = if b.abs() < 1e-8 { a.tanh() } else { (2.0 * a).sinh() / d };
        CScalar::new(re, (2.0 * b).sin() / d)
    }

    /// Integer power by repeated multiplication.
    pub fn powi(self, n: i32) -> CScalar {
        let mut acc = CScalar::ONE;
        for _ in 0..n.unsigned_abs() {
            acc = acc * self;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    /// Principal real power in polar form; requires a positive real part.
    /// The real part reduces to `re.powf(p)` when the perturbation is tiny.
    pub fn powf(self, p: f64) -> CScalar {
        if self.re <= 0.0 {
            return CScalar::new(f64::NAN, f64::NAN);
        }
        if self.im == 0.0 {
            return CScalar::real(self.re.powf(p));
        }
        let m = self.re.hypot(self.im).powf(p);
        let t = p * self.im.atan2(self.re);
        CScalar::new(m * t.cos(), m * t.sin())
    }

    /// Branch-local absolute value: negation for a negative real part, identity
    /// otherwise. Unlike the complex modulus this is analytic on each branch.
    pub fn abs(self) -> CScalar {
        if self.re == 0.0 {
            note_abs_kink();
        }
        if self.re < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn eval(self, f: AnalyticFn) -> CScalar {
        match f {
            AnalyticFn::Sin => self.sin(),
            AnalyticFn::Cos => self.cos(),
            AnalyticFn::Exp => self.exp(),
            AnalyticFn::Ln => self.ln(),
            AnalyticFn::Sqrt => self.sqrt(),
            AnalyticFn::Tanh => self.tanh(),
            AnalyticFn::Cosh => self.cosh(),
            AnalyticFn::Sinh => self.sinh(),
        }
    }

    /// Checked evaluation of an elementary function.
    pub fn apply(self, f: AnalyticFn) -> Result<CScalar> {
        if !f.in_domain(self.re) {
            return Err(Error::Domain { op: f.name(), value: self.re });
        }
        Ok(self.eval(f))
    }

    /// Complex derivative `f'(z)` of an elementary function, itself analytic.
    pub fn derivative(self, f: AnalyticFn) -> CScalar {
        match f {
            AnalyticFn::Sin => self.cos(),
            AnalyticFn::Cos => -self.sin(),
            AnalyticFn::Exp => self.exp(),
            AnalyticFn::Ln => self.recip(),
            AnalyticFn::Sqrt => (self.sqrt() * 2.0).recip(),
            AnalyticFn::Tanh => {
                let t = self.tanh();
                CScalar::ONE - t * t
            }
            AnalyticFn::Cosh => self.sinh(),
            AnalyticFn::Sinh => self.cosh(),
        }
    }
}

/// `Im(f(x0 + ih)) / h`.
pub fn csfd_derivative<F>(f: F, x0: f64, h: PerturbStep) -> Result<f64>
where
    F: Fn(CScalar) -> Result<CScalar>,
{
    let y = f(CScalar::perturbed(x0, h))?;
    Ok(y.im / h.get())
}

impl PartialEq for CScalar {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl PartialOrd for CScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl fmt::Display for CScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_sign_negative() {
            write!(f, "{}-{}i", self.re, -self.im)
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

impl From<f64> for CScalar {
    fn from(re: f64) -> Self {
        CScalar::real(re)
    }
}

impl Neg for CScalar {
    type Output = CScalar;
    fn neg(self) -> CScalar {
        CScalar::new(-self.re, -self.im)
    }
}

impl Add for CScalar {
    type Output = CScalar;
    fn add(self, rhs: CScalar) -> CScalar {
        CScalar::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for CScalar {
    type Output = CScalar;
    fn sub(self, rhs: CScalar) -> CScalar {
        CScalar::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for CScalar {
    type Output = CScalar;
    fn mul(self, rhs: CScalar) -> CScalar {
        CScalar::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

impl Div for CScalar {
    type Output = CScalar;
    fn div(self, rhs: CScalar) -> CScalar {
        if rhs.im == 0.0 {
            return CScalar::new(self.re / rhs.re, self.im / rhs.re);
        }
        // Smith's algorithm
        if rhs.re.abs() >= rhs.im.abs() {
            let r = rhs.im / rhs.re;
            let d = rhs.re + rhs.im * r;
            CScalar::new((self.re + self.im * r) / d, (self.im - self.re * r) / d)
        } else {
            let r = rhs.re / rhs.im;
            let d = rhs.re * r + rhs.im;
            CScalar::new((self.re * r + self.im) / d, (self.im * r - self.re) / d)
        }
    }
}

impl Add<f64> for CScalar {
    type Output = CScalar;
    fn add(self, rhs: f64) -> CScalar {
        CScalar::new(self.re + rhs, self.im)
    }
}

impl Sub<f64> for CScalar {
    type Output = CScalar;
    fn sub(self, rhs: f64) -> CScalar {
        CScalar::new(self.re - rhs, self.im)
    }
}

impl Mul<f64> for CScalar {
    type Output = CScalar;
    fn mul(self, rhs: f64) -> CScalar {
        CScalar::new(self.re * rhs, self.im * rhs)
    }
}

impl Div<f64> for CScalar {
    type Output = CScalar;
    fn div(self, rhs: f64) -> CScalar {
        CScalar::new(self.re / rhs, self.im / rhs)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt $rhs:ty;)*) => {$(
        impl $tr<$rhs> for CScalar {
            fn $m(&mut self, rhs: $rhs) {
                *self = *self $op rhs;
            }
        }
    )*};
}

assign_ops! {
    AddAssign add_assign + CScalar;
    SubAssign sub_assign - CScalar;
    MulAssign mul_assign * CScalar;
    DivAssign div_assign / CScalar;
    AddAssign add_assign + f64;
    SubAssign sub_assign - f64;
    MulAssign mul_assign * f64;
    DivAssign div_assign / f64;
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: PerturbStep = PerturbStep::DEFAULT;

    #[test]
    fn perturbed_square_keeps_first_order_flow() {
        let x = CScalar::new(1.0, 1e-20);
        let y = x * x;
        assert_eq!(y.re, 1.0);
        assert_eq!(y.im, 2e-20);
    }

    #[test]
    fn unperturbed_add_and_linear_div() {
        let s = CScalar::real(3.0) + CScalar::real(4.0);
        assert_eq!((s.re, s.im), (7.0, 0.0));
        let q = CScalar::new(6.0, 2e-20) / CScalar::real(2.0);
        assert_eq!((q.re, q.im), (3.0, 1e-20));
    }

    #[test]
    fn checked_div_rejects_zero_real_part() {
        assert!(CScalar::ONE.checked_div(CScalar::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn comparisons_use_real_parts() {
        let a = CScalar::new(2.0, 5e-20);
        let b = CScalar::new(2.1, -1e-20);
        assert!(!a.compare(b, Rel::Gt));
        assert!(CScalar::new(1.0, 1e-20).compare(CScalar::new(1.0, -1e-20), Rel::Eq));
        let m = CScalar::new(-1.0, 1e-20).max(CScalar::ZERO);
        assert_eq!((m.re, m.im), (0.0, 0.0));
    }

    #[test]
    fn sin_cos_exp_at_zero() {
        let z = CScalar::perturbed(0.0, H);
        let s = z.sin();
        assert_eq!(s.re, 0.0);
        assert_eq!(s.im / H.get(), 1.0);
        let c = z.cos();
        assert_eq!(c.re, 1.0);
        assert_eq!(c.im, 0.0);
        assert_eq!(z.exp().im / H.get(), 1.0);
    }

    #[test]
    fn analytic_abs_branches() {
        let a = CScalar::new(-2.0, 1e-20).abs();
        assert_eq!((a.re, a.im), (2.0, -1e-20));
        let b = CScalar::new(3.0, 1e-20).abs();
        assert_eq!((b.re, b.im), (3.0, 1e-20));
        let c = CScalar::real(-5.0).abs();
        assert_eq!((c.re, c.im), (5.0, 0.0));
    }

    #[test]
    fn abs_kink_is_counted_and_takes_positive_branch() {
        let before = abs_kink_count();
        let a = CScalar::new(0.0, 1e-20).abs();
        assert_eq!(a.im, 1e-20);
        assert!(abs_kink_count() > before);
    }

    #[test]
    fn domain_errors() {
        assert!(CScalar::real(-1.0).apply(AnalyticFn::Ln).is_err());
        assert!(CScalar::real(0.0).apply(AnalyticFn::Ln).is_err());
        assert!(CScalar::real(-1.0).apply(AnalyticFn::Sqrt).is_err());
        assert!(CScalar::real(2.0).apply(AnalyticFn::Sqrt).is_ok());
    }

    #[test]
    fn csfd_derivative_examples() {
        let d = csfd_derivative(|x| Ok(x * x), 3.0, H).unwrap();
        assert_eq!(d, 6.0);
        let d = csfd_derivative(|x| Ok(x.abs()), -1.0, H).unwrap();
        assert_eq!(d, -1.0);
        let d = csfd_derivative(|x| Ok(x.sin()), 0.0, H).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = CScalar::new(1.5, 1e-20);
        let p = x.powi(3);
        assert!((p.re - 3.375).abs() < 1e-15);
        assert!((p.im / 1e-20 - 3.0 * 2.25).abs() < 1e-14);
        let n = x.powi(-2);
        assert!((n.im / 1e-20 + 2.0 / 3.375).abs() < 1e-14);
    }

    #[test]
    fn perturb_step_must_be_positive() {
        assert!(PerturbStep::new(0.0).is_err());
        assert!(PerturbStep::new(-1e-20).is_err());
        assert!(PerturbStep::new(f64::NAN).is_err());
        assert_eq!(PerturbStep::new(1e-30).unwrap().get(), 1e-30);
    }
}
