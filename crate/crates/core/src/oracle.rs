//! Reference derivatives for verification: a bicomplex second-derivative
//! scalar and finite-difference helpers. Nothing here is used by the solver.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::Factorization;
use crate::opt::{self, Objective};
use crate::real::Real;

/// `a + b·i + c·j + d·ij` with `i² = j² = −1`, `ij = ji`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bicomplex {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Bicomplex {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Bicomplex { a, b, c, d }
    }

    /// `f(a + ε)` from `f(a)`, `f′(a)`, `f″(a)` where `ε` is the non-real
    /// part. Third-order terms are below the resolution of the `ij` part
    /// as long as `b, c` are tiny perturbations.
    fn lift(self, f0: f64, f1: f64, f2: f64) -> Self {
        let (b, c, d) = (self.b, self.c, self.d);
        let e2 = [-b * b - c * c + d * d, -2.0 * c * d, -2.0 * b * d, 2.0 * b * c];
        Bicomplex {
            a: f0 + 0.5 * f2 * e2[0],
            b: f1 * b + 0.5 * f2 * e2[1],
            c: f1 * c + 0.5 * f2 * e2[2],
            d: f1 * d + 0.5 * f2 * e2[3],
        }
    }

    fn scale(self, s: f64) -> Self {
        Bicomplex::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

impl Add for Bicomplex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Bicomplex::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Bicomplex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Bicomplex::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Mul for Bicomplex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Bicomplex::new(
            self.a * o.a - self.b * o.b - self.c * o.c + self.d * o.d,
            self.a * o.b + self.b * o.a - self.c * o.d - self.d * o.c,
            self.a * o.c + self.c * o.a - self.b * o.d - self.d * o.b,
            self.a * o.d + self.d * o.a + self.b * o.c + self.c * o.b,
        )
    }
}

impl Div for Bicomplex {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // o = z1 + z2·j with z1 = a + bi, z2 = c + di; o·(z1 − z2·j) = z1² + z2²
        let conj = Bicomplex::new(o.a, o.b, -o.c, -o.d);
        let n = o * conj;
        debug_assert!(n.c == 0.0 && n.d == 0.0);
        let (nr, ni) = (n.a, n.b);
        let den = nr * nr + ni * ni;
        // 1/(nr + ni·i)
        let inv = Bicomplex::new(nr / den, -ni / den, 0.0, 0.0);
        self * conj * inv
    }
}

impl Neg for Bicomplex {
    type Output = Self;
    fn neg(self) -> Self {
        Bicomplex::new(-self.a, -self.b, -self.c, -self.d)
    }
}

impl Add<f64> for Bicomplex {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Bicomplex { a: self.a + o, ..self }
    }
}

impl Sub<f64> for Bicomplex {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Bicomplex { a: self.a - o, ..self }
    }
}

impl Mul<f64> for Bicomplex {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.scale(o)
    }
}

impl Div<f64> for Bicomplex {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Bicomplex::new(self.a / o, self.b / o, self.c / o, self.d / o)
    }
}

impl AddAssign for Bicomplex {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Bicomplex {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for Bicomplex {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Real for Bicomplex {
    fn cst(v: f64) -> Self {
        Bicomplex::new(v, 0.0, 0.0, 0.0)
    }
    fn re(self) -> f64 {
        self.a
    }
    fn sin(self) -> Self {
        let (s, c) = self.a.sin_cos();
        self.lift(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.a.sin_cos();
        self.lift(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.a.exp();
        self.lift(e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.a;
        if !(x > 0.0) {
            return Bicomplex::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        self.lift(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn sqrt(self) -> Self {
        let x = self.a;
        if !(x > 0.0) {
            return Bicomplex::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        let r = x.sqrt();
        self.lift(r, 0.5 / r, -0.25 / (r * x))
    }
    fn sinh(self) -> Self {
        let (s, c) = (self.a.sinh(), self.a.cosh());
        self.lift(s, c, s)
    }
    fn cosh(self) -> Self {
        let (s, c) = (self.a.sinh(), self.a.cosh());
        self.lift(c, s, c)
    }
    fn tanh(self) -> Self {
        let t = self.a.tanh();
        let s2 = 1.0 - t * t;
        self.lift(t, s2, -2.0 * t * s2)
    }
    fn powf(self, p: f64) -> Self {
        let x = self.a;
        if !(x > 0.0) {
            return Bicomplex::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        self.lift(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }
    fn solve_const(m: &Arc<Factorization>, x: &[Self]) -> Vec<Self> {
        let part = |f: fn(&Bicomplex) -> f64| m.solve(&x.iter().map(f).collect::<Vec<_>>());
        let (a, b, c, d) = (part(|v| v.a), part(|v| v.b), part(|v| v.c), part(|v| v.d));
        (0..x.len()).map(|k| Bicomplex::new(a[k], b[k], c[k], d[k])).collect()
    }
}

/// `∂²f/∂x_k∂x_l` from one bicomplex evaluation with `x_k += h·i` and
/// `x_l += h·j`.
pub fn bicomplex_entry<F>(f: &F, x: &[f64], k: usize, l: usize, h: f64) -> Result<f64>
where
    F: Fn(&[Bicomplex]) -> Result<Bicomplex> + ?Sized,
{
    let mut z: Vec<Bicomplex> = x.iter().map(|&v| Bicomplex::cst(v)).collect();
    z[k].b += h;
    z[l].c += h;
    let y = f(&z)?;
    Ok(y.d / (h * h))
}

/// Full symmetric Hessian of an objective from `M(M+1)/2` bicomplex passes.
pub fn bicomplex_hessian<O: Objective>(obj: &O, a: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let m = a.len();
    let f = |z: &[Bicomplex]| obj.eval(z);
    let mut out = DMatrix::zeros(m, m);
    for k in 0..m {
        for l in k..m {
            let v = bicomplex_entry(&f, a, k, l, h)?;
            if !v.is_finite() {
                return Err(Error::NoConvergence(format!("bicomplex Hessian entry ({k}, {l}) is not finite")));
            }
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// Central differences of the objective value.
pub fn fd_gradient<O: Objective>(obj: &O, a: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(a.len());
    let mut x = a.to_vec();
    for k in 0..a.len() {
        x[k] = a[k] + step;
        let up = opt::value(obj, &x)?;
        x[k] = a[k] - step;
        let down = opt::value(obj, &x)?;
        x[k] = a[k];
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

/// Central differences of the tape gradient, column by column.
pub fn fd_hessian<O: Objective>(obj: &O, a: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let m = a.len();
    let mut out = DMatrix::zeros(m, m);
    let mut x = a.to_vec();
    for k in 0..m {
        x[k] = a[k] + step;
        let (_, up) = opt::gradient(obj, &x)?;
        x[k] = a[k] - step;
        let (_, down) = opt::gradient(obj, &x)?;
        x[k] = a[k];
        for i in 0..m {
            out[(i, k)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    Ok(out)
}

/// `max |a − b| / max(max |b|, floor)` over all entries.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let scale = b.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Entry with the largest absolute discrepancy, as `(index, |a − b|)`.
pub fn worst_entry(a: &[f64], b: &[f64]) -> (usize, f64) {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc })
}
