//! Vectors and matrices over [`Real`] scalars, real factorizations reused by
//! the reverse pass, and the differentiable 3×3 decompositions.

pub mod elementwise;
mod factor;
mod svd;

pub use factor::{FactorKind, Factorization};
pub use svd::{polar_rotation, svd3, svd3_sym, Svd3};

use crate::error::{Error, Result};
use crate::real::Real;

pub type V3<S> = [S; 3];
pub type M3<S> = [[S; 3]; 3];

/// Dense vector of scalars.
pub type CVec<S> = Vec<S>;

/// Dense row-major matrix of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Real> CMat<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| S::cst(v)).collect())
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &CMat<S>) -> Result<CMat<S>> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = S::matmul(&self.data, &rhs.data, self.rows, self.cols, rhs.cols);
        Ok(CMat { rows: self.rows, cols: rhs.cols, data })
    }

    pub fn trace_gram(&self) -> S {
        S::trace_gram(&self.data)
    }

    pub fn det3(&self) -> Result<S> {
        Ok(S::det3(&self.to_m3()?))
    }

    /// `self⁻¹ b`.
    pub fn solve(&self, b: &[S]) -> Result<CVec<S>> {
        if self.rows != self.cols || b.len() != self.rows {
            return Err(Error::Shape(format!(
                "cannot solve {}x{} system with rhs of length {}",
                self.rows,
                self.cols,
                b.len()
            )));
        }
        S::solve_var(&self.data, b, self.rows)
    }

    pub fn to_m3(&self) -> Result<M3<S>> {
        if self.rows != 3 || self.cols != 3 {
            return Err(Error::Shape(format!("expected 3x3, got {}x{}", self.rows, self.cols)));
        }
        let d = &self.data;
        Ok([[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]])
    }

    pub fn from_m3(m: &M3<S>) -> Self {
        CMat { rows: 3, cols: 3, data: m.iter().flatten().copied().collect() }
    }

    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re()).collect()
    }
}

pub fn sqnorm<S: Real>(x: &[S]) -> S {
    S::sqnorm(x)
}

pub fn dot<S: Real>(x: &[S], y: &[S]) -> Result<S> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("dot of lengths {} and {}", x.len(), y.len())));
    }
    Ok(S::dot(x, y))
}

/// `A⁻¹x` through a stored factorization.
pub fn solve_const_matrix<S: Real>(
    a: &std::sync::Arc<Factorization>,
    x: &[S],
) -> Result<CVec<S>> {
    if a.dim() != x.len() {
        return Err(Error::Shape(format!(
            "factorization of size {} applied to vector of length {}",
            a.dim(),
            x.len()
        )));
    }
    Ok(S::solve_const(a, x))
}

/// Compressed sparse row matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        self.col_idx[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.vals.len());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    pub fn symmetrize(&self) -> Csr {
        let t = self.transpose();
        let mut trip = Vec::with_capacity(2 * self.vals.len());
        for m in [self, &t] {
            for r in 0..m.nrows {
                for (c, v) in m.row(r) {
                    trip.push((r, c, 0.5 * v));
                }
            }
        }
        Csr::from_triplets(self.nrows, self.ncols, trip)
    }
}

// 3-vector and 3×3 helpers, generic over the scalar.

pub fn v3_cst<S: Real>(v: [f64; 3]) -> V3<S> {
    [S::cst(v[0]), S::cst(v[1]), S::cst(v[2])]
}

pub fn v3_re<S: Real>(v: &V3<S>) -> [f64; 3] {
    [v[0].re(), v[1].re(), v[2].re()]
}

pub fn v3_add<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn v3_sub<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn v3_scale<S: Real>(a: &V3<S>, s: S) -> V3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn v3_scale_f<S: Real>(a: &V3<S>, s: f64) -> V3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn v3_dot<S: Real>(a: &V3<S>, b: &V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn v3_dot_f<S: Real>(a: &V3<S>, b: &[f64; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn v3_cross<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn v3_norm<S: Real>(a: &V3<S>) -> S {
    v3_dot(a, a).sqrt()
}

pub fn m3_zero<S: Real>() -> M3<S> {
    [[S::zero(); 3]; 3]
}

pub fn m3_identity<S: Real>() -> M3<S> {
    let mut m = m3_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}

pub fn m3_cst<S: Real>(m: &[[f64; 3]; 3]) -> M3<S> {
    let mut out = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = S::cst(m[i][j]);
        }
    }
    out
}

pub fn m3_re<S: Real>(m: &M3<S>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j].re();
        }
    }
    out
}

pub fn m3_transpose<S: Real>(m: &M3<S>) -> M3<S> {
    let mut t = *m;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub fn m3_mul<S: Real>(a: &M3<S>, b: &M3<S>) -> M3<S> {
    let mut out = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// Product with a constant real matrix on the right.
pub fn m3_mul_cst<S: Real>(a: &M3<S>, b: &[[f64; 3]; 3]) -> M3<S> {
    let mut out = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn m3_add<S: Real>(a: &M3<S>, b: &M3<S>) -> M3<S> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn m3_sub<S: Real>(a: &M3<S>, b: &M3<S>) -> M3<S> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn m3_scale<S: Real>(a: &M3<S>, s: S) -> M3<S> {
    let mut out = *a;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

pub fn m3_mul_vec<S: Real>(a: &M3<S>, v: &V3<S>) -> V3<S> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn m3_col<S: Real>(a: &M3<S>, j: usize) -> V3<S> {
    [a[0][j], a[1][j], a[2][j]]
}

pub fn m3_from_cols<S: Real>(c0: &V3<S>, c1: &V3<S>, c2: &V3<S>) -> M3<S> {
    [[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]]
}

/// Cofactor matrix, `det(A) A⁻ᵀ` when invertible; columns are cross products
/// of the other two columns.
pub fn m3_cofactor<S: Real>(a: &M3<S>) -> M3<S> {
    let c0 = m3_col(a, 0);
    let c1 = m3_col(a, 1);
    let c2 = m3_col(a, 2);
    m3_from_cols(&v3_cross(&c1, &c2), &v3_cross(&c2, &c0), &v3_cross(&c0, &c1))
}

/// Directional derivative of the cofactor matrix at `a` along `g`.
pub fn m3_cofactor_dir<S: Real>(a: &M3<S>, g: &M3<S>) -> M3<S> {
    let (a0, a1, a2) = (m3_col(a, 0), m3_col(a, 1), m3_col(a, 2));
    let (g0, g1, g2) = (m3_col(g, 0), m3_col(g, 1), m3_col(g, 2));
    m3_from_cols(
        &v3_add(&v3_cross(&g1, &a2), &v3_cross(&a1, &g2)),
        &v3_add(&v3_cross(&g2, &a0), &v3_cross(&a2, &g0)),
        &v3_add(&v3_cross(&g0, &a1), &v3_cross(&a0, &g1)),
    )
}

pub fn m3_frob_dot<S: Real>(a: &M3<S>, b: &M3<S>) -> S {
    let mut s = S::zero();
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Inverse of a real 3×3 matrix; `None` when singular.
pub fn m3_inverse_f64(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = m3_cofactor::<f64>(m);
    let det = elementwise::det3(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    Some(inv)
}
