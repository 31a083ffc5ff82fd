//! Plain scalar-by-scalar procedures. These are the defaults behind the
//! vector/matrix methods of [`Real`]; on the tape they expand into one node
//! per scalar operation and serve as the reference the fat-node adjoints are
//! checked against.

use crate::error::{Error, Result};
use crate::linalg::{m3_add, m3_cofactor, m3_scale, Csr, M3};
use crate::real::Real;

pub fn dot<S: Real>(x: &[S], y: &[S]) -> S {
    let mut acc = S::zero();
    for (a, b) in x.iter().zip(y) {
        acc += *a * *b;
    }
    acc
}

pub fn sqnorm<S: Real>(x: &[S]) -> S {
    let mut acc = S::zero();
    for a in x {
        acc += *a * *a;
    }
    acc
}

pub fn det3<S: Real>(m: &M3<S>) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn matmul<S: Real>(a: &[S], b: &[S], r: usize, k: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            let mut acc = S::zero();
            for l in 0..k {
                acc += a[i * k + l] * b[l * c + j];
            }
            out[i * c + j] = acc;
        }
    }
    out
}

pub fn const_matvec<S: Real>(m: &Csr, x: &[S]) -> Vec<S> {
    (0..m.nrows)
        .map(|r| {
            let mut acc = S::zero();
            for (c, v) in m.row(r) {
                acc += x[c] * v;
            }
            acc
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on real-part magnitude.
pub fn gauss_solve<S: Real>(x: &[S], b: &[S], n: usize) -> Result<Vec<S>> {
    let mut a = x.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].re().abs().total_cmp(&a[j * n + col].re().abs()))
            .unwrap();
        if a[piv * n + col].re() == 0.0 {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            rhs.swap(col, piv);
        }
        let p = a[col * n + col];
        for i in col + 1..n {
            let f = a[i * n + col] / p;
            for j in col..n {
                let v = a[col * n + j];
                a[i * n + j] -= f * v;
            }
            let r = rhs[col];
            rhs[i] -= f * r;
        }
    }
    let mut z = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= a[i * n + j] * z[j];
        }
        z[i] = acc / a[i * n + i];
    }
    Ok(z)
}

/// `P = μF − μ cof(F) + λ(J − 1) cof(F)`.
pub fn neo_hookean_piola<S: Real>(f: &M3<S>, mu: f64, lambda: f64) -> M3<S> {
    let cof = m3_cofactor(f);
    let j = det3(f);
    let coef = (j - 1.0) * lambda - mu;
    m3_add(&m3_scale(f, S::cst(mu)), &m3_scale(&cof, coef))
}
