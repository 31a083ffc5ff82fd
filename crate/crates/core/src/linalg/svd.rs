//! Iterative 3×3 decompositions written purely in terms of scalar operators,
//! so the complex step flows through every rotation.

use crate::error::{Error, Result};
use crate::linalg::{
    m3_cofactor, m3_col, m3_from_cols, m3_identity, m3_mul, m3_transpose, v3_cross, v3_scale, M3,
};
use crate::real::Real;

const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 50;

/// `A = U diag(σ) Vᵀ` with σ non-negative and descending.
#[derive(Clone, Debug)]
pub struct Svd3<S> {
    pub u: M3<S>,
    pub sigma: [S; 3],
    pub v: M3<S>,
}

/// One-sided (Hestenes) Jacobi SVD of a general 3×3 matrix.
///
/// Rotations are taken in the division-free form
/// `t = 2 sgn(δ) γ / (|δ| + √(δ² + 4γ²))`, which stays analytic when the real
/// part of the off-diagonal coupling is exactly zero. Sweeps continue until
/// the real couplings fall below tolerance, plus one more so the imaginary
/// flow settles as well.
pub fn svd3<S: Real>(a: &M3<S>) -> Result<Svd3<S>> {
    let mut w = *a;
    let mut v = m3_identity::<S>();
    let mut converged_sweeps = 0;
    let mut sweeps = 0;
    while converged_sweeps < 2 {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(format!("3x3 Jacobi SVD after {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        let mut clean = true;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let mut alpha = S::zero();
            let mut beta = S::zero();
            let mut gamma = S::zero();
            for row in &w {
                alpha += row[p] * row[p];
                beta += row[q] * row[q];
                gamma += row[p] * row[q];
            }
            let scale = (alpha.re() * beta.re()).sqrt();
            if gamma.re().abs() > JACOBI_TOL * scale {
                clean = false;
            }
            let delta = beta - alpha;
            let denom = delta.abs() + (delta * delta + gamma * gamma * 4.0).sqrt();
            if denom.re() == 0.0 {
                continue;
            }
            let sgn = if delta.re() >= 0.0 { 2.0 } else { -2.0 };
            let t = gamma * sgn / denom;
            let c = (t * t + 1.0).sqrt().recip();
            let s = c * t;
            for row in w.iter_mut().chain(v.iter_mut()) {
                let (xp, xq) = (row[p], row[q]);
                row[p] = c * xp - s * xq;
                row[q] = s * xp + c * xq;
            }
        }
        if clean {
            converged_sweeps += 1;
        } else {
            converged_sweeps = 0;
        }
    }

    let mut cols = [m3_col(&w, 0), m3_col(&w, 1), m3_col(&w, 2)];
    let mut vcols = [m3_col(&v, 0), m3_col(&v, 1), m3_col(&v, 2)];
    let mut sig: [S; 3] = [S::zero(); 3];
    for i in 0..3 {
        sig[i] = (cols[i][0] * cols[i][0] + cols[i][1] * cols[i][1] + cols[i][2] * cols[i][2]).sqrt();
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sig[j].re().total_cmp(&sig[i].re()));
    let sorted_sig = [sig[order[0]], sig[order[1]], sig[order[2]]];
    let sorted_cols = [cols[order[0]], cols[order[1]], cols[order[2]]];
    let sorted_v = [vcols[order[0]], vcols[order[1]], vcols[order[2]]];
    cols = sorted_cols;
    vcols = sorted_v;

    let tiny = 1e-300_f64.max(sorted_sig[0].re() * 1e-15);
    let mut ucols = cols;
    for i in 0..3 {
        if sorted_sig[i].re() > tiny {
            ucols[i] = v3_scale(&cols[i], sorted_sig[i].recip());
        }
    }
    // complete U for (numerically) zero singular values
    if sorted_sig[1].re() <= tiny {
        ucols[1] = any_orthogonal(&ucols[0]);
    }
    if sorted_sig[2].re() <= tiny {
        ucols[2] = v3_cross(&ucols[0], &ucols[1]);
    }
    Ok(Svd3 {
        u: m3_from_cols(&ucols[0], &ucols[1], &ucols[2]),
        sigma: sorted_sig,
        v: m3_from_cols(&vcols[0], &vcols[1], &vcols[2]),
    })
}

fn any_orthogonal<S: Real>(u: &[S; 3]) -> [S; 3] {
    let axis = if u[0].re().abs() < 0.9 { [S::one(), S::zero(), S::zero()] } else { [S::zero(), S::one(), S::zero()] };
    let c = v3_cross(u, &axis);
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    v3_scale(&c, n.recip())
}

/// SVD of a symmetric matrix; the input is symmetrized first.
pub fn svd3_sym<S: Real>(a: &M3<S>) -> Result<Svd3<S>> {
    let mut s = *a;
    for i in 0..3 {
        for j in i + 1..3 {
            let m = (a[i][j] + a[j][i]) * 0.5;
            s[i][j] = m;
            s[j][i] = m;
        }
    }
    svd3(&s)
}

/// Rotation factor `R` of the polar decomposition `F = R S`.
///
/// For `det F > 0` this runs the scaled Newton iteration
/// `R ← ½(γR + γ⁻¹R⁻ᵀ)`, `γ = det(R)^{-1/3}`, which is rational in the entries
/// and therefore differentiable even at repeated singular values (e.g. the
/// rest state). Inverted elements fall back to the SVD with the smallest
/// singular direction reflected.
pub fn polar_rotation<S: Real>(f: &M3<S>) -> Result<M3<S>> {
    let det = S::det3(f);
    if det.re() <= 0.0 {
        let svd = svd3(f)?;
        let mut u = svd.u;
        let r = m3_mul(&u, &m3_transpose(&svd.v));
        if S::det3(&r).re() < 0.0 {
            for row in u.iter_mut() {
                row[2] = -row[2];
            }
        }
        return Ok(m3_mul(&u, &m3_transpose(&svd.v)));
    }
    let mut r = *f;
    let mut extra = 0;
    for _ in 0..MAX_SWEEPS {
        let d = S::det3(&r);
        let g = d.powf(-1.0 / 3.0);
        let ginv = g.recip();
        let cof = m3_cofactor(&r);
        let dinv = d.recip();
        let mut next = r;
        let mut change = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = (g * r[i][j] + ginv * cof[i][j] * dinv) * 0.5;
                change += (next[i][j].re() - r[i][j].re()).powi(2);
            }
        }
        r = next;
        if change.sqrt() <= 1e-14 {
            extra += 1;
            if extra == 2 {
                return Ok(r);
            }
        }
    }
    Err(Error::NoConvergence("polar decomposition Newton iteration".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::m3_re;

    fn rot(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    }

    fn reconstruct(s: &Svd3<f64>) -> [[f64; 3]; 3] {
        let mut us = s.u;
        for row in us.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= s.sigma[j];
            }
        }
        m3_mul(&us, &m3_transpose(&s.v))
    }

    #[test]
    fn diagonal_matrix_singular_values() {
        let a = [[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let s = svd3_sym(&a).unwrap();
        assert_eq!(s.sigma, [3.0, 2.0, 1.0]);
        let s = svd3_sym(&m3_identity::<f64>()).unwrap();
        assert_eq!(s.sigma, [1.0, 1.0, 1.0]);
        let uvt = m3_mul(&s.u, &m3_transpose(&s.v));
        assert_eq!(uvt, m3_identity::<f64>());
    }

    #[test]
    fn general_matrix_reconstructs_and_is_orthonormal() {
        let a = [[1.0, 2.0, -0.5], [0.3, -1.2, 2.2], [4.0, 0.1, 0.7]];
        let s = svd3(&a).unwrap();
        let r = reconstruct(&s);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - a[i][j]).abs() < 1e-12);
            }
        }
        for m in [s.u, s.v] {
            let p = m3_mul(&m3_transpose(&m), &m);
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i][j] - e).abs() < 1e-12);
                }
            }
        }
        assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2] && s.sigma[2] >= 0.0);
    }

    #[test]
    fn polar_of_rotation_and_scaling() {
        let q = rot([1.0, 2.0, 0.5], 0.7);
        let r = polar_rotation(&q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - q[i][j]).abs() < 1e-13);
            }
        }
        let two = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
        let r = polar_rotation(&two).unwrap();
        assert_eq!(m3_re(&r), m3_identity::<f64>());
    }

    #[test]
    fn polar_handles_inverted_matrix() {
        let f = [[1.0, 0.1, 0.0], [0.0, 0.9, 0.0], [0.0, 0.0, -0.5]];
        let r = polar_rotation(&f).unwrap();
        assert!((S3::det(&r) - 1.0).abs() < 1e-12);
    }

    struct S3;
    impl S3 {
        fn det(m: &[[f64; 3]; 3]) -> f64 {
            crate::linalg::elementwise::det3(m)
        }
    }
}
