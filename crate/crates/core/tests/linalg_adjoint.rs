use std::sync::Arc;

use loco_core::linalg::{self, m3_mul, polar_rotation, svd3, m3_re, m3_transpose, CMat, Csr, Factorization, M3};
use loco_core::tape::{self, Var};
use loco_core::{CScalar, PerturbStep, Real, Result};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn m3_from(v: &[f64]) -> [[f64; 3]; 3] {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

fn lift<S: Real>(v: &[S]) -> M3<S> {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + if i == j { 1.0 } else { 0.0 });
    &b * b.transpose() + DMatrix::identity(n, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs(v in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let a = m3_from(&v);
        let s = svd3(&a).unwrap();
        let us = [0, 1, 2].map(|i| [0, 1, 2].map(|j| s.u[i][j] * s.sigma[j]));
        let r = m3_mul(&us, &m3_transpose(&s.v));
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((r[i][j] - a[i][j]).abs() < 1e-12);
            }
        }
        prop_assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2] && s.sigma[2] >= 0.0);
    }

    #[test]
    fn singular_value_sum_derivative_matches_fd(v in proptest::collection::vec(-1.0f64..1.0, 9), k in 0usize..9) {
        // Σσ has gradient U Vᵀ wherever the singular values are distinct
        let f = |x: &[f64]| -> f64 { svd3(&m3_from(x)).unwrap().sigma.iter().sum() };
        let s = svd3(&m3_from(&v)).unwrap();
        prop_assume!(s.sigma[0] - s.sigma[1] > 0.05 && s.sigma[1] - s.sigma[2] > 0.05 && s.sigma[2] > 0.05);
        let mut z: Vec<CScalar> = v.iter().map(|&x| CScalar::real(x)).collect();
        z[k] = CScalar::new(v[k], 1e-20);
        let sz = svd3(&lift(&z)).unwrap();
        let d = (sz.sigma[0] + sz.sigma[1] + sz.sigma[2]).im / 1e-20;
        let e = 1e-6;
        let mut p = v.clone();
        let mut m = v.clone();
        p[k] += e;
        m[k] -= e;
        let fd = (f(&p) - f(&m)) / (2.0 * e);
        prop_assert!((d - fd).abs() < 1e-7, "{d} vs {fd}");
    }

    #[test]
    fn polar_rotation_is_orthonormal(v in proptest::collection::vec(-0.3f64..0.3, 9)) {
        let mut f = m3_from(&v);
        for i in 0..3 {
            f[i][i] += 1.0;
        }
        let r = polar_rotation(&f).unwrap();
        let rtr = m3_mul(&m3_transpose(&r), &r);
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((rtr[i][j] - id).abs() < 1e-12);
            }
        }
        prop_assert!(f64::det3(&r) > 0.0);
    }

    #[test]
    fn factorized_solves_differentiate_linearly(seed in proptest::collection::vec(-1.0f64..1.0, 16), b in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let a = spd(4, &seed);
        let fact = Arc::new(Factorization::cholesky(a.clone()).unwrap());
        let f = |x: &[Var]| -> Result<Var> {
            let z = linalg::solve_const_matrix(&fact, x)?;
            Ok(Var::sqnorm(&z))
        };
        // ‖A⁻¹b‖² has Hessian 2A⁻²
        let h = tape::hessian(&f, &b, PerturbStep::DEFAULT, 1).unwrap().hessian;
        let inv = a.try_inverse().unwrap();
        let expect = &inv * &inv * 2.0;
        prop_assert!((h - &expect).abs().max() < 1e-10 * expect.abs().max());
    }
}

#[test]
fn trace_gram_and_det_examples() {
    let id = CMat::<f64>::identity(3);
    assert_eq!(id.trace_gram(), 3.0);
    assert_eq!(id.det3().unwrap(), 1.0);
    let d = CMat::<f64>::from_real(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 4.0]).unwrap();
    assert_eq!(d.det3().unwrap(), 24.0);
    assert!(CMat::<f64>::identity(2).det3().is_err());
}

#[test]
fn det_gradient_is_cofactor() {
    let v = [1.2, 0.1, -0.3, 0.2, 0.9, 0.4, -0.1, 0.3, 1.1];
    let f = |x: &[Var]| -> Result<Var> { Ok(Var::det3(&lift(x))) };
    let g = tape::gradient(&f, &v).unwrap().gradient;
    let cof = m3_re(&linalg::m3_cofactor(&m3_from(&v)));
    for i in 0..3 {
        for j in 0..3 {
            assert!((g[3 * i + j] - cof[i][j]).abs() < 1e-14);
        }
    }
}

#[test]
fn shapes_are_checked() {
    let a = CMat::<f64>::zeros(2, 3);
    assert!(a.matmul(&a).is_err());
    assert!(linalg::dot(&[1.0, 2.0], &[1.0]).is_err());
    let fact = Arc::new(Factorization::cholesky(DMatrix::identity(3, 3)).unwrap());
    assert!(linalg::solve_const_matrix(&fact, &[1.0, 2.0]).is_err());
}

#[test]
fn transpose_solve_reuses_the_factorization() {
    let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 2.0, 5.0, 1.0, 0.0, 3.0, 6.0]);
    let lu = Factorization::lu(a.clone()).unwrap();
    let r = [1.0, -2.0, 0.5];
    let z = lu.solve(&r);
    let zt = lu.solve_transpose(&r);
    let back = &a * nalgebra::DVector::from_column_slice(&z);
    let back_t = a.transpose() * nalgebra::DVector::from_column_slice(&zt);
    for i in 0..3 {
        assert!((back[i] - r[i]).abs() < 1e-14);
        assert!((back_t[i] - r[i]).abs() < 1e-14);
    }
}

#[test]
fn csr_matches_dense() {
    let trip = vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (2, 0, -1.0), (2, 2, 4.0), (0, 0, 1.0)];
    let m = Csr::from_triplets(3, 3, trip);
    let d = m.to_dense();
    assert_eq!(d[(0, 0)], 3.0);
    let x = [1.0, 2.0, 3.0];
    let y = m.matvec(&x);
    let yd = &d * nalgebra::DVector::from_column_slice(&x);
    assert_eq!(y, yd.as_slice());
    assert_eq!(m.transpose().to_dense(), d.transpose());
}
