use loco_core::tape::{self, Tape, Var};
use loco_core::{CScalar, Error, PerturbStep, Real, Result};
use proptest::prelude::*;

fn rosenbrock<S: Real>(x: &[S]) -> S {
    let mut s = S::zero();
    for i in 0..x.len() - 1 {
        let a = x[i + 1] - x[i] * x[i];
        let b = S::cst(1.0) - x[i];
        s += a * a * 100.0 + b * b;
    }
    s
}

fn rosenbrock_hessian(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        h[i][i] += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
        h[i][i + 1] -= 400.0 * x[i];
        h[i + 1][i] -= 400.0 * x[i];
        h[i + 1][i + 1] += 200.0;
    }
    h
}

fn mixed<S: Real>(x: &[S]) -> S {
    let mut s = S::zero();
    for (i, v) in x.iter().enumerate() {
        s += (*v * (i as f64 + 1.0)).sin() * v.exp() + (*v * *v + 1.0).ln();
    }
    s + x[0] * x[x.len() - 1] / (x[1] * x[1] + 2.0)
}

fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let s = b.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rosenbrock_hessian_is_exact(x in proptest::collection::vec(-2.0f64..2.0, 2..8)) {
        let f = |v: &[Var]| -> Result<Var> { Ok(rosenbrock(v)) };
        let out = tape::hessian(&f, &x, PerturbStep::DEFAULT, 1).unwrap();
        let h = rosenbrock_hessian(&x);
        for i in 0..x.len() {
            prop_assert!(rel(out.hessian.column(i).as_slice(), &h[i]) < 1e-13);
        }
        prop_assert_eq!(out.value, rosenbrock(&x));
    }

    #[test]
    fn gradient_matches_central_differences(x in proptest::collection::vec(-1.5f64..1.5, 2..8)) {
        let f = |v: &[Var]| -> Result<Var> { Ok(mixed(v)) };
        let g = tape::gradient(&f, &x).unwrap().gradient;
        let fd = central_gradient(mixed::<f64>, &x);
        prop_assert!(rel(&g, &fd) < 1e-7);
    }

    #[test]
    fn hessian_columns_match_fd_of_gradient(x in proptest::collection::vec(-1.0f64..1.0, 2..6)) {
        let f = |v: &[Var]| -> Result<Var> { Ok(mixed(v)) };
        let out = tape::hessian(&f, &x, PerturbStep::DEFAULT, 2).unwrap();
        for k in 0..x.len() {
            let e = 1e-6;
            let mut p = x.clone();
            let mut m = x.clone();
            p[k] += e;
            m[k] -= e;
            let gp = tape::gradient(&f, &p).unwrap().gradient;
            let gm = tape::gradient(&f, &m).unwrap().gradient;
            let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * e)).collect();
            prop_assert!(rel(out.hessian.column(k).as_slice(), &fd) < 1e-6);
        }
        prop_assert!(out.symmetry_defect() < 1e-12);
    }
}

#[test]
fn column_gradient_equals_unperturbed_gradient() {
    let f = |v: &[Var]| -> Result<Var> { Ok(mixed(v)) };
    let x = [0.3, -0.7, 1.1, 0.2];
    let g = tape::gradient(&f, &x).unwrap().gradient;
    for k in 0..x.len() {
        let c = tape::hessian_column(&f, &x, k, PerturbStep::DEFAULT).unwrap();
        assert_eq!(c.gradient, g);
        assert_eq!(c.value.re, mixed(&x));
    }
}

#[test]
fn workers_do_not_change_the_result() {
    let f = |v: &[Var]| -> Result<Var> { Ok(mixed(v)) };
    let x: Vec<f64> = (0..7).map(|i| 0.1 * i as f64 - 0.3).collect();
    let one = tape::hessian(&f, &x, PerturbStep::DEFAULT, 1).unwrap();
    for w in [2, 4, 7] {
        let many = tape::hessian(&f, &x, PerturbStep::DEFAULT, w).unwrap();
        assert_eq!(many.hessian, one.hessian);
        assert_eq!(many.tapes, x.len() + 1);
    }
}

#[test]
fn domain_errors_propagate_out_of_columns() {
    let f = |v: &[Var]| -> Result<Var> { Ok(v[0].ln() + v[1]) };
    assert!(tape::hessian(&f, &[-1.0, 1.0], PerturbStep::DEFAULT, 2).is_err());
}

#[test]
fn manual_recording_and_sweep() {
    let ((x, y), t) = Tape::record(|| {
        let x = tape::input(CScalar::new(2.0, 1e-20));
        let y = x * x * x;
        (x, y)
    })
    .unwrap();
    let adj = t.reverse_sweep(y).unwrap();
    // d/dx x³ = 12, second derivative 12 carried in the imaginary part
    assert_eq!(adj.get(x).re, 12.0);
    assert!((adj.get(x).im / 1e-20 - 12.0).abs() < 1e-12);
    assert_eq!(t.value(y).re, 8.0);
}

#[test]
fn nested_recording_is_refused() {
    let r = Tape::record(|| Tape::record(|| ()).map(|_| ()));
    assert!(matches!(r.unwrap().0, Err(Error::TapeBusy)));
}
