use loco_core::scalar::{csfd_derivative, AnalyticFn, Rel};
use loco_core::{CScalar, PerturbStep, Real};
use proptest::prelude::*;

const FNS: [AnalyticFn; 8] = [
    AnalyticFn::Sin,
    AnalyticFn::Cos,
    AnalyticFn::Exp,
    AnalyticFn::Ln,
    AnalyticFn::Sqrt,
    AnalyticFn::Tanh,
    AnalyticFn::Cosh,
    AnalyticFn::Sinh,
];

fn analytic(f: AnalyticFn, x: f64) -> f64 {
    match f {
        AnalyticFn::Sin => x.cos(),
        AnalyticFn::Cos => -x.sin(),
        AnalyticFn::Exp => x.exp(),
        AnalyticFn::Ln => 1.0 / x,
        AnalyticFn::Sqrt => 0.5 / x.sqrt(),
        AnalyticFn::Tanh => 1.0 / x.cosh().powi(2),
        AnalyticFn::Cosh => x.sinh(),
        AnalyticFn::Sinh => x.cosh(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

proptest! {
    #[test]
    fn elementary_derivatives_match_calculus(x in 0.05f64..4.0, k in 0usize..8) {
        let f = FNS[k];
        let d = csfd_derivative(|z| z.apply(f), x, PerturbStep::DEFAULT).unwrap();
        prop_assert!(close(d, analytic(f, x), 1e-14), "{} at {x}: {d}", f.name());
    }

    #[test]
    fn derivative_does_not_depend_on_h(x in -2.0f64..2.0, e in 10i32..300) {
        // h² terms vanish below the rounding of the derivative's own scale
        let f = |z: CScalar| Ok(z.sin() * z.exp() / (z * z + 1.0));
        let a = csfd_derivative(f, x, PerturbStep::new(10f64.powi(-e)).unwrap()).unwrap();
        let b = csfd_derivative(f, x, PerturbStep::DEFAULT).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * (1.0 + x.exp()));
    }

    #[test]
    fn product_and_quotient_rules(x in 0.1f64..3.0) {
        let h = PerturbStep::DEFAULT;
        let p = csfd_derivative(|z| Ok(z.powi(3) * z.cos()), x, h).unwrap();
        prop_assert!(close(p, 3.0 * x * x * x.cos() - x.powi(3) * x.sin(), 1e-13));
        let q = csfd_derivative(|z| Ok(z.sin() / z), x, h).unwrap();
        prop_assert!(close(q, (x * x.cos() - x.sin()) / (x * x), 1e-12));
    }

    #[test]
    fn real_part_tracks_the_plain_f64_result(x in -0.5f64..3.0) {
        let z = CScalar::perturbed(x, PerturbStep::DEFAULT);
        let y = (z.sin() * z.cos() + z.exp()).sqrt() * z.tanh();
        let plain = (x.sin() * x.cos() + x.exp()).sqrt() * x.tanh();
        // products of two perturbed factors leave an O(h²) real residue
        prop_assert!((y.re - plain).abs() <= 4.0 * f64::EPSILON * plain.abs() + 1e-39);
    }

    #[test]
    fn comparisons_ignore_imaginary_parts(a in -5.0f64..5.0, b in -5.0f64..5.0, ia in -1.0f64..1.0, ib in -1.0f64..1.0) {
        let (x, y) = (CScalar::new(a, ia), CScalar::new(b, ib));
        prop_assert_eq!(x.compare(y, Rel::Lt), a < b);
        prop_assert_eq!(x.compare(y, Rel::Ge), a >= b);
        prop_assert_eq!(x.max(y).re, a.max(b));
    }
}

#[test]
fn abs_takes_the_branch_of_the_real_part() {
    let h = PerturbStep::DEFAULT;
    assert_eq!(csfd_derivative(|z| Ok(z.abs()), -1.0, h).unwrap(), -1.0);
    assert_eq!(csfd_derivative(|z| Ok(z.abs()), 2.0, h).unwrap(), 1.0);
}

#[test]
fn subtractive_cancellation_is_absent() {
    // f(x) = x² − x² + x has derivative 1 regardless of h
    for e in [5, 20, 100, 300] {
        let h = PerturbStep::new(10f64.powi(-e)).unwrap();
        let d = csfd_derivative(|z| Ok(z * z - z * z + z), 1e8, h).unwrap();
        assert_eq!(d, 1.0);
    }
}

#[test]
fn out_of_domain_arguments_are_errors() {
    assert!(CScalar::real(-1.0).apply(AnalyticFn::Ln).is_err());
    assert!(CScalar::real(-1.0).apply(AnalyticFn::Sqrt).is_err());
    assert!(CScalar::real(1.0).checked_div(CScalar::new(0.0, 1e-20)).is_err());
    assert!(PerturbStep::new(0.0).is_err());
    assert!(PerturbStep::new(-1e-20).is_err());
}

#[test]
fn generic_code_agrees_across_scalar_types() {
    fn g<S: Real>(x: S) -> S {
        (x * x + 1.0).ln() * x.cosh() - x.sqrt()
    }
    let x = 0.7;
    let z = g(CScalar::perturbed(x, PerturbStep::DEFAULT));
    assert_eq!(z.re, g(x));
    let fd = (g(x + 1e-6) - g(x - 1e-6)) / 2e-6;
    assert!(close(z.im / 1e-20, fd, 1e-8));
}
