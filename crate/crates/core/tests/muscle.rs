use loco_core::elasticity::TetMesh;
use loco_core::meshgen::box_mesh;
use loco_core::muscle::{element_rotation, gaussian_weight, segment_stress, FiberSpec, MuscleSystem};
use loco_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bar() -> (TetMesh, MuscleSystem) {
    let mesh = box_mesh([4, 1, 1], [0.05; 3], [0.0; 3]).unwrap();
    let fibers = vec![
        FiberSpec { points: vec![[0.01, 0.02, 0.02], [0.1, 0.02, 0.02], [0.19, 0.025, 0.03]], shared_activation: false },
        FiberSpec { points: vec![[0.02, 0.01, 0.04], [0.18, 0.04, 0.01]], shared_activation: false },
    ];
    let ms = MuscleSystem::new(&mesh, &fibers, 0.05, 1e-4).unwrap();
    (mesh, ms)
}

fn deformed(mesh: &TetMesh, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mesh.rest_flat().iter().map(|v| v + 0.005 * rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn weight_examples() {
    assert_eq!(gaussian_weight(0.0, 0.1), 1.0);
    assert!((gaussian_weight(0.1, 0.1) - (-1f64).exp()).abs() < 1e-15);
    let (_, ms) = bar();
    for row in &ms.weights {
        assert!(row.iter().all(|&(_, w)| (1e-4..=1.0).contains(&w)));
    }
}

#[test]
fn stress_examples() {
    let s = segment_stress(&[1.0, 0.0, 0.0], 2.0);
    assert_eq!(s, [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    let d = [0.6, 0.0, 0.8];
    let t = segment_stress(&d, 3.5);
    assert!((t[0][0] + t[1][1] + t[2][2] - 3.5).abs() < 1e-15);
    let r = element_rotation(&[[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((r[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forces_are_linear_in_activation(seed in 0u64..500, a in proptest::collection::vec(-1e3f64..1e3, 3), b in proptest::collection::vec(-1e3f64..1e3, 3)) {
        let (mesh, ms) = bar();
        prop_assert_eq!(ms.num_activations, 3);
        let x = deformed(&mesh, seed);
        let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let fa = ms.forces(&mesh, &x, &a).unwrap();
        let fb = ms.forces(&mesh, &x, &b).unwrap();
        let fab = ms.forces(&mesh, &x, &ab).unwrap();
        let scale = fab.iter().chain(&fa).fold(1e-300f64, |m, v| m.max(v.abs()));
        for i in 0..fa.len() {
            prop_assert!((fab[i] - fa[i] - fb[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn net_muscle_force_vanishes(seed in 0u64..500, a in proptest::collection::vec(-1e3f64..1e3, 3)) {
        let (mesh, ms) = bar();
        let x = deformed(&mesh, seed);
        let f = ms.forces(&mesh, &x, &a).unwrap();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..3 {
            let s: f64 = f.iter().skip(k).step_by(3).sum();
            prop_assert!(s.abs() <= 1e-10 * norm.max(1e-300));
        }
    }

    #[test]
    fn activation_matrix_reproduces_forces(seed in 0u64..500, a in proptest::collection::vec(-1e3f64..1e3, 3)) {
        let (mesh, ms) = bar();
        let x = deformed(&mesh, seed);
        let am = ms.activation_matrix(&mesh, &x).unwrap();
        let f = ms.forces(&mesh, &x, &a).unwrap();
        let g = &am * nalgebra::DVector::from_column_slice(&a);
        let scale = f.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for i in 0..f.len() {
            prop_assert!((g[i] - f[i]).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn zero_activation_gives_zero_force() {
    let (mesh, ms) = bar();
    let x = deformed(&mesh, 3);
    assert!(ms.forces(&mesh, &x, &[0.0; 3]).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn shared_fiber_uses_one_activation() {
    let mesh = box_mesh([4, 1, 1], [0.05; 3], [0.0; 3]).unwrap();
    let fiber = FiberSpec { points: vec![[0.01, 0.02, 0.02], [0.1, 0.02, 0.02], [0.19, 0.02, 0.02]], shared_activation: true };
    let ms = MuscleSystem::new(&mesh, &[fiber], 0.05, 1e-4).unwrap();
    assert_eq!(ms.num_activations, 1);
    assert_eq!(ms.segments.len(), 2);
}

#[test]
fn fibers_outside_the_body_are_rejected() {
    let mesh = box_mesh([1, 1, 1], [0.05; 3], [0.0; 3]).unwrap();
    let fiber = FiberSpec { points: vec![[0.01, 0.01, 0.01], [0.5, 0.5, 0.5]], shared_activation: false };
    assert!(matches!(MuscleSystem::new(&mesh, &[fiber], 0.05, 1e-4), Err(Error::Muscle(_))));
}
