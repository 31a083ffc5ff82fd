use loco_core::contact::{self, BarrierParams, Collider, FrictionState};
use loco_core::elasticity::MaterialParams;
use loco_core::meshgen::{box_mesh, corner_tet};
use loco_core::muscle::{FiberSpec, MuscleSystem};
use loco_core::sim::{SimState, Simulator, StepConfig};
use loco_core::Error;

fn material() -> MaterialParams {
    MaterialParams::from_young(5e4, 0.3, 1000.0)
}

fn tet_sim(colliders: Vec<Collider>, gravity: [f64; 3], z0: f64) -> Simulator {
    let mesh = corner_tet([0.0, 0.0, z0], 0.1).unwrap();
    let muscles = MuscleSystem::empty(&mesh);
    Simulator::new(mesh, material(), BarrierParams::default(), colliders, muscles, gravity, StepConfig::default())
        .unwrap()
}

fn bar_sim(colliders: Vec<Collider>, gravity: [f64; 3], mat: MaterialParams) -> Simulator {
    let mesh = box_mesh([4, 1, 1], [0.05, 0.05, 0.05], [0.0, 0.0, 0.0005]).unwrap();
    let fibers = [
        FiberSpec { points: vec![[0.01, 0.015, 0.015], [0.1, 0.015, 0.015], [0.19, 0.015, 0.015]], shared_activation: false },
        FiberSpec { points: vec![[0.01, 0.035, 0.04], [0.19, 0.035, 0.04]], shared_activation: true },
    ];
    let muscles = MuscleSystem::new(&mesh, &fibers, 0.05, 1e-4).unwrap();
    Simulator::new(mesh, mat, BarrierParams::default(), colliders, muscles, gravity, StepConfig::default()).unwrap()
}

#[test]
fn free_fall_velocity_update_is_exact() {
    let g = [0.0, 0.0, -9.81];
    let sim = tet_sim(vec![], g, 1.0);
    let mut s = SimState::at_rest(&sim.mesh);
    for i in 0..s.v.len() {
        s.v[i] = [0.3, -0.1, 0.5][i % 3];
    }
    let (next, out) = sim.advance(&s, &[]).unwrap();
    for i in 0..s.v.len() {
        let expect = s.v[i] + sim.step.dt * g[i % 3];
        assert!((next.v[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{i}");
    }
    assert!(out.residual.is_finite());
}

#[test]
fn rest_without_forces_has_zero_residual() {
    let sim = tet_sim(vec![], [0.0; 3], 0.0);
    let s = SimState::at_rest(&sim.mesh);
    let r = sim.residual(&s.x, &s, &FrictionState::default(), &[]).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-15));
    let (next, out) = sim.advance(&s, &[]).unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(next.x, s.x);
}

#[test]
fn small_steps_are_consistent() {
    let mut sim = tet_sim(vec![], [0.0, 0.0, -9.81], 1.0);
    let mut s = SimState::at_rest(&sim.mesh);
    s.v[3] = 0.2;
    s.v[7] = -0.1;
    for dt in [1e-3, 1e-4] {
        sim.step.dt = dt;
        let (next, _) = sim.advance(&s, &[]).unwrap();
        let dev = (0..s.x.len()).map(|i| (next.x[i] - s.x[i] - dt * s.v[i]).abs()).fold(0.0, f64::max);
        assert!(dev < 20.0 * dt * dt, "{dt}: {dev}");
    }
}

#[test]
fn resting_contact_carries_the_weight() {
    let g = [0.0, 0.0, -9.81];
    let mut sim = tet_sim(vec![Collider::ground(0.0, 0.5)], g, 0.0008);
    sim.material.alpha = 5.0;
    let mut s = SimState::at_rest(&sim.mesh);
    let mut min_d = f64::INFINITY;
    for _ in 0..120 {
        let (n, out) = sim.advance(&s, &[]).unwrap();
        min_d = min_d.min(out.min_distance);
        s = n;
    }
    assert!(min_d > 0.0);
    let d = sim.min_distance(&s.x);
    assert!(d > 0.0 && d < sim.barrier.dhat, "{d}");
    let fc = contact::contact_forces(&sim.mesh.surface_vertices, &sim.colliders, &sim.barrier, &s.x).unwrap();
    let up: f64 = fc.iter().skip(2).step_by(3).sum();
    let weight = sim.total_mass() * 9.81;
    assert!(((up - weight) / weight).abs() < 1e-6, "{up} vs {weight}");
}

#[test]
fn momentum_is_conserved_without_external_forces() {
    let mut mat = material();
    mat.alpha = 0.0;
    mat.beta = 0.0;
    let sim = bar_sim(vec![], [0.0; 3], mat);
    let mut s = SimState::at_rest(&sim.mesh);
    for i in 0..s.v.len() {
        s.v[i] = 0.05 * ((i * 7 % 11) as f64 - 5.0);
    }
    let a = [300.0, -200.0, 500.0];
    let (next, _) = sim.advance(&s, &a).unwrap();
    let mom = |v: &[f64]| -> [f64; 3] {
        let mut p = [0.0; 3];
        for i in 0..v.len() {
            p[i % 3] += sim.mass[i / 3] * v[i];
        }
        p
    };
    let (p0, p1) = (mom(&s.v), mom(&next.v));
    let scale: f64 = s.v.iter().zip(&sim.mass.repeat(3)).map(|(v, m)| (v * m).abs()).sum();
    for k in 0..3 {
        assert!((p1[k] - p0[k]).abs() < 1e-10 * scale, "{k}: {} vs {}", p1[k], p0[k]);
    }
}

#[test]
fn recorded_and_plain_steps_agree_bitwise() {
    let mut mat = material();
    mat.alpha = 0.5;
    mat.beta = 0.01;
    let mut sim = bar_sim(vec![Collider::ground(0.0, 0.4)], [0.0, 0.0, -9.81], mat);
    let s = SimState::at_rest(&sim.mesh);
    let a = [800.0, -300.0, 600.0];
    let (plain, p_out) = sim.advance(&s, &a).unwrap();
    sim.step.record = true;
    let (rec, r_out) = sim.advance(&s, &a).unwrap();
    assert_eq!(plain.x, rec.x);
    assert_eq!(plain.v, rec.v);
    assert_eq!(p_out.iterations, r_out.iterations);
    assert!(p_out.min_distance > 0.0);
}

#[test]
fn newton_matrix_at_rest_is_spd_without_shift() {
    let mut mat = material();
    mat.alpha = 0.2;
    mat.beta = 0.01;
    let sim = bar_sim(vec![], [0.0; 3], mat);
    let s = SimState::at_rest(&sim.mesh);
    let (h, _, shift) = sim.newton_system(&s.x, &s, &FrictionState::default(), &[0.0; 3]).unwrap();
    assert_eq!(shift, 0.0);
    assert_eq!(&h, &h.transpose());
    // H = M(1 + αΔt) + Δt(βΔt... ) K₀-consistent: compare against the rest stiffness
    let dt = sim.step.dt;
    let k0 = sim.k0.to_dense();
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            let mut expect = (dt * dt + dt * sim.material.beta) * k0[(i, j)];
            if i == j {
                expect += sim.mass[i / 3] * (1.0 + dt * sim.material.alpha);
            }
            assert!((h[(i, j)] - expect).abs() < 1e-8 * (1.0 + expect.abs()), "({i},{j})");
        }
    }
}

#[test]
fn iteration_cap_reports_history() {
    let mut sim = tet_sim(vec![Collider::ground(0.0, 0.5)], [0.0, 0.0, -9.81], 0.002);
    sim.step.max_newton = 1;
    sim.step.newton_tol = 1e-14;
    let mut s = SimState::at_rest(&sim.mesh);
    for i in (2..s.v.len()).step_by(3) {
        s.v[i] = -0.5;
    }
    match sim.advance(&s, &[]) {
        Err(Error::ForwardNonConvergence { iterations, history }) => {
            assert_eq!(iterations, 1);
            assert_eq!(history.len(), 2);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn fast_impact_stays_feasible() {
    let mut sim = bar_sim(vec![Collider::ground(0.0, 0.5)], [0.0, 0.0, -9.81], material());
    sim.material.alpha = 1.0;
    let mut s = SimState::at_rest(&sim.mesh);
    for i in (2..s.v.len()).step_by(3) {
        s.v[i] = -2.0;
    }
    for _ in 0..10 {
        let (n, out) = sim.advance(&s, &[0.0; 3]).unwrap();
        assert!(out.min_distance > 0.0);
        s = n;
    }
}
