use std::path::Path;

use loco_core::loss::{EnergyReg, LossSpec, Schedule, Selection, Target};
use loco_core::opt::{self, FrameObjective, OptimizerConfig, Phase};
use loco_core::scenario::{builtin, jitter, Scenario};
use loco_core::sim::SimState;
use loco_core::PerturbStep;

fn single_tet(m: usize) -> Scenario {
    builtin::single_tet(m).unwrap().build(Path::new(".")).unwrap()
}

fn floating(m: usize, gravity: [f64; 3]) -> Scenario {
    let mut cfg = builtin::single_tet(m).unwrap();
    cfg.colliders.clear();
    cfg.gravity = gravity;
    cfg.build(Path::new(".")).unwrap()
}

fn energy_only(k: f64) -> LossSpec {
    LossSpec { targets: vec![], energy: Some(EnergyReg { k, lambda: 1.0 }), change: None }
}

/// Per-vertex velocity targets reproducing the step taken with `a`.
fn matching_targets(sc: &Scenario, state: &SimState, a: &[f64]) -> Vec<Target> {
    let (next, _) = sc.sim.advance(state, a).unwrap();
    (0..sc.sim.mesh.num_vertices())
        .map(|i| Target::Velocity {
            selection: Selection::Vertices(vec![i]),
            target: [0, 1, 2].map(|k| next.v[3 * i + k]),
            weight: 1.0,
        })
        .collect()
}

#[test]
fn energy_only_hessian_is_k_identity() {
    let sc = single_tet(6);
    let spec = energy_only(3.0);
    let a = jitter(1, 6, 1e3);
    let h = opt::loss_hessian(&sc.sim, &sc.initial, &a, &[0.0; 6], &spec, &OptimizerConfig { workers: 2, ..Default::default() }).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let e = if i == j { 3.0 } else { 0.0 };
            assert!((h[(i, j)] - e).abs() < 1e-15, "H[{i},{j}] = {}", h[(i, j)]);
        }
    }
    let g = opt::loss_gradient(&sc.sim, &sc.initial, &[0.0; 6], &[0.0; 6], &spec).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn doubling_weights_doubles_the_gradient() {
    let sc = single_tet(2);
    let spec = sc.config.loss.spec_at(0).unwrap();
    let a = jitter(2, 2, 1e3);
    let g1 = opt::loss_gradient(&sc.sim, &sc.initial, &a, &[0.0; 2], &spec).unwrap();
    let g2 = opt::loss_gradient(&sc.sim, &sc.initial, &a, &[0.0; 2], &spec.scaled(2.0)).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1e-300));
    }
}

#[test]
fn zero_target_without_gravity_keeps_the_body_at_rest() {
    let sc = floating(2, [0.0; 3]);
    let spec = LossSpec {
        targets: vec![Target::Velocity { selection: Selection::All, target: [0.0; 3], weight: 1.0 }],
        energy: Some(EnergyReg { k: 1e-9, lambda: 1.0 }),
        change: None,
    };
    let (roll, failure) =
        opt::rollout(&sc.sim, &sc.initial, &[0.0; 2], &Schedule::constant(spec), 5, &OptimizerConfig::default());
    assert!(failure.is_none());
    for a in &roll.activations {
        assert_eq!(a, &vec![0.0; 2]);
    }
    for s in &roll.states {
        assert_eq!(s.x, sc.initial.x);
    }
}

#[test]
fn gravity_consistent_targets_need_no_actuation() {
    let sc = floating(6, [0.0, 0.0, -9.81]);
    let targets = matching_targets(&sc, &sc.initial, &[0.0; 6]);
    let spec = LossSpec { targets, energy: Some(EnergyReg { k: 1e-12, lambda: 1.0 }), change: None };
    let a0 = jitter(3, 6, 500.0);
    let cfg = OptimizerConfig { gtol: 1e-20, ..Default::default() };
    let (a, rep) = opt::solve_frame(&sc.sim, &sc.initial, &a0, &spec, &cfg).unwrap();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-3 * 500.0, "activations {a:?}");
    assert!(rep.final_loss() <= rep.initial_loss());
}

#[test]
fn newton_recovers_the_generating_activations() {
    let sc = single_tet(6);
    let a_true = jitter(4, 6, 2e3);
    let targets = matching_targets(&sc, &sc.initial, &a_true);
    let spec = LossSpec { targets, energy: None, change: None };
    let a_prev = vec![0.0; 6];
    let obj = FrameObjective { sim: &sc.sim, state: &sc.initial, a_prev: &a_prev, spec: &spec };
    let cfg = OptimizerConfig { gtol: 1e-30, newton_max: 10, ..Default::default() };
    let (_, rep) = opt::minimize(&obj, &a_prev, &cfg).unwrap();
    let l0 = rep.initial_loss();
    assert!(rep.final_loss() <= 1e-10 * l0, "{} from {l0}", rep.final_loss());
    assert!(rep.history.iter().any(|r| r.phase == Phase::Newton));
    // accepted steps never increase the loss
    for w in rep.history.windows(2) {
        assert!(w[1].loss <= w[0].loss);
    }
    // the same budget of gradient descent is far behind
    let (_, gd) = opt::gradient_descent(&obj, &a_prev, rep.gradient_evals + rep.newton_iterations * 6, &cfg).unwrap();
    assert!(gd.final_loss() > 1e3 * rep.final_loss().max(1e-300));
}

#[test]
fn hessian_symmetry_defect_is_small_on_builtins() {
    for name in ["single-tet-on-plane", "single-tet-on-plane-m6"] {
        let sc = builtin::builtin(name).unwrap().build(Path::new(".")).unwrap();
        let m = sc.sim.num_activations();
        let spec = sc.config.loss.spec_at(0).unwrap();
        let a_prev = vec![0.0; m];
        let obj = FrameObjective { sim: &sc.sim, state: &sc.initial, a_prev: &a_prev, spec: &spec };
        let h = opt::hessian(&obj, &jitter(5, m, 1e3), PerturbStep::DEFAULT, 2).unwrap();
        assert!(h.symmetry_defect() < 1e-6);
        assert_eq!(h.tapes, m + 1);
    }
}

#[test]
fn invalid_optimizer_settings_are_rejected() {
    for cfg in [
        OptimizerConfig { ls_factor: 1.5, ..Default::default() },
        OptimizerConfig { h: 0.0, ..Default::default() },
        OptimizerConfig { workers: 0, ..Default::default() },
        OptimizerConfig { bounds: Some([1.0, -1.0]), ..Default::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
}
