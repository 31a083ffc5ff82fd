//! Desk-scale scenes bundled with the library.

use crate::contact::{BarrierParams, Collider};
use crate::elasticity::MaterialParams;
use crate::error::{Error, Result};
use crate::loss::{ChangeReg, EnergyReg, Interpolation, Keyframe, LossSpec, Schedule, Selection, Target};
use crate::muscle::FiberSpec;
use crate::opt::OptimizerConfig;
use crate::sim::StepConfig;

use super::{InitialConditions, MeshSource, MuscleParams, ScenarioConfig, SCHEMA_VERSION};

pub const NAMES: [&str; 5] = ["single-tet-on-plane", "single-tet-on-plane-m6", "bar-hop", "caterpillar-lite", "basket-push"];

/// Height of the resting bodies above the ground plane, inside the barrier band.
pub const REST_GAP: f64 = 8e-4;

pub fn material() -> MaterialParams {
    let mut m = MaterialParams::from_young(5e4, 0.3, 1000.0);
    m.alpha = 0.5;
    m.beta = 0.002;
    m
}

fn base(name: &str, mesh: MeshSource, fibers: Vec<FiberSpec>, loss: Schedule, frames: usize) -> ScenarioConfig {
    ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: name.to_string(),
        mesh,
        material: material(),
        barrier: BarrierParams::default(),
        gravity: [0.0, 0.0, -9.81],
        colliders: vec![Collider::ground(0.0, 0.5)],
        fibers,
        muscle: MuscleParams::default(),
        loss,
        step: StepConfig::default(),
        optimizer: OptimizerConfig::default(),
        frames,
        seed: 0,
        initial: InitialConditions::default(),
    }
}

fn energy() -> Option<EnergyReg> {
    Some(EnergyReg { k: 1e-9, lambda: 1.0 })
}

fn change() -> Option<ChangeReg> {
    Some(ChangeReg { rate_max: 2e4, lambda: 1e-12 })
}

fn velocity(v: [f64; 3]) -> Target {
    Target::Velocity { selection: Selection::All, target: v, weight: 1.0 }
}

fn straight(from: [f64; 3], to: [f64; 3], segments: usize, shared: bool) -> FiberSpec {
    let points = (0..=segments)
        .map(|k| {
            let t = k as f64 / segments as f64;
            [0, 1, 2].map(|i| from[i] + t * (to[i] - from[i]))
        })
        .collect();
    FiberSpec { points, shared_activation: shared }
}

/// One tet resting on the ground with `m` ∈ {2, 6} single-segment fibers.
pub fn single_tet(m: usize) -> Result<ScenarioConfig> {
    let z = REST_GAP;
    let dirs: &[([f64; 3], [f64; 3])] = &[
        ([0.01, 0.02, 0.01], [0.06, 0.02, 0.01]),
        ([0.02, 0.02, 0.01], [0.02, 0.02, 0.06]),
        ([0.02, 0.01, 0.01], [0.02, 0.06, 0.01]),
        ([0.01, 0.01, 0.01], [0.04, 0.04, 0.01]),
        ([0.01, 0.02, 0.01], [0.04, 0.02, 0.04]),
        ([0.02, 0.01, 0.01], [0.02, 0.04, 0.04]),
    ];
    if m != 2 && m != 6 {
        return Err(Error::Config(format!("single-tet scene supports 2 or 6 activations, not {m}")));
    }
    let fibers = dirs[..m]
        .iter()
        .map(|(a, b)| straight([a[0], a[1], a[2] + z], [b[0], b[1], b[2] + z], 1, false))
        .collect();
    let loss = Schedule::constant(LossSpec {
        targets: vec![velocity([0.05, 0.0, 0.02])],
        energy: energy(),
        change: None,
    });
    let name = if m == 2 { "single-tet-on-plane" } else { "single-tet-on-plane-m6" };
    Ok(base(name, MeshSource::Tet { origin: [0.0, 0.0, z], edge: 0.1 }, fibers, loss, 20))
}

/// Bar lying on the ground with four longitudinal fibers along its edges,
/// each split into two independently driven halves (M = 8).
pub fn bar_hop() -> ScenarioConfig {
    let z = REST_GAP;
    let len = 0.2;
    let mut fibers = Vec::new();
    for (y, zz) in [(0.0125, 0.0125), (0.0375, 0.0125), (0.0125, 0.0375), (0.0375, 0.0375)] {
        fibers.push(straight([0.01, y, zz + z], [len - 0.01, y, zz + z], 2, false));
    }
    let key = |frame: usize, v: [f64; 3]| Keyframe {
        frame,
        loss: LossSpec { targets: vec![velocity(v)], energy: energy(), change: change() },
    };
    let loss = Schedule {
        mode: Interpolation::Constant,
        keys: vec![key(0, [0.0, 0.0, -0.05]), key(10, [0.1, 0.0, 0.3]), key(20, [0.1, 0.0, 0.0]), key(30, [0.0; 3])],
    };
    base("bar-hop", MeshSource::Box { cells: [4, 1, 1], cell: [0.05; 3], origin: [0.0, 0.0, z] }, fibers, loss, 40)
}

/// Coarse bar with four longitudinal fibers and seven circular rings, every
/// fiber driven by one activation (M = 11).
pub fn caterpillar_lite() -> ScenarioConfig {
    let z = REST_GAP;
    let len = 0.35;
    let mut fibers = Vec::new();
    for (y, zz) in [(0.0125, 0.0125), (0.0375, 0.0125), (0.0125, 0.0375), (0.0375, 0.0375)] {
        fibers.push(straight([0.01, y, zz + z], [len - 0.01, y, zz + z], 4, true));
    }
    for k in 0..7 {
        let x = 0.025 + 0.05 * k as f64;
        let ring = [[0.01, 0.01], [0.04, 0.01], [0.04, 0.04], [0.01, 0.04], [0.01, 0.01]];
        fibers.push(FiberSpec { points: ring.iter().map(|p| [x, p[0], p[1] + z]).collect(), shared_activation: true });
    }
    let loss = Schedule::constant(LossSpec {
        targets: vec![velocity([0.03, 0.0, 0.0])],
        energy: energy(),
        change: change(),
    });
    base(
        "caterpillar-lite",
        MeshSource::Box { cells: [7, 1, 1], cell: [0.05; 3], origin: [0.0, 0.0, z] },
        fibers,
        loss,
        40,
    )
}

/// Upright pusher column with a two-segment fiber on each side (M = 4),
/// tracking a center of mass that slides forward along keyframes.
pub fn basket_push() -> ScenarioConfig {
    let z = REST_GAP;
    let (w, h) = (0.04, 0.16);
    let fibers = vec![
        straight([0.008, 0.02, 0.01 + z], [0.008, 0.02, h - 0.01 + z], 2, false),
        straight([w - 0.008, 0.02, 0.01 + z], [w - 0.008, 0.02, h - 0.01 + z], 2, false),
    ];
    let com = [w / 2.0, w / 2.0, h / 2.0 + z];
    let key = |frame: usize, dx: f64| Keyframe {
        frame,
        loss: LossSpec {
            targets: vec![Target::Position { selection: Selection::All, target: [com[0] + dx, com[1], com[2]], weight: 100.0 }],
            energy: energy(),
            change: change(),
        },
    };
    let loss = Schedule { mode: Interpolation::Linear, keys: vec![key(0, 0.0), key(40, 0.01)] };
    base("basket-push", MeshSource::Box { cells: [1, 1, 4], cell: [w; 3], origin: [0.0, 0.0, z] }, fibers, loss, 40)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    match name {
        "single-tet-on-plane" => single_tet(2),
        "single-tet-on-plane-m6" => single_tet(6),
        "bar-hop" => Ok(bar_hop()),
        "caterpillar-lite" => Ok(caterpillar_lite()),
        "basket-push" => Ok(basket_push()),
        _ => Err(Error::Config(format!("unknown scene {name:?}; known scenes: {}", NAMES.join(", ")))),
    }
}
