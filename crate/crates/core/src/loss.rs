//! Kinematic targets and regularizers of the per-frame control loss.

use serde::{Deserialize, Serialize};

use crate::elasticity::{self, vertex, MaterialParams, TetMesh};
use crate::error::{Error, Result};
use crate::linalg::{v3_cross, V3};
use crate::real::Real;
use crate::sim::{SimState, Simulator, StepOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Surface,
    Vertices(Vec<usize>),
    /// Vertices whose rest position lies in the axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Selection {
    pub fn resolve(&self, mesh: &TetMesh) -> Result<Vec<usize>> {
        let ids: Vec<usize> = match self {
            Selection::All => (0..mesh.num_vertices()).collect(),
            Selection::Surface => mesh.surface_vertices.clone(),
            Selection::Vertices(v) => {
                if let Some(bad) = v.iter().find(|&&i| i >= mesh.num_vertices()) {
                    return Err(Error::Config(format!("selection vertex {bad} does not exist")));
                }
                v.clone()
            }
            Selection::Box { min, max } => (0..mesh.num_vertices())
                .filter(|&i| (0..3).all(|k| mesh.rest[i][k] >= min[k] && mesh.rest[i][k] <= max[k]))
                .collect(),
        };
        if ids.is_empty() {
            return Err(Error::Config(format!("selection {self:?} is empty")));
        }
        Ok(ids)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSelection {
    All,
    Elements(Vec<usize>),
}

impl ElementSelection {
    pub fn resolve(&self, mesh: &TetMesh) -> Result<Vec<usize>> {
        let ids: Vec<usize> = match self {
            ElementSelection::All => (0..mesh.num_tets()).collect(),
            ElementSelection::Elements(e) => {
                if let Some(bad) = e.iter().find(|&&i| i >= mesh.num_tets()) {
                    return Err(Error::Config(format!("selection element {bad} does not exist")));
                }
                e.clone()
            }
        };
        if ids.is_empty() {
            return Err(Error::Config("element selection is empty".into()));
        }
        Ok(ids)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Position { selection: Selection, target: [f64; 3], weight: f64 },
    Velocity { selection: Selection, target: [f64; 3], weight: f64 },
    Acceleration { selection: Selection, target: [f64; 3], weight: f64 },
    /// Rate of angular momentum about the selection's center of mass.
    Angular { selection: Selection, target: [f64; 3], weight: f64 },
    /// Rate of the moment of inertia about `axis` through the center of mass.
    Moi { selection: Selection, axis: [f64; 3], target: f64, weight: f64 },
    /// Rate of elastic energy stored in the element subset.
    Elastic { elements: ElementSelection, target: f64, weight: f64 },
    /// Rate of the convex-hull area of the selection projected along `normal`.
    Projection { selection: Selection, normal: [f64; 3], target: f64, weight: f64 },
}

impl Target {
    pub fn weight(&self) -> f64 {
        match self {
            Target::Position { weight, .. }
            | Target::Velocity { weight, .. }
            | Target::Acceleration { weight, .. }
            | Target::Angular { weight, .. }
            | Target::Moi { weight, .. }
            | Target::Elastic { weight, .. }
            | Target::Projection { weight, .. } => *weight,
        }
    }

    fn weight_mut(&mut self) -> &mut f64 {
        match self {
            Target::Position { weight, .. }
            | Target::Velocity { weight, .. }
            | Target::Acceleration { weight, .. }
            | Target::Angular { weight, .. }
            | Target::Moi { weight, .. }
            | Target::Elastic { weight, .. }
            | Target::Projection { weight, .. } => weight,
        }
    }

    fn values_mut(&mut self) -> Vec<&mut f64> {
        match self {
            Target::Position { target, .. }
            | Target::Velocity { target, .. }
            | Target::Acceleration { target, .. }
            | Target::Angular { target, .. } => target.iter_mut().collect(),
            Target::Moi { target, .. } | Target::Elastic { target, .. } | Target::Projection { target, .. } => {
                vec![target]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyReg {
    pub k: f64,
    #[serde(default = "one")]
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeReg {
    /// Largest penalty-free activation rate.
    pub rate_max: f64,
    #[serde(default = "one")]
    pub lambda: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub energy: Option<EnergyReg>,
    #[serde(default)]
    pub change: Option<ChangeReg>,
}

impl LossSpec {
    pub fn validate(&self, mesh: &TetMesh) -> Result<()> {
        if self.targets.is_empty() && self.energy.is_none() && self.change.is_none() {
            return Err(Error::Config("loss needs at least one target or regularizer".into()));
        }
        for t in &self.targets {
            if !(t.weight() >= 0.0) {
                return Err(Error::Config(format!("negative weight in {t:?}")));
            }
            match t {
                Target::Position { selection, .. }
                | Target::Velocity { selection, .. }
                | Target::Acceleration { selection, .. }
                | Target::Angular { selection, .. } => {
                    selection.resolve(mesh)?;
                }
                Target::Moi { selection, axis, .. } => {
                    selection.resolve(mesh)?;
                    unit(axis)?;
                }
                Target::Projection { selection, normal, .. } => {
                    selection.resolve(mesh)?;
                    unit(normal)?;
                }
                Target::Elastic { elements, .. } => {
                    elements.resolve(mesh)?;
                }
            }
        }
        if let Some(e) = &self.energy {
            if !(e.k >= 0.0 && e.lambda >= 0.0) {
                return Err(Error::Config("energy regularizer needs k ≥ 0 and lambda ≥ 0".into()));
            }
        }
        if let Some(c) = &self.change {
            if !(c.rate_max >= 0.0 && c.lambda >= 0.0) {
                return Err(Error::Config("change regularizer needs rate_max ≥ 0 and lambda ≥ 0".into()));
            }
        }
        Ok(())
    }

    /// Multiplies every weight and regularizer coefficient by `s`.
    pub fn scaled(&self, s: f64) -> LossSpec {
        let mut out = self.clone();
        for t in &mut out.targets {
            *t.weight_mut() *= s;
        }
        if let Some(e) = &mut out.energy {
            e.lambda *= s;
        }
        if let Some(c) = &mut out.change {
            c.lambda *= s;
        }
        out
    }

    /// Entry-wise interpolation of all numeric values; both specs must have
    /// the same shape.
    pub fn lerp(&self, other: &LossSpec, t: f64) -> Result<LossSpec> {
        let mismatch = || Error::Config("keyframed loss specs differ in structure".into());
        if self.targets.len() != other.targets.len()
            || self.energy.is_some() != other.energy.is_some()
            || self.change.is_some() != other.change.is_some()
        {
            return Err(mismatch());
        }
        let mix = |a: f64, b: f64| a + (b - a) * t;
        let mut out = self.clone();
        for (o, b) in out.targets.iter_mut().zip(&other.targets) {
            if std::mem::discriminant(o) != std::mem::discriminant(b) {
                return Err(mismatch());
            }
            let mut b = b.clone();
            let bw = b.weight();
            *o.weight_mut() = mix(o.weight(), bw);
            for (x, y) in o.values_mut().into_iter().zip(b.values_mut()) {
                *x = mix(*x, *y);
            }
        }
        if let (Some(e), Some(f)) = (&mut out.energy, &other.energy) {
            e.k = mix(e.k, f.k);
            e.lambda = mix(e.lambda, f.lambda);
        }
        if let (Some(c), Some(d)) = (&mut out.change, &other.change) {
            c.rate_max = mix(c.rate_max, d.rate_max);
            c.lambda = mix(c.lambda, d.lambda);
        }
        Ok(out)
    }
}

fn unit(v: &[f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0) {
        return Err(Error::Config("axis/normal must be non-zero".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Constant,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: usize,
    pub loss: LossSpec,
}

/// Loss specs keyed by frame index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default)]
    pub mode: Interpolation,
    pub keys: Vec<Keyframe>,
}

impl Schedule {
    pub fn constant(spec: LossSpec) -> Self {
        Schedule { mode: Interpolation::Constant, keys: vec![Keyframe { frame: 0, loss: spec }] }
    }

    pub fn validate(&self, mesh: &TetMesh) -> Result<()> {
        if self.keys.is_empty() {
            return Err(Error::Config("loss schedule has no keyframes".into()));
        }
        if self.keys.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::Config("loss keyframes must have increasing frame numbers".into()));
        }
        for k in &self.keys {
            k.loss.validate(mesh)?;
        }
        if self.mode == Interpolation::Linear {
            for w in self.keys.windows(2) {
                w[0].loss.lerp(&w[1].loss, 0.5)?;
            }
        }
        Ok(())
    }

    pub fn spec_at(&self, frame: usize) -> Result<LossSpec> {
        let keys = &self.keys;
        if keys.is_empty() {
            return Err(Error::Config("loss schedule has no keyframes".into()));
        }
        let i = keys.iter().rposition(|k| k.frame <= frame).unwrap_or(0);
        match self.mode {
            Interpolation::Constant => Ok(keys[i].loss.clone()),
            Interpolation::Linear => {
                if frame <= keys[0].frame || i + 1 == keys.len() {
                    return Ok(keys[i].loss.clone());
                }
                let (a, b) = (&keys[i], &keys[i + 1]);
                let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                a.loss.lerp(&b.loss, t)
            }
        }
    }
}

/// Mass-weighted center of the selected vertices.
pub fn com<S: Real>(x: &[S], sel: &[usize], mass: &[f64]) -> V3<S> {
    let total: f64 = sel.iter().map(|&i| mass[i]).sum();
    let mut c = [S::zero(); 3];
    for &i in sel {
        let p = vertex(x, i);
        for k in 0..3 {
            c[k] += p[k] * (mass[i] / total);
        }
    }
    c
}

fn com_f(x: &[f64], sel: &[usize], mass: &[f64]) -> [f64; 3] {
    com(x, sel, mass)
}

fn sq_dist<S: Real>(a: &V3<S>, t: &[f64; 3]) -> S {
    let d = [a[0] - t[0], a[1] - t[1], a[2] - t[2]];
    S::sqnorm(&d)
}

/// `‖com(x) − x⋆‖²`.
pub fn g_position<S: Real>(x: &[S], sel: &[usize], mass: &[f64], target: &[f64; 3]) -> S {
    sq_dist(&com(x, sel, mass), target)
}

/// `‖com((x − x_t)/Δt) − v⋆‖²`.
pub fn g_velocity<S: Real>(x: &[S], x_t: &[f64], sel: &[usize], mass: &[f64], target: &[f64; 3], dt: f64) -> S {
    let c = com(x, sel, mass);
    let c0 = com_f(x_t, sel, mass);
    let v = [0, 1, 2].map(|k| (c[k] - c0[k]) / dt);
    sq_dist(&v, target)
}

/// `‖com((x − 2x_t + x_{t−1})/Δt²) − a⋆‖²`.
pub fn g_acceleration<S: Real>(
    x: &[S],
    x_t: &[f64],
    x_prev: &[f64],
    sel: &[usize],
    mass: &[f64],
    target: &[f64; 3],
    dt: f64,
) -> S {
    let c = com(x, sel, mass);
    let c0 = com_f(x_t, sel, mass);
    let cm = com_f(x_prev, sel, mass);
    let acc = [0, 1, 2].map(|k| (c[k] - 2.0 * c0[k] + cm[k]) / (dt * dt));
    sq_dist(&acc, target)
}

/// `Σ m rᵢ × vᵢ` about the selection's center of mass.
pub fn angular_momentum<S: Real>(x: &[S], v: &[S], sel: &[usize], mass: &[f64]) -> V3<S> {
    let c = com(x, sel, mass);
    let mut l = [S::zero(); 3];
    for &i in sel {
        let p = vertex(x, i);
        let r = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let lv = v3_cross(&r, &vertex(v, i));
        for k in 0..3 {
            l[k] += lv[k] * mass[i];
        }
    }
    l
}

/// `‖(L_{t+1} − L_t)/Δt − L̇⋆‖²`.
pub fn g_angular<S: Real>(
    x: &[S],
    state: &SimState,
    sel: &[usize],
    mass: &[f64],
    target: &[f64; 3],
    dt: f64,
) -> S {
    let v: Vec<S> = x.iter().zip(&state.x).map(|(&a, &b)| (a - b) / dt).collect();
    let l1 = angular_momentum(x, &v, sel, mass);
    let l0 = angular_momentum(&state.x, &state.v, sel, mass);
    let rate = [0, 1, 2].map(|k| (l1[k] - l0[k]) / dt);
    sq_dist(&rate, target)
}

/// `Σ m rᵢ²` with `rᵢ` the distance to `axis` through the center of mass.
pub fn moment_of_inertia<S: Real>(x: &[S], sel: &[usize], mass: &[f64], axis: &[f64; 3]) -> S {
    let c = com(x, sel, mass);
    let mut acc = S::zero();
    for &i in sel {
        let p = vertex(x, i);
        let r = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let along = r[0] * axis[0] + r[1] * axis[1] + r[2] * axis[2];
        let perp = [r[0] - along * axis[0], r[1] - along * axis[1], r[2] - along * axis[2]];
        acc += S::sqnorm(&perp) * mass[i];
    }
    acc
}

pub fn g_moi<S: Real>(x: &[S], x_t: &[f64], sel: &[usize], mass: &[f64], axis: &[f64; 3], target: f64, dt: f64) -> S {
    let rate = (moment_of_inertia(x, sel, mass, axis) - moment_of_inertia(x_t, sel, mass, axis)) / dt;
    (rate - target).square()
}

pub fn subset_energy<S: Real>(mesh: &TetMesh, mat: &MaterialParams, x: &[S], elems: &[usize]) -> S {
    let mut e = S::zero();
    for &i in elems {
        e += elasticity::element_energy(mesh, mat, i, x);
    }
    e
}

pub fn g_elastic<S: Real>(
    mesh: &TetMesh,
    mat: &MaterialParams,
    x: &[S],
    x_t: &[f64],
    elems: &[usize],
    target: f64,
    dt: f64,
) -> S {
    let rate = (subset_energy(mesh, mat, x, elems) - subset_energy(mesh, mat, x_t, elems)) / dt;
    (rate - target).square()
}

fn plane_basis(n: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = seed[0] * n[0] + seed[1] * n[1] + seed[2] * n[2];
    let e1 = [seed[0] - d * n[0], seed[1] - d * n[1], seed[2] - d * n[2]];
    let l = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    let e2 = [n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]];
    (e1, e2)
}

fn cross2<S: Real>(o: &[S; 2], a: &[S; 2], b: &[S; 2]) -> S {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Area of the convex hull of 2D points (monotone chain, decisions on
/// real parts, shoelace area). Fewer than three distinct points give 0.
pub fn hull_area<S: Real>(pts: &[[S; 2]]) -> S {
    let mut p: Vec<[S; 2]> = pts.to_vec();
    p.sort_by(|a, b| a[0].re().total_cmp(&b[0].re()).then(a[1].re().total_cmp(&b[1].re())));
    p.dedup_by(|a, b| a[0].re() == b[0].re() && a[1].re() == b[1].re());
    if p.len() < 3 {
        return S::zero();
    }
    let mut hull: Vec<[S; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[S; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for q in iter {
            while hull.len() >= start + 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], q).re() <= 0.0 {
                hull.pop();
            }
            hull.push(*q);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return S::zero();
    }
    let mut a = S::zero();
    for i in 0..hull.len() {
        let (u, v) = (&hull[i], &hull[(i + 1) % hull.len()]);
        a += u[0] * v[1] - v[0] * u[1];
    }
    a * 0.5
}

pub fn projected_area<S: Real>(x: &[S], sel: &[usize], normal: &[f64; 3]) -> S {
    let n = unit(normal).unwrap_or([0.0, 0.0, 1.0]);
    let (e1, e2) = plane_basis(&n);
    let pts: Vec<[S; 2]> = sel
        .iter()
        .map(|&i| {
            let p = vertex(x, i);
            [
                p[0] * e1[0] + p[1] * e1[1] + p[2] * e1[2],
                p[0] * e2[0] + p[1] * e2[1] + p[2] * e2[2],
            ]
        })
        .collect();
    hull_area(&pts)
}

pub fn g_projection<S: Real>(x: &[S], x_t: &[f64], sel: &[usize], normal: &[f64; 3], target: f64, dt: f64) -> S {
    let rate = (projected_area(x, sel, normal) - projected_area(x_t, sel, normal)) / dt;
    (rate - target).square()
}

/// `½ k ‖a‖²`.
pub fn r_energy<S: Real>(a: &[S], k: f64) -> S {
    S::sqnorm(a) * (0.5 * k)
}

/// `Σ (|ȧᵢ| − ȧ_max)²` over entries whose rate exceeds `ȧ_max`.
pub fn r_change<S: Real>(a: &[S], a_prev: &[f64], rate_max: f64, dt: f64) -> S {
    let mut acc = S::zero();
    for (ai, &p) in a.iter().zip(a_prev) {
        let rate = ((*ai - p) / dt).abs();
        if rate.re() > rate_max {
            acc += (rate - rate_max).square();
        }
    }
    acc
}

/// Evaluates the weighted targets and regularizers at `x_{t+1}`.
pub fn evaluate_terms<S: Real>(
    sim: &Simulator,
    state: &SimState,
    x_next: &[S],
    a: &[S],
    a_prev: &[f64],
    spec: &LossSpec,
) -> Result<S> {
    let dt = sim.step.dt;
    let mesh = &sim.mesh;
    let mass = &sim.mass;
    let mut l = S::zero();
    for t in &spec.targets {
        if t.weight() == 0.0 {
            continue;
        }
        let g = match t {
            Target::Position { selection, target, .. } => g_position(x_next, &selection.resolve(mesh)?, mass, target),
            Target::Velocity { selection, target, .. } => {
                g_velocity(x_next, &state.x, &selection.resolve(mesh)?, mass, target, dt)
            }
            Target::Acceleration { selection, target, .. } => {
                let prev = state.previous_positions(dt);
                g_acceleration(x_next, &state.x, &prev, &selection.resolve(mesh)?, mass, target, dt)
            }
            Target::Angular { selection, target, .. } => {
                g_angular(x_next, state, &selection.resolve(mesh)?, mass, target, dt)
            }
            Target::Moi { selection, axis, target, .. } => {
                g_moi(x_next, &state.x, &selection.resolve(mesh)?, mass, &unit(axis)?, *target, dt)
            }
            Target::Elastic { elements, target, .. } => {
                g_elastic(mesh, &sim.material, x_next, &state.x, &elements.resolve(mesh)?, *target, dt)
            }
            Target::Projection { selection, normal, target, .. } => {
                g_projection(x_next, &state.x, &selection.resolve(mesh)?, normal, *target, dt)
            }
        };
        l += g * t.weight();
    }
    if let Some(e) = &spec.energy {
        l += r_energy(a, e.k) * e.lambda;
    }
    if let Some(c) = &spec.change {
        if a_prev.len() != a.len() {
            return Err(Error::Shape("previous activations have the wrong length".into()));
        }
        l += r_change(a, a_prev, c.rate_max, dt) * c.lambda;
    }
    Ok(l)
}

/// Steps the simulation with `a` and evaluates the loss on the result, all
/// in the scalar type `S` (on a tape when `S` is a tape variable).
pub fn total_loss<S: Real>(
    sim: &Simulator,
    state: &SimState,
    a: &[S],
    a_prev: &[f64],
    spec: &LossSpec,
) -> Result<(S, StepOutput<S>)> {
    let out = sim.step(state, a)?;
    let l = evaluate_terms(sim, state, &out.x_next, a, a_prev, spec)?;
    Ok((l, out))
}
