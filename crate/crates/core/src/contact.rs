//! Log-barrier contact of surface vertices against static colliders, with
//! lagged, mollified Coulomb friction and a closed-form feasible step cap.

use serde::{Deserialize, Serialize};

use crate::elasticity::vertex;
use crate::error::{Error, Result};
use crate::linalg::{v3_dot, v3_dot_f, v3_norm, v3_scale, v3_sub, V3};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Collider {
    /// Points with `n·p ≥ offset` are outside.
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
        #[serde(default)]
        friction: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        friction: f64,
    },
    /// Static triangle soup; distance is unsigned.
    Triangles {
        vertices: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        #[serde(default)]
        friction: f64,
    },
}

impl Collider {
    pub fn ground(height: f64, friction: f64) -> Self {
        Collider::HalfSpace { normal: [0.0, 0.0, 1.0], offset: height, friction }
    }

    pub fn friction(&self) -> f64 {
        match self {
            Collider::HalfSpace { friction, .. }
            | Collider::Sphere { friction, .. }
            | Collider::Triangles { friction, .. } => *friction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.friction() >= 0.0) {
            return Err(Error::Config("collider friction must be non-negative".into()));
        }
        match self {
            Collider::HalfSpace { normal, .. } => {
                let n = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("half-space normal has length {n}, expected 1")));
                }
            }
            Collider::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("sphere radius must be positive".into()));
                }
            }
            Collider::Triangles { vertices, faces, .. } => {
                if faces.iter().flatten().any(|&i| i >= vertices.len()) {
                    return Err(Error::Config("collider triangle references a missing vertex".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierParams {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_dhat")]
    pub dhat: f64,
    #[serde(default = "default_eps_v")]
    pub eps_v: f64,
}

fn default_kappa() -> f64 {
    1e4
}
fn default_dhat() -> f64 {
    1e-3
}
fn default_eps_v() -> f64 {
    1e-3
}

impl Default for BarrierParams {
    fn default() -> Self {
        BarrierParams { kappa: default_kappa(), dhat: default_dhat(), eps_v: default_eps_v() }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if self.kappa > 0.0 && self.dhat > 0.0 && self.eps_v > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid barrier parameters {self:?}")))
        }
    }
}

/// Signed distance for half-spaces and spheres, unsigned for triangle sets.
pub fn distance<S: Real>(p: &V3<S>, c: &Collider) -> S {
    distance_and_normal(p, c).0
}

/// Distance and its gradient with respect to `p`.
pub fn distance_and_normal<S: Real>(p: &V3<S>, c: &Collider) -> (S, V3<S>) {
    match c {
        Collider::HalfSpace { normal, offset, .. } => {
            (v3_dot_f(p, normal) - *offset, [S::cst(normal[0]), S::cst(normal[1]), S::cst(normal[2])])
        }
        Collider::Sphere { center, radius, .. } => {
            let w = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let r = v3_norm(&w);
            (r - *radius, v3_scale(&w, r.recip()))
        }
        Collider::Triangles { vertices, faces, .. } => {
            let mut best: Option<(S, V3<S>)> = None;
            for f in faces {
                let q = closest_on_triangle(p, &vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
                let w = v3_sub(p, &q);
                let d2 = v3_dot(&w, &w);
                if best.as_ref().map_or(true, |(b, _)| d2.re() < b.re()) {
                    best = Some((d2, w));
                }
            }
            match best {
                Some((d2, w)) => {
                    let d = d2.sqrt();
                    (d, v3_scale(&w, d.recip()))
                }
                None => (S::cst(f64::INFINITY), [S::zero(); 3]),
            }
        }
    }
}

fn closest_on_triangle<S: Real>(p: &V3<S>, a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> V3<S> {
    let sub = |u: &[f64; 3], v: &[f64; 3]| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let rel = |o: &[f64; 3]| [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
    let lerp = |o: &[f64; 3], dir: [f64; 3], t: S| {
        [t * dir[0] + o[0], t * dir[1] + o[1], t * dir[2] + o[2]]
    };
    let cst = |o: &[f64; 3]| [S::cst(o[0]), S::cst(o[1]), S::cst(o[2])];
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = rel(a);
    let d1 = v3_dot_f(&ap, &ab);
    let d2 = v3_dot_f(&ap, &ac);
    if d1.re() <= 0.0 && d2.re() <= 0.0 {
        return cst(a);
    }
    let bp = rel(b);
    let d3 = v3_dot_f(&bp, &ab);
    let d4 = v3_dot_f(&bp, &ac);
    if d3.re() >= 0.0 && d4.re() <= d3.re() {
        return cst(b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc.re() <= 0.0 && d1.re() >= 0.0 && d3.re() <= 0.0 {
        return lerp(a, ab, d1 / (d1 - d3));
    }
    let cp = rel(c);
    let d5 = v3_dot_f(&cp, &ab);
    let d6 = v3_dot_f(&cp, &ac);
    if d6.re() >= 0.0 && d5.re() <= d6.re() {
        return cst(c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb.re() <= 0.0 && d2.re() >= 0.0 && d6.re() <= 0.0 {
        return lerp(a, ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va.re() <= 0.0 && (d4 - d3).re() >= 0.0 && (d5 - d6).re() >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return lerp(b, sub(c, b), t);
    }
    let inv = (va + vb + vc).recip();
    let v = vb * inv;
    let w = vc * inv;
    [
        v * ab[0] + w * ac[0] + a[0],
        v * ab[1] + w * ac[1] + a[1],
        v * ab[2] + w * ac[2] + a[2],
    ]
}

/// `B(d) = −κ (d − d̂)² ln(d/d̂)` for `d < d̂`, zero beyond.
pub fn barrier<S: Real>(d: S, prm: &BarrierParams) -> Result<S> {
    check_feasible(d)?;
    if d.re() >= prm.dhat {
        return Ok(S::zero());
    }
    let t = d - prm.dhat;
    Ok(-(t * t) * (d / prm.dhat).ln() * prm.kappa)
}

/// `∂B/∂d`, non-positive inside the active band.
pub fn barrier_derivative<S: Real>(d: S, prm: &BarrierParams) -> Result<S> {
    check_feasible(d)?;
    if d.re() >= prm.dhat {
        return Ok(S::zero());
    }
    let t = d - prm.dhat;
    Ok(-(t * (d / prm.dhat).ln() * 2.0 + t * t / d) * prm.kappa)
}

/// `∂²B/∂d²`.
pub fn barrier_second_derivative(d: f64, prm: &BarrierParams) -> Result<f64> {
    check_feasible(d)?;
    if d >= prm.dhat {
        return Ok(0.0);
    }
    let t = d - prm.dhat;
    Ok(-prm.kappa * (2.0 * (d / prm.dhat).ln() + 4.0 * t / d - t * t / (d * d)))
}

fn check_feasible<S: Real>(d: S) -> Result<()> {
    if d.re() > 0.0 {
        Ok(())
    } else {
        Err(Error::Feasibility(format!("contact distance {} is not positive", d.re())))
    }
}

/// Sum of barrier energies over surface-vertex/collider pairs.
pub fn barrier_energy<S: Real>(
    surface: &[usize],
    colliders: &[Collider],
    prm: &BarrierParams,
    x: &[S],
) -> Result<S> {
    let mut e = S::zero();
    for &v in surface {
        let p = vertex(x, v);
        for c in colliders {
            e += barrier(distance(&p, c), prm)?;
        }
    }
    Ok(e)
}

/// Barrier force on a single point, `−B'(d) ∇d` summed over colliders.
pub fn vertex_contact_force<S: Real>(p: &V3<S>, colliders: &[Collider], prm: &BarrierParams) -> Result<V3<S>> {
    let mut f = [S::zero(); 3];
    for c in colliders {
        let (d, n) = distance_and_normal(p, c);
        check_feasible(d)?;
        if d.re() < prm.dhat {
            let g = barrier_derivative(d, prm)?;
            for k in 0..3 {
                f[k] -= g * n[k];
            }
        }
    }
    Ok(f)
}

pub fn contact_forces<S: Real>(
    surface: &[usize],
    colliders: &[Collider],
    prm: &BarrierParams,
    x: &[S],
) -> Result<Vec<S>> {
    let mut f = vec![S::zero(); x.len()];
    for &v in surface {
        let fv = vertex_contact_force(&vertex(x, v), colliders, prm)?;
        for k in 0..3 {
            f[3 * v + k] += fv[k];
        }
    }
    Ok(f)
}

/// Lagged normal-force data of one active vertex/collider pair.
#[derive(Clone, Copy, Debug)]
pub struct FrictionContact<S> {
    pub vertex: usize,
    pub collider: usize,
    /// Normal force magnitude `−B'(d)`.
    pub lambda: S,
    pub normal: V3<S>,
}

#[derive(Clone, Debug)]
pub struct FrictionState<S> {
    pub contacts: Vec<FrictionContact<S>>,
}

impl<S> Default for FrictionState<S> {
    fn default() -> Self {
        FrictionState { contacts: Vec::new() }
    }
}

impl<S: Real> FrictionState<S> {
    pub fn re(&self) -> FrictionState<f64> {
        FrictionState {
            contacts: self
                .contacts
                .iter()
                .map(|c| FrictionContact {
                    vertex: c.vertex,
                    collider: c.collider,
                    lambda: c.lambda.re(),
                    normal: [c.normal[0].re(), c.normal[1].re(), c.normal[2].re()],
                })
                .collect(),
        }
    }
}

/// Normal force magnitude and contact normal for one point and collider, if
/// the pair is active and frictional.
pub fn friction_contact_at<S: Real>(p: &V3<S>, c: &Collider, prm: &BarrierParams) -> Result<Option<(S, V3<S>)>> {
    if c.friction() == 0.0 {
        return Ok(None);
    }
    let (d, n) = distance_and_normal(p, c);
    check_feasible(d)?;
    if d.re() >= prm.dhat {
        return Ok(None);
    }
    Ok(Some((-barrier_derivative(d, prm)?, n)))
}

/// Normal forces and frames at `x`, to be held fixed while friction is
/// evaluated at later trial positions.
pub fn friction_state<S: Real>(
    surface: &[usize],
    colliders: &[Collider],
    prm: &BarrierParams,
    x: &[S],
) -> Result<FrictionState<S>> {
    let mut contacts = Vec::new();
    for &v in surface {
        let p = vertex(x, v);
        for (ci, c) in colliders.iter().enumerate() {
            if let Some((lambda, normal)) = friction_contact_at(&p, c, prm)? {
                contacts.push(FrictionContact { vertex: v, collider: ci, lambda, normal });
            }
        }
    }
    Ok(FrictionState { contacts })
}

/// Friction force of one contact given the tangential-slip input `u`
/// (velocity over the step): `−μ λ f₁(‖u_T‖) u_T/‖u_T‖`.
pub fn friction_force_single<S: Real>(mu: f64, lambda: S, normal: &V3<S>, u: &V3<S>, eps_v: f64) -> V3<S> {
    let un = v3_dot(u, normal);
    let ut = [u[0] - normal[0] * un, u[1] - normal[1] * un, u[2] - normal[2] * un];
    // f₁(s)/s, with s dropped at exactly zero real slip where it only
    // enters at second order
    let still = ut.iter().all(|c| c.re() == 0.0);
    let s2 = v3_dot(&ut, &ut);
    let coef = if still {
        S::cst(2.0 / eps_v)
    } else {
        let s = s2.sqrt();
        if s.re() < eps_v {
            (-s + 2.0 * eps_v) / (eps_v * eps_v)
        } else {
            s.recip()
        }
    };
    let m = -(lambda * coef) * mu;
    v3_scale(&ut, m)
}

/// Friction forces at `x` with slip velocity `(x − x_t)/Δt`.
pub fn friction_forces<S: Real>(
    state: &FrictionState<S>,
    colliders: &[Collider],
    prm: &BarrierParams,
    x: &[S],
    x_t: &[f64],
    dt: f64,
) -> Vec<S> {
    let mut f = vec![S::zero(); x.len()];
    for c in &state.contacts {
        let v = c.vertex;
        let p = vertex(x, v);
        let u = [(p[0] - x_t[3 * v]) / dt, (p[1] - x_t[3 * v + 1]) / dt, (p[2] - x_t[3 * v + 2]) / dt];
        let fv = friction_force_single(colliders[c.collider].friction(), c.lambda, &c.normal, &u, prm.eps_v);
        for k in 0..3 {
            f[3 * v + k] += fv[k];
        }
    }
    f
}

/// `0.9 · sup{α : every surface vertex stays strictly outside every collider
/// along x + αΔx}`, capped at 1.
pub fn max_feasible_step(surface: &[usize], colliders: &[Collider], x: &[f64], dx: &[f64]) -> Result<f64> {
    let mut sup = f64::INFINITY;
    for &v in surface {
        let p = vertex(x, v);
        let q = vertex(dx, v);
        for c in colliders {
            let d = distance(&p, c);
            if !(d > 0.0) {
                return Err(Error::Feasibility(format!("vertex {v} starts at distance {d}")));
            }
            if let Some(a) = crossing(&p, &q, c) {
                sup = sup.min(a);
            }
        }
    }
    Ok((0.9 * sup).min(1.0))
}

fn crossing(p: &[f64; 3], q: &[f64; 3], c: &Collider) -> Option<f64> {
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    match c {
        Collider::HalfSpace { normal, offset, .. } => {
            let rate = dot(normal, q);
            (rate < 0.0).then(|| (dot(normal, p) - offset) / -rate)
        }
        Collider::Sphere { center, radius, .. } => {
            let w = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let a = dot(q, q);
            let b = dot(&w, q);
            let cc = dot(&w, &w) - radius * radius;
            if a == 0.0 || b >= 0.0 {
                return None;
            }
            let disc = b * b - a * cc;
            if disc < 0.0 {
                return None;
            }
            // smaller root of a t² + 2b t + cc, written to avoid cancellation
            Some(cc / (-b + disc.sqrt()))
        }
        Collider::Triangles { vertices, faces, .. } => faces
            .iter()
            .filter_map(|f| ray_triangle(p, q, &vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
            .reduce(f64::min),
    }
}

fn ray_triangle(p: &[f64; 3], q: &[f64; 3], a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<f64> {
    let sub = |u: &[f64; 3], v: &[f64; 3]| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let cross = |u: &[f64; 3], v: &[f64; 3]| {
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    };
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let pv = cross(q, &e2);
    let det = dot(&e1, &pv);
    let scale = dot(q, q).sqrt() * dot(&e1, &e1).sqrt() * dot(&e2, &e2).sqrt();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let tv = sub(p, a);
    let u = dot(&tv, &pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = cross(&tv, &e1);
    let v = dot(q, &qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(&e2, &qv) * inv;
    (t > 0.0).then_some(t)
}
