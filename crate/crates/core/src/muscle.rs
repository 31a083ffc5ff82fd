//! Polyline muscle fibers and their activation-driven nodal forces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elasticity::{deformation_gradient_local, element_positions, TetMesh, TET_FACES};
use crate::error::{Error, Result};
use crate::linalg::{m3_mul, m3_transpose, m3_zero, polar_rotation, v3_cross, v3_sub, M3, V3};
use crate::real::Real;

/// Fiber as given in a scene file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub points: Vec<[f64; 3]>,
    /// Drive every segment of the fiber with one activation.
    #[serde(default)]
    pub shared_activation: bool,
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub fiber: usize,
    /// Reference unit direction.
    pub dir: [f64; 3],
    pub midpoint: [f64; 3],
    /// Element containing the midpoint.
    pub element: usize,
    /// Index into the activation vector.
    pub activation: usize,
}

#[derive(Clone, Debug)]
pub struct MuscleSystem {
    pub segments: Vec<Segment>,
    pub num_activations: usize,
    pub width: f64,
    /// Per element, `(segment, w_ij)` for weights above the truncation.
    pub weights: Vec<Vec<(usize, f64)>>,
    /// Per element, `(activation k, Σ_j w_ij d_j⊗d_j)` over segments driven by `k`.
    basis: Vec<Vec<(usize, [[f64; 3]; 3])>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest paths over the element face-adjacency graph, edges weighted by
/// barycenter distance. Unreachable elements get `+∞`.
pub fn element_geodesics(mesh: &TetMesh, neighbors: &[Vec<usize>], source: usize) -> Vec<f64> {
    let bary: Vec<[f64; 3]> = (0..mesh.num_tets()).map(|e| mesh.barycenter(e)).collect();
    let mut dist = vec![f64::INFINITY; mesh.num_tets()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Item(0.0, source));
    while let Some(Item(d, e)) = heap.pop() {
        if d > dist[e] {
            continue;
        }
        for &n in &neighbors[e] {
            let w = v3_sub(&bary[e], &bary[n]);
            let nd = d + (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Item(nd, n));
            }
        }
    }
    dist
}

/// `w = exp(−g²/c²)`.
pub fn gaussian_weight(g: f64, c: f64) -> f64 {
    (-(g * g) / (c * c)).exp()
}

/// `E_j = (d_j ⊗ d_j) a_j`.
pub fn segment_stress<S: Real>(d: &[f64; 3], a: S) -> M3<S> {
    let mut e = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            e[i][j] = a * (d[i] * d[j]);
        }
    }
    e
}

/// Rotation factor of the polar decomposition `F = R S`.
pub fn element_rotation<S: Real>(f: &M3<S>) -> Result<M3<S>> {
    polar_rotation(f)
}

impl MuscleSystem {
    /// A system without fibers.
    pub fn empty(mesh: &TetMesh) -> Self {
        MuscleSystem {
            segments: Vec::new(),
            num_activations: 0,
            width: 1.0,
            weights: vec![Vec::new(); mesh.num_tets()],
            basis: vec![Vec::new(); mesh.num_tets()],
        }
    }

    pub fn new(mesh: &TetMesh, fibers: &[FiberSpec], width: f64, truncation: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Muscle(format!("Gaussian width must be positive, got {width}")));
        }
        if !(0.0..1.0).contains(&truncation) {
            return Err(Error::Muscle(format!("weight truncation must lie in [0, 1), got {truncation}")));
        }
        let mut segments = Vec::new();
        let mut next_act = 0;
        for (fi, fiber) in fibers.iter().enumerate() {
            if fiber.points.len() < 2 {
                return Err(Error::Muscle(format!("fiber {fi} needs at least two points")));
            }
            let shared = next_act;
            for (si, w) in fiber.points.windows(2).enumerate() {
                let d = v3_sub(&w[1], &w[0]);
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if !(len > 0.0) {
                    return Err(Error::Muscle(format!("fiber {fi} segment {si} has zero length")));
                }
                let mid = [
                    0.5 * (w[0][0] + w[1][0]),
                    0.5 * (w[0][1] + w[1][1]),
                    0.5 * (w[0][2] + w[1][2]),
                ];
                let element = mesh.locate(mid).ok_or_else(|| {
                    Error::Muscle(format!("fiber {fi} segment {si}: midpoint {mid:?} lies outside the mesh"))
                })?;
                let activation = if fiber.shared_activation {
                    shared
                } else {
                    next_act + si
                };
                segments.push(Segment {
                    fiber: fi,
                    dir: [d[0] / len, d[1] / len, d[2] / len],
                    midpoint: mid,
                    element,
                    activation,
                });
            }
            next_act += if fiber.shared_activation { 1 } else { fiber.points.len() - 1 };
        }

        let nb = mesh.face_neighbors();
        let mut weights = vec![Vec::new(); mesh.num_tets()];
        for (j, s) in segments.iter().enumerate() {
            let g = element_geodesics(mesh, &nb, s.element);
            for (e, &ge) in g.iter().enumerate() {
                let w = gaussian_weight(ge, width);
                if w >= truncation && w > 0.0 {
                    weights[e].push((j, w));
                }
            }
        }
        let mut basis = vec![Vec::new(); mesh.num_tets()];
        for (e, we) in weights.iter().enumerate() {
            let mut acc: Vec<(usize, [[f64; 3]; 3])> = Vec::new();
            for &(j, w) in we {
                let s = &segments[j];
                let b = segment_stress(&s.dir, w);
                match acc.iter_mut().find(|(k, _)| *k == s.activation) {
                    Some((_, m)) => {
                        for r in 0..3 {
                            for c in 0..3 {
                                m[r][c] += b[r][c];
                            }
                        }
                    }
                    None => acc.push((s.activation, b)),
                }
            }
            acc.sort_by_key(|(k, _)| *k);
            basis[e] = acc;
        }
        Ok(MuscleSystem { segments, num_activations: next_act, width, weights, basis })
    }

    /// `Σ_j w_ij E_j` in reference coordinates.
    pub fn reference_stress<S: Real>(&self, e: usize, a: &[S]) -> M3<S> {
        let mut s = m3_zero();
        for (k, b) in &self.basis[e] {
            for r in 0..3 {
                for c in 0..3 {
                    s[r][c] += a[*k] * b[r][c];
                }
            }
        }
        s
    }

    pub fn is_active(&self, e: usize) -> bool {
        !self.basis[e].is_empty()
    }

    /// Nodal forces of element `e`: `σ = R (Σ w E) Rᵀ`, and each face's
    /// traction `σ ñ_f` pulls its three vertices inward, so positive
    /// activation contracts along the fiber.
    pub fn element_forces_local<S: Real>(
        &self,
        mesh: &TetMesh,
        e: usize,
        xe: &[V3<S>; 4],
        a: &[S],
    ) -> Result<[V3<S>; 4]> {
        let mut out = [[S::zero(); 3]; 4];
        if !self.is_active(e) {
            return Ok(out);
        }
        let f = deformation_gradient_local(mesh, e, xe);
        let r = element_rotation(&f)?;
        let sigma = m3_mul(&m3_mul(&r, &self.reference_stress(e, a)), &m3_transpose(&r));
        for face in TET_FACES {
            let u = v3_sub(&xe[face[1]], &xe[face[0]]);
            let v = v3_sub(&xe[face[2]], &xe[face[0]]);
            let n = v3_cross(&u, &v);
            for i in 0..3 {
                let t = (sigma[i][0] * n[0] + sigma[i][1] * n[1] + sigma[i][2] * n[2]) * (1.0 / 6.0);
                for &l in &face {
                    out[l][i] -= t;
                }
            }
        }
        Ok(out)
    }

    /// `f_m = A(x) a`, flattened to `3N`.
    pub fn forces<S: Real>(&self, mesh: &TetMesh, x: &[S], a: &[S]) -> Result<Vec<S>> {
        if a.len() != self.num_activations {
            return Err(Error::Shape(format!(
                "{} activations given, muscle system has {}",
                a.len(),
                self.num_activations
            )));
        }
        let mut f = vec![S::zero(); x.len()];
        for e in 0..mesh.num_tets() {
            if !self.is_active(e) {
                continue;
            }
            let fe = self.element_forces_local(mesh, e, &element_positions(mesh, e, x), a)?;
            for (l, &v) in mesh.tets[e].iter().enumerate() {
                for k in 0..3 {
                    f[3 * v + k] += fe[l][k];
                }
            }
        }
        Ok(f)
    }

    /// `A(x)`, column `k` being the force field of unit activation `k`.
    pub fn activation_matrix(&self, mesh: &TetMesh, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.num_activations;
        let mut a = DMatrix::zeros(x.len(), m);
        let mut unit = vec![0.0; m];
        for k in 0..m {
            unit[k] = 1.0;
            let col = self.forces(mesh, x, &unit)?;
            unit[k] = 0.0;
            for (i, v) in col.into_iter().enumerate() {
                a[(i, k)] = v;
            }
        }
        Ok(a)
    }
}
