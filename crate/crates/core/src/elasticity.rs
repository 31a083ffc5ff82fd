//! Linear tetrahedral FEM with the stable Neo-Hookean energy, lumped mass
//! and Rayleigh damping built on the rest-shape stiffness.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    elementwise, m3_inverse_f64, m3_mul_cst, m3_transpose, Csr, M3, V3,
};
use crate::real::Real;
use crate::scalar::PerturbStep;
use crate::tape::{self, Var};

/// Outward faces of a positively oriented tet, as local vertex indices.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Clone, Debug)]
pub struct TetMesh {
    pub rest: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub volumes: Vec<f64>,
    pub dm_inv: Vec<[[f64; 3]; 3]>,
    /// Boundary triangles, outward oriented.
    pub surface: Vec<[usize; 3]>,
    /// Sorted ids of vertices on the boundary.
    pub surface_vertices: Vec<usize>,
}

impl TetMesh {
    pub fn new(rest: Vec<[f64; 3]>, tets: Vec<[usize; 4]>) -> Result<Self> {
        if tets.is_empty() {
            return Err(Error::Mesh("mesh has no elements".into()));
        }
        let n = rest.len();
        let mut volumes = Vec::with_capacity(tets.len());
        let mut dm_inv = Vec::with_capacity(tets.len());
        for (e, t) in tets.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("element {e} references a vertex beyond {n}")));
            }
            let dm = shape_matrix(&rest, t);
            let vol = elementwise::det3(&dm) / 6.0;
            if !(vol > 0.0) {
                return Err(Error::Mesh(format!(
                    "element {e} has non-positive rest volume {vol:e}"
                )));
            }
            volumes.push(vol);
            dm_inv.push(m3_inverse_f64(&dm).expect("positive volume implies invertible"));
        }
        let surface = extract_surface(&tets);
        let mut surface_vertices: Vec<usize> = surface.iter().flatten().copied().collect();
        surface_vertices.sort_unstable();
        surface_vertices.dedup();
        Ok(TetMesh { rest, tets, volumes, dm_inv, surface, surface_vertices })
    }

    /// Reads the plain-text node/element format: a header line `N T`, then
    /// `N` lines `x y z`, then `T` lines `i j k l` with 0-based ids.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| Error::Mesh("empty mesh file".into()))?;
        let head: Vec<usize> = parse_fields(header, hl)?;
        if head.len() != 2 {
            return Err(Error::Mesh(format!("line {}: header must be `N T`", hl + 1)));
        }
        let (n, t) = (head[0], head[1]);
        let mut rest = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| Error::Mesh("missing vertex lines".into()))?;
            let v: Vec<f64> = parse_fields(l, ln)?;
            if v.len() != 3 {
                return Err(Error::Mesh(format!("line {}: expected 3 coordinates", ln + 1)));
            }
            rest.push([v[0], v[1], v[2]]);
        }
        let mut tets = Vec::with_capacity(t);
        for _ in 0..t {
            let (ln, l) = lines.next().ok_or_else(|| Error::Mesh("missing element lines".into()))?;
            let v: Vec<usize> = parse_fields(l, ln)?;
            if v.len() != 4 {
                return Err(Error::Mesh(format!("line {}: expected 4 vertex ids", ln + 1)));
            }
            tets.push([v[0], v[1], v[2], v[3]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Mesh(format!("line {}: trailing data after elements", ln + 1)));
        }
        TetMesh::new(rest, tets)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rest.len(), self.tets.len());
        for p in &self.rest {
            s.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
        }
        for t in &self.tets {
            s.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], t[3]));
        }
        s
    }

    pub fn num_vertices(&self) -> usize {
        self.rest.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn rest_flat(&self) -> Vec<f64> {
        self.rest.iter().flatten().copied().collect()
    }

    pub fn barycenter(&self, e: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &v in &self.tets[e] {
            for k in 0..3 {
                c[k] += 0.25 * self.rest[v][k];
            }
        }
        c
    }

    /// Elements sharing a face with each element.
    pub fn face_neighbors(&self) -> Vec<Vec<usize>> {
        let mut owners: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (e, t) in self.tets.iter().enumerate() {
            for f in TET_FACES {
                let mut key = [t[f[0]], t[f[1]], t[f[2]]];
                key.sort_unstable();
                owners.entry(key).or_default().push(e);
            }
        }
        let mut nb = vec![Vec::new(); self.tets.len()];
        for es in owners.values() {
            if es.len() == 2 {
                nb[es[0]].push(es[1]);
                nb[es[1]].push(es[0]);
            }
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }

    /// Barycentric coordinates of `p` in element `e`.
    pub fn barycentric(&self, e: usize, p: [f64; 3]) -> [f64; 4] {
        let t = &self.tets[e];
        let d = [
            p[0] - self.rest[t[0]][0],
            p[1] - self.rest[t[0]][1],
            p[2] - self.rest[t[0]][2],
        ];
        let inv = &self.dm_inv[e];
        let mut b = [0.0; 4];
        for i in 0..3 {
            b[i + 1] = inv[i][0] * d[0] + inv[i][1] * d[1] + inv[i][2] * d[2];
        }
        b[0] = 1.0 - b[1] - b[2] - b[3];
        b
    }

    /// Element containing `p` (with a small tolerance), if any.
    pub fn locate(&self, p: [f64; 3]) -> Option<usize> {
        (0..self.tets.len()).find(|&e| self.barycentric(e, p).iter().all(|&b| b >= -1e-9))
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, ln: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|f| f.parse::<T>().map_err(|_| Error::Mesh(format!("line {}: cannot parse `{f}`", ln + 1))))
        .collect()
}

fn shape_matrix(x: &[[f64; 3]], t: &[usize; 4]) -> [[f64; 3]; 3] {
    let mut dm = [[0.0; 3]; 3];
    for c in 0..3 {
        for r in 0..3 {
            dm[r][c] = x[t[c + 1]][r] - x[t[0]][r];
        }
    }
    dm
}

fn extract_surface(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut seen: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for t in tets {
        for f in TET_FACES {
            let tri = [t[f[0]], t[f[1]], t[f[2]]];
            let mut key = tri;
            key.sort_unstable();
            seen.entry(key).and_modify(|e| e.0 += 1).or_insert((1, tri));
        }
    }
    let mut surf: Vec<[usize; 3]> = seen.into_values().filter(|(c, _)| *c == 1).map(|(_, t)| t).collect();
    surf.sort_unstable();
    surf
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Lamé μ (Pa).
    pub mu: f64,
    /// Lamé λ (Pa).
    pub lambda: f64,
    /// Mass-proportional Rayleigh coefficient (1/s).
    #[serde(default)]
    pub alpha: f64,
    /// Stiffness-proportional Rayleigh coefficient (s).
    #[serde(default)]
    pub beta: f64,
    /// Density (kg/m³).
    pub density: f64,
}

impl MaterialParams {
    pub fn from_young(young: f64, poisson: f64, density: f64) -> Self {
        let mu = young / (2.0 * (1.0 + poisson));
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        MaterialParams { mu, lambda, alpha: 0.0, beta: 0.0, density }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && self.lambda >= 0.0
            && self.density > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid material parameters {self:?}")))
        }
    }
}

pub fn vertex<S: Real>(x: &[S], i: usize) -> V3<S> {
    [x[3 * i], x[3 * i + 1], x[3 * i + 2]]
}

/// `F = Ds(x) Dm⁻¹`.
pub fn deformation_gradient<S: Real>(mesh: &TetMesh, e: usize, x: &[S]) -> M3<S> {
    deformation_gradient_local(mesh, e, &element_positions(mesh, e, x))
}

pub fn element_positions<S: Real>(mesh: &TetMesh, e: usize, x: &[S]) -> [V3<S>; 4] {
    let t = &mesh.tets[e];
    [vertex(x, t[0]), vertex(x, t[1]), vertex(x, t[2]), vertex(x, t[3])]
}

pub fn deformation_gradient_local<S: Real>(mesh: &TetMesh, e: usize, xe: &[V3<S>; 4]) -> M3<S> {
    let mut ds = [[S::zero(); 3]; 3];
    for c in 0..3 {
        for r in 0..3 {
            ds[r][c] = xe[c + 1][r] - xe[0][r];
        }
    }
    m3_mul_cst(&ds, &mesh.dm_inv[e])
}

/// `Ψ = μ/2 (I_C − 3) − μ (J − 1) + λ/2 (J − 1)²`.
pub fn neo_hookean_energy<S: Real>(f: &M3<S>, mu: f64, lambda: f64) -> S {
    let flat: Vec<S> = f.iter().flatten().copied().collect();
    let ic = S::trace_gram(&flat);
    let jm1 = S::det3(f) - 1.0;
    (ic - 3.0) * (0.5 * mu) - jm1 * mu + jm1 * jm1 * (0.5 * lambda)
}

pub fn element_energy<S: Real>(mesh: &TetMesh, mat: &MaterialParams, e: usize, x: &[S]) -> S {
    let f = deformation_gradient(mesh, e, x);
    neo_hookean_energy(&f, mat.mu, mat.lambda) * mesh.volumes[e]
}

/// Total elastic energy `Σ_e V_e Ψ_e` over all elements.
pub fn elastic_energy<S: Real>(mesh: &TetMesh, mat: &MaterialParams, x: &[S]) -> S {
    let mut acc = S::zero();
    for e in 0..mesh.num_tets() {
        acc += element_energy(mesh, mat, e, x);
    }
    acc
}

/// Forces on the four vertices of element `e`.
pub fn element_forces<S: Real>(mesh: &TetMesh, mat: &MaterialParams, e: usize, x: &[S]) -> [V3<S>; 4] {
    element_forces_local(mesh, mat, e, &element_positions(mesh, e, x))
}

pub fn element_forces_local<S: Real>(
    mesh: &TetMesh,
    mat: &MaterialParams,
    e: usize,
    xe: &[V3<S>; 4],
) -> [V3<S>; 4] {
    let f = deformation_gradient_local(mesh, e, xe);
    let p = S::neo_hookean_piola(&f, mat.mu, mat.lambda);
    let dm_inv_t = m3_transpose(&mesh.dm_inv[e]);
    let h = m3_mul_cst(&p, &dm_inv_t);
    let v = -mesh.volumes[e];
    let mut out = [[S::zero(); 3]; 4];
    for c in 0..3 {
        for r in 0..3 {
            let fc = h[r][c] * v;
            out[c + 1][r] = fc;
            out[0][r] -= fc;
        }
    }
    out
}

/// `f_int = −∂E/∂x`, flattened to `3N`.
pub fn elastic_forces<S: Real>(mesh: &TetMesh, mat: &MaterialParams, x: &[S]) -> Vec<S> {
    let mut f = vec![S::zero(); x.len()];
    for e in 0..mesh.num_tets() {
        let fe = element_forces(mesh, mat, e, x);
        for (l, &v) in mesh.tets[e].iter().enumerate() {
            for k in 0..3 {
                f[3 * v + k] += fe[l][k];
            }
        }
    }
    f
}

/// Lumped vertex masses: a quarter of each incident element's mass.
pub fn lumped_mass(mesh: &TetMesh, density: f64) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (e, t) in mesh.tets.iter().enumerate() {
        for &v in t {
            m[v] += 0.25 * density * mesh.volumes[e];
        }
    }
    m
}

/// Rest-shape stiffness `K₀ = ∂²E/∂x²` at `x = X`. Each 12×12 element block
/// is the complex-step/reverse-mode Hessian of the element energy.
pub fn rest_stiffness(mesh: &TetMesh, mat: &MaterialParams) -> Result<Csr> {
    let n = 3 * mesh.num_vertices();
    let mut trip = Vec::with_capacity(144 * mesh.num_tets());
    let rest = mesh.rest_flat();
    for (e, t) in mesh.tets.iter().enumerate() {
        let local: Vec<f64> = t.iter().flat_map(|&v| mesh.rest[v]).collect();
        let energy = |xe: &[Var]| -> Result<Var> {
            let mut x: Vec<Var> = rest.iter().map(|&v| Var::cst(v)).collect();
            for (l, &v) in t.iter().enumerate() {
                for k in 0..3 {
                    x[3 * v + k] = xe[3 * l + k];
                }
            }
            Ok(element_energy(mesh, mat, e, &x))
        };
        let h = tape::hessian(&energy, &local, PerturbStep::DEFAULT, 1)?;
        for a in 0..12 {
            for b in 0..12 {
                let (va, vb) = (t[a / 3], t[b / 3]);
                trip.push((3 * va + a % 3, 3 * vb + b % 3, h.hessian[(a, b)]));
            }
        }
    }
    Ok(Csr::from_triplets(n, n, trip).symmetrize())
}

/// Rayleigh damping force `−(αM + βK₀) v`, resisting motion.
pub fn damping_force<S: Real>(k0: &Arc<Csr>, mass: &[f64], mat: &MaterialParams, v: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); v.len()];
    if mat.alpha != 0.0 {
        for (i, o) in out.iter_mut().enumerate() {
            *o -= v[i] * (mat.alpha * mass[i / 3]);
        }
    }
    if mat.beta != 0.0 {
        let kv = S::const_matvec(k0, v);
        for (o, k) in out.iter_mut().zip(kv) {
            *o -= k * mat.beta;
        }
    }
    out
}
