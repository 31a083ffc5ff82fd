//! Small structured tetrahedral meshes.

use crate::elasticity::TetMesh;
use crate::error::Result;

/// Right-angled corner tet with legs of length `l` along the axes.
pub fn corner_tet(origin: [f64; 3], l: f64) -> Result<TetMesh> {
    let o = origin;
    TetMesh::new(
        vec![
            o,
            [o[0] + l, o[1], o[2]],
            [o[0], o[1] + l, o[2]],
            [o[0], o[1], o[2] + l],
        ],
        vec![[0, 1, 2, 3]],
    )
}

/// Box of `n[0]×n[1]×n[2]` cubes of size `h`, each split into the six Kuhn
/// tets around its main diagonal (conforming across cubes).
pub fn box_mesh(n: [usize; 3], h: [f64; 3], origin: [f64; 3]) -> Result<TetMesh> {
    let id = |i: usize, j: usize, k: usize| (i * (n[1] + 1) + j) * (n[2] + 1) + k;
    let mut rest = Vec::new();
    for i in 0..=n[0] {
        for j in 0..=n[1] {
            for k in 0..=n[2] {
                rest.push([
                    origin[0] + i as f64 * h[0],
                    origin[1] + j as f64 * h[1],
                    origin[2] + k as f64 * h[2],
                ]);
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                for p in perms {
                    let mut c = [0usize; 3];
                    let mut t = [id(i, j, k); 4];
                    for (s, &axis) in p.iter().enumerate() {
                        c[axis] = 1;
                        t[s + 1] = id(i + c[0], j + c[1], k + c[2]);
                    }
                    if orient(&rest, &t) < 0.0 {
                        t.swap(1, 2);
                    }
                    tets.push(t);
                }
            }
        }
    }
    TetMesh::new(rest, tets)
}

fn orient(x: &[[f64; 3]], t: &[usize; 4]) -> f64 {
    let d = |a: usize| [x[t[a]][0] - x[t[0]][0], x[t[a]][1] - x[t[0]][1], x[t[a]][2] - x[t[0]][2]];
    let (a, b, c) = (d(1), d(2), d(3));
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_volume_and_closed_surface() {
        let m = box_mesh([3, 2, 1], [0.1, 0.1, 0.2], [0.0; 3]).unwrap();
        assert_eq!(m.num_tets(), 36);
        let v: f64 = m.volumes.iter().sum();
        assert!((v - 0.3 * 0.2 * 0.2).abs() < 1e-15);
        // closed surface: every edge shared by exactly two triangles, and
        // V − E + F = 2
        let mut edges = std::collections::HashMap::new();
        for t in &m.surface {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
        let chi = m.surface_vertices.len() as i64 - edges.len() as i64 + m.surface.len() as i64;
        assert_eq!(chi, 2);
    }
}
