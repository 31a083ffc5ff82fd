//! Single-node vector and matrix operations with closed-form complex adjoints.

use std::sync::Arc;

use super::{with_tape, FatRule, Var, CONST_IDX};
use crate::error::{Error, Result};
use crate::linalg::{elementwise, m3_add, m3_cofactor, m3_cofactor_dir, m3_frob_dot, m3_scale, Csr, Factorization, M3};
use crate::scalar::CScalar;

const COND_LIMIT: f64 = 1e12;

fn ids(xs: &[Var]) -> Vec<u32> {
    xs.iter().map(|v| v.raw()).collect()
}

fn vals(xs: &[Var]) -> Vec<CScalar> {
    xs.iter().map(|v| v.value()).collect()
}

fn all_const(xs: &[Var]) -> bool {
    xs.iter().all(|v| v.is_constant())
}

fn emit(rule: Box<dyn FatRule>, outputs: &[CScalar]) -> Vec<Var> {
    with_tape(|t| t.push_fat(rule, outputs))
}

fn consts(outputs: &[CScalar]) -> Vec<Var> {
    outputs.iter().map(|&v| Var::constant(v)).collect()
}

fn acc(adj: &mut [CScalar], id: u32, g: CScalar) {
    if id != CONST_IDX {
        adj[id as usize] += g;
    }
}

struct Dot {
    x: Vec<u32>,
    y: Vec<u32>,
    xv: Vec<CScalar>,
    yv: Vec<CScalar>,
}

impl FatRule for Dot {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let g = out[0];
        for i in 0..self.x.len() {
            acc(adj, self.x[i], g * self.yv[i]);
            acc(adj, self.y[i], g * self.xv[i]);
        }
    }
}

pub(super) fn dot(x: &[Var], y: &[Var]) -> Var {
    assert_eq!(x.len(), y.len(), "dot of unequal lengths");
    let xv = vals(x);
    let yv = vals(y);
    let z = elementwise::dot(&xv, &yv);
    if all_const(x) && all_const(y) {
        return Var::constant(z);
    }
    emit(Box::new(Dot { x: ids(x), y: ids(y), xv, yv }), &[z])[0]
}

/// `z = Σ xᵢ²` with `x̄ = 2 z̄ x`; shared by the squared norm and `tr(XᵀX)`.
struct SquaredSum {
    x: Vec<u32>,
    xv: Vec<CScalar>,
}

impl FatRule for SquaredSum {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let g2 = out[0] * 2.0;
        for (id, v) in self.x.iter().zip(&self.xv) {
            acc(adj, *id, g2 * *v);
        }
    }
}

pub(super) fn sqnorm(x: &[Var]) -> Var {
    let xv = vals(x);
    let z = elementwise::sqnorm(&xv);
    if all_const(x) {
        return Var::constant(z);
    }
    emit(Box::new(SquaredSum { x: ids(x), xv }), &[z])[0]
}

pub(super) fn trace_gram(x: &[Var]) -> Var {
    sqnorm(x)
}

/// `z = det X` with `X̄ = z̄ cof(X)`; the cofactor form stays defined for
/// singular `X` and equals `z̄ z X⁻ᵀ` otherwise.
struct Det3 {
    x: [[u32; 3]; 3],
    cof: M3<CScalar>,
}

impl FatRule for Det3 {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        for i in 0..3 {
            for j in 0..3 {
                acc(adj, self.x[i][j], out[0] * self.cof[i][j]);
            }
        }
    }
}

fn m3_ids(m: &M3<Var>) -> [[u32; 3]; 3] {
    let mut out = [[CONST_IDX; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j].raw();
        }
    }
    out
}

fn m3_vals(m: &M3<Var>) -> M3<CScalar> {
    let mut out = [[CScalar::ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j].value();
        }
    }
    out
}

pub(super) fn det3(m: &M3<Var>) -> Var {
    let mv = m3_vals(m);
    let z = elementwise::det3(&mv);
    if m.iter().flatten().all(|v| v.is_constant()) {
        return Var::constant(z);
    }
    emit(Box::new(Det3 { x: m3_ids(m), cof: m3_cofactor(&mv) }), &[z])[0]
}

/// `Z = A B` with `Ā = Z̄ Bᵀ`, `B̄ = Aᵀ Z̄`.
struct MatMul {
    a: Vec<u32>,
    b: Vec<u32>,
    av: Vec<CScalar>,
    bv: Vec<CScalar>,
    r: usize,
    k: usize,
    c: usize,
}

impl FatRule for MatMul {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let (r, k, c) = (self.r, self.k, self.c);
        for i in 0..r {
            for l in 0..k {
                let mut ga = CScalar::ZERO;
                for j in 0..c {
                    ga += out[i * c + j] * self.bv[l * c + j];
                }
                acc(adj, self.a[i * k + l], ga);
            }
        }
        for l in 0..k {
            for j in 0..c {
                let mut gb = CScalar::ZERO;
                for i in 0..r {
                    gb += self.av[i * k + l] * out[i * c + j];
                }
                acc(adj, self.b[l * c + j], gb);
            }
        }
    }
}

pub(super) fn matmul(a: &[Var], b: &[Var], r: usize, k: usize, c: usize) -> Vec<Var> {
    assert_eq!(a.len(), r * k, "left operand shape");
    assert_eq!(b.len(), k * c, "right operand shape");
    let av = vals(a);
    let bv = vals(b);
    let z = elementwise::matmul(&av, &bv, r, k, c);
    if all_const(a) && all_const(b) {
        return consts(&z);
    }
    emit(Box::new(MatMul { a: ids(a), b: ids(b), av, bv, r, k, c }), &z)
}

/// `z = M x` for constant sparse `M`, with `x̄ = Mᵀ z̄`.
struct ConstMatVec {
    m: Arc<Csr>,
    x: Vec<u32>,
}

impl FatRule for ConstMatVec {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        for r in 0..self.m.nrows {
            let g = out[r];
            if g.re == 0.0 && g.im == 0.0 {
                continue;
            }
            for (c, v) in self.m.row(r) {
                acc(adj, self.x[c], g * v);
            }
        }
    }
}

pub(super) fn const_matvec(m: &Arc<Csr>, x: &[Var]) -> Vec<Var> {
    assert_eq!(m.ncols, x.len(), "sparse matvec shape");
    let xv = vals(x);
    let z = elementwise::const_matvec(m, &xv);
    if all_const(x) {
        return consts(&z);
    }
    emit(Box::new(ConstMatVec { m: Arc::clone(m), x: ids(x) }), &z)
}

fn split(v: &[CScalar]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|c| c.re).collect(), v.iter().map(|c| c.im).collect())
}

fn join(re: Vec<f64>, im: Vec<f64>) -> Vec<CScalar> {
    re.into_iter().zip(im).map(|(r, i)| CScalar::new(r, i)).collect()
}

/// `z = A⁻¹x` with stored real factorization; `x̄ = A⁻ᵀ z̄` reuses it.
struct SolveConst {
    a: Arc<Factorization>,
    x: Vec<u32>,
}

impl FatRule for SolveConst {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let (gr, gi) = split(out);
        let xbar = join(self.a.solve_transpose(&gr), self.a.solve_transpose(&gi));
        for (id, g) in self.x.iter().zip(xbar) {
            acc(adj, *id, g);
        }
    }
}

pub(super) fn solve_const(a: &Arc<Factorization>, x: &[Var]) -> Vec<Var> {
    assert_eq!(a.dim(), x.len(), "factorization shape");
    let (re, im) = split(&vals(x));
    let z = join(a.solve(&re), a.solve(&im));
    if all_const(x) {
        return consts(&z);
    }
    emit(Box::new(SolveConst { a: Arc::clone(a), x: ids(x) }), &z)
}

/// `z = X⁻¹b` with `b̄ = X⁻ᵀ z̄` and `X̄ = −b̄ zᵀ`.
struct SolveVar {
    x: Vec<u32>,
    b: Vec<u32>,
    xt: Vec<CScalar>,
    z: Vec<CScalar>,
    n: usize,
}

impl FatRule for SolveVar {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let n = self.n;
        let bbar = elementwise::gauss_solve(&self.xt, out, n)
            .expect("matrix was nonsingular in the forward pass");
        for i in 0..n {
            acc(adj, self.b[i], bbar[i]);
            for j in 0..n {
                acc(adj, self.x[i * n + j], -bbar[i] * self.z[j]);
            }
        }
    }
}

fn condition_estimate(xv: &[CScalar], n: usize) -> f64 {
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| xv[i * n + j].re);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(super) fn solve_var(x: &[Var], b: &[Var], n: usize) -> Result<Vec<Var>> {
    if x.len() != n * n || b.len() != n {
        return Err(Error::Shape(format!("solve of {} entries with rhs {}", x.len(), b.len())));
    }
    let xv = vals(x);
    let cond = condition_estimate(&xv, n);
    if !(cond <= COND_LIMIT) {
        return Err(Error::IllConditioned { cond, limit: COND_LIMIT });
    }
    let z = elementwise::gauss_solve(&xv, &vals(b), n)?;
    if all_const(x) && all_const(b) {
        return Ok(consts(&z));
    }
    let mut xt = vec![CScalar::ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            xt[j * n + i] = xv[i * n + j];
        }
    }
    Ok(emit(Box::new(SolveVar { x: ids(x), b: ids(b), xt, z: z.clone(), n }), &z))
}

/// Stable Neo-Hookean first Piola stress. Its derivative is the (symmetric)
/// energy Hessian, so the adjoint is the directional derivative of `P`
/// along `P̄`.
struct NeoHookeanPiola {
    f: [[u32; 3]; 3],
    fv: M3<CScalar>,
    mu: f64,
    lambda: f64,
}

impl FatRule for NeoHookeanPiola {
    fn backprop(&self, out: &[CScalar], adj: &mut [CScalar]) {
        let g: M3<CScalar> = [
            [out[0], out[1], out[2]],
            [out[3], out[4], out[5]],
            [out[6], out[7], out[8]],
        ];
        let f = &self.fv;
        let cof = m3_cofactor(f);
        let j = elementwise::det3(f);
        let dcof = m3_cofactor_dir(f, &g);
        let dj = m3_frob_dot(&cof, &g);
        let a = m3_scale(&g, CScalar::real(self.mu));
        let b = m3_scale(&dcof, (j - 1.0) * self.lambda - self.mu);
        let c = m3_scale(&cof, dj * self.lambda);
        let fbar = m3_add(&m3_add(&a, &b), &c);
        for r in 0..3 {
            for s in 0..3 {
                acc(adj, self.f[r][s], fbar[r][s]);
            }
        }
    }
}

pub(super) fn neo_hookean_piola(f: &M3<Var>, mu: f64, lambda: f64) -> M3<Var> {
    let fv = m3_vals(f);
    let p = elementwise::neo_hookean_piola(&fv, mu, lambda);
    let flat: Vec<CScalar> = p.iter().flatten().copied().collect();
    let outs = if f.iter().flatten().all(|v| v.is_constant()) {
        consts(&flat)
    } else {
        emit(Box::new(NeoHookeanPiola { f: m3_ids(f), fv, mu, lambda }), &flat)
    };
    [[outs[0], outs[1], outs[2]], [outs[3], outs[4], outs[5]], [outs[6], outs[7], outs[8]]]
}
