use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{input, tapes_recorded_on_thread, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{CScalar, PerturbStep};

#[derive(Clone, Debug)]
pub struct GradientOutput {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Node count of the recorded forward pass.
    pub nodes: usize,
}

#[derive(Clone, Debug)]
pub struct ColumnOutput {
    /// `Im(ā)/h`.
    pub column: Vec<f64>,
    /// `Re(ā)`, identical to the unperturbed gradient.
    pub gradient: Vec<f64>,
    pub value: CScalar,
    pub nodes: usize,
}

#[derive(Clone, Debug)]
pub struct HessianOutput {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Columns as computed, before any symmetrization.
    pub hessian: DMatrix<f64>,
    /// Tapes recorded during the assembly, summed over workers.
    pub tapes: usize,
    pub gradient_nodes: usize,
    pub column_nodes: Vec<usize>,
}

impl HessianOutput {
    /// `‖H − Hᵀ‖_F / ‖H‖_F`, zero for a zero matrix.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.hessian.norm();
        if n == 0.0 {
            return 0.0;
        }
        (&self.hessian - self.hessian.transpose()).norm() / n
    }

    pub fn symmetrized(&self) -> DMatrix<f64> {
        (&self.hessian + self.hessian.transpose()) * 0.5
    }
}

fn run<F>(f: &F, point: Vec<CScalar>) -> Result<(CScalar, Vec<CScalar>, usize)>
where
    F: Fn(&[Var]) -> Result<Var> + ?Sized,
{
    let (out, tape) = Tape::record(|| {
        let xs: Vec<Var> = point.iter().map(|&v| input(v)).collect();
        f(&xs).map(|y| (xs, y))
    })?;
    let (xs, y) = out?;
    let adj = tape.reverse_sweep(y)?;
    let g = xs.iter().map(|x| adj.get(*x)).collect();
    Ok((y.value(), g, tape.len()))
}

/// One unperturbed forward pass and one reverse sweep.
pub fn gradient<F>(f: &F, a: &[f64]) -> Result<GradientOutput>
where
    F: Fn(&[Var]) -> Result<Var> + ?Sized,
{
    let (v, g, nodes) = run(f, a.iter().map(|&x| CScalar::real(x)).collect())?;
    Ok(GradientOutput { value: v.re, gradient: g.iter().map(|c| c.re).collect(), nodes })
}

/// Column `k` of the Hessian: forward pass with `a_k + ih`, reverse sweep,
/// imaginary adjoint parts over `h`.
pub fn hessian_column<F>(f: &F, a: &[f64], k: usize, h: PerturbStep) -> Result<ColumnOutput>
where
    F: Fn(&[Var]) -> Result<Var> + ?Sized,
{
    if k >= a.len() {
        return Err(Error::Shape(format!("column {k} of a {}-dimensional Hessian", a.len())));
    }
    let point = a
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == k { CScalar::perturbed(x, h) } else { CScalar::real(x) })
        .collect();
    let (v, g, nodes) = run(f, point)?;
    Ok(ColumnOutput {
        column: g.iter().map(|c| c.im / h.get()).collect(),
        gradient: g.iter().map(|c| c.re).collect(),
        value: v,
        nodes,
    })
}

/// Gradient plus all `M` Hessian columns, each column on its own tape.
/// Columns are distributed over `workers` threads and written back by index,
/// so the result does not depend on scheduling.
pub fn hessian<F>(f: &F, a: &[f64], h: PerturbStep, workers: usize) -> Result<HessianOutput>
where
    F: Fn(&[Var]) -> Result<Var> + Sync + ?Sized,
{
    let before = tapes_recorded_on_thread();
    let grad = gradient(f, a)?;
    let mut tapes = tapes_recorded_on_thread() - before;
    let m = a.len();

    let column = |k: usize| -> Result<(ColumnOutput, usize)> {
        let before = tapes_recorded_on_thread();
        let c = hessian_column(f, a, k, h)
            .map_err(|e| Error::HessianColumn { column: k, source: Box::new(e) })?;
        Ok((c, tapes_recorded_on_thread() - before))
    };

    let cols: Vec<Result<(ColumnOutput, usize)>> = if workers <= 1 || m <= 1 {
        (0..m).map(column).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Optimization(format!("worker pool: {e}")))?;
        pool.install(|| (0..m).into_par_iter().map(column).collect())
    };

    let mut hess = DMatrix::zeros(m, m);
    let mut column_nodes = Vec::with_capacity(m);
    for (k, c) in cols.into_iter().enumerate() {
        let (c, t) = c?;
        tapes += t;
        column_nodes.push(c.nodes);
        for i in 0..m {
            hess[(i, k)] = c.column[i];
        }
    }
    Ok(HessianOutput {
        value: grad.value,
        gradient: grad.gradient,
        hessian: hess,
        tapes,
        gradient_nodes: grad.nodes,
        column_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Real;

    fn half_k_sq(a: &[Var]) -> Result<Var> {
        Ok(Var::sqnorm(a) * 1.0)
    }

    #[test]
    fn gradient_of_scaled_norm() {
        let g = gradient(&|a: &[Var]| Ok(Var::sqnorm(a) * 0.5 * 2.0), &[1.0, 2.0]).unwrap();
        assert_eq!(g.gradient, vec![2.0, 4.0]);
        let c = gradient(&|_a: &[Var]| Ok(Var::cst(3.0)), &[1.0, 2.0]).unwrap();
        assert_eq!(c.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn hessian_of_squared_norm_is_twice_identity() {
        let out = hessian(&half_k_sq, &[0.3, -1.0, 2.0], PerturbStep::DEFAULT, 1).unwrap();
        assert_eq!(out.hessian, DMatrix::identity(3, 3) * 2.0);
        assert_eq!(out.tapes, 4);
    }

    #[test]
    fn mixed_monomial_column() {
        // f = a1² a2, H = [[2 a2, 2 a1], [2 a1, 0]]
        let f = |a: &[Var]| Ok(a[0] * a[0] * a[1]);
        let c = hessian_column(&f, &[1.0, 1.0], 0, PerturbStep::DEFAULT).unwrap();
        assert_eq!(c.column, vec![2.0, 2.0]);
        assert!(hessian_column(&f, &[1.0, 1.0], 2, PerturbStep::DEFAULT).is_err());
    }

    #[test]
    fn parallel_assembly_matches_sequential() {
        let f = |a: &[Var]| Ok((a[0] * a[1]).sin() + a[2].exp() * a[0] + a[1].powi(3));
        let p = [0.4, -0.3, 0.8];
        let s = hessian(&f, &p, PerturbStep::DEFAULT, 1).unwrap();
        let q = hessian(&f, &p, PerturbStep::DEFAULT, 3).unwrap();
        assert_eq!(s.hessian, q.hessian);
        assert_eq!(q.tapes, 4);
    }
}
