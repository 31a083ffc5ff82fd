//! Implicit Euler stepping of the muscle-driven body with barrier contact.
//!
//! The step solves `r(x) = M(x − x_t − Δt v_t) − Δt² f(x) = 0` by Newton with
//! a constant real linearization per iteration. Every operation on `x` and
//! the activations goes through [`Real`], so the same code runs plain, on a
//! tape, or in an oracle number type. After convergence two closing steps
//! with the exact (unsymmetrized, friction-coupled) Jacobian are taken so
//! that derivatives of the computed `x_{t+1}` match those of the true root
//! to second order.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contact::{
    self, friction_contact_at, friction_force_single, vertex_contact_force, BarrierParams, Collider,
    FrictionState,
};
use crate::elasticity::{self, element_positions, MaterialParams, TetMesh};
use crate::error::{Error, Result};
use crate::linalg::{Csr, Factorization, V3};
use crate::muscle::MuscleSystem;
use crate::real::Real;
use crate::scalar::{CScalar, PerturbStep};
use crate::tape::{self, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    /// Run forward-only steps on a tape as well (results are identical).
    #[serde(default)]
    pub record: bool,
}

fn default_dt() -> f64 {
    1.0 / 40.0
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_newton() -> usize {
    50
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig { dt: default_dt(), newton_tol: default_tol(), max_newton: default_max_newton(), record: false }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.newton_tol > 0.0 && self.max_newton > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub frame: usize,
}

impl SimState {
    pub fn at_rest(mesh: &TetMesh) -> Self {
        let x = mesh.rest_flat();
        SimState { v: vec![0.0; x.len()], x, frame: 0 }
    }

    /// Positions one step back, `x_t − Δt v_t`.
    pub fn previous_positions(&self, dt: f64) -> Vec<f64> {
        self.x.iter().zip(&self.v).map(|(x, v)| x - dt * v).collect()
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput<S> {
    pub x_next: Vec<S>,
    pub v_next: Vec<S>,
    /// Newton iterations before the closing steps.
    pub iterations: usize,
    /// Residual norm at the returned state.
    pub residual: f64,
    pub history: Vec<f64>,
    /// Smallest vertex/collider distance over the accepted iterates.
    pub min_distance: f64,
    /// Diagonal shift that made each Newton matrix factorizable.
    pub shifts: Vec<f64>,
}

impl<S: Real> StepOutput<S> {
    pub fn state(&self, frame: usize) -> SimState {
        SimState {
            x: self.x_next.iter().map(|v| v.re()).collect(),
            v: self.v_next.iter().map(|v| v.re()).collect(),
            frame,
        }
    }
}

/// Everything needed to advance the body, with precomputed mass and `K₀`.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub mesh: TetMesh,
    pub material: MaterialParams,
    pub barrier: BarrierParams,
    pub colliders: Vec<Collider>,
    pub muscles: MuscleSystem,
    pub gravity: [f64; 3],
    pub step: StepConfig,
    pub mass: Vec<f64>,
    pub k0: Arc<Csr>,
}

fn norm_re<S: Real>(v: &[S]) -> f64 {
    v.iter().map(|x| x.re() * x.re()).sum::<f64>().sqrt()
}

fn re_vec<S: Real>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.re()).collect()
}

impl Simulator {
    pub fn new(
        mesh: TetMesh,
        material: MaterialParams,
        barrier: BarrierParams,
        colliders: Vec<Collider>,
        muscles: MuscleSystem,
        gravity: [f64; 3],
        step: StepConfig,
    ) -> Result<Self> {
        material.validate()?;
        barrier.validate()?;
        step.validate()?;
        for c in &colliders {
            c.validate()?;
        }
        let mass = elasticity::lumped_mass(&mesh, material.density);
        let k0 = Arc::new(elasticity::rest_stiffness(&mesh, &material)?);
        Ok(Simulator { mesh, material, barrier, colliders, muscles, gravity, step, mass, k0 })
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.mesh.num_vertices()
    }

    pub fn num_activations(&self) -> usize {
        self.muscles.num_activations
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Smallest distance between a surface vertex and a collider.
    pub fn min_distance(&self, x: &[f64]) -> f64 {
        let mut d = f64::INFINITY;
        for &v in &self.mesh.surface_vertices {
            let p = elasticity::vertex(x, v);
            for c in &self.colliders {
                d = d.min(contact::distance(&p, c));
            }
        }
        d
    }

    /// Sum of all forces at `x` with `v_{t+1} = (x − x_t)/Δt`.
    pub fn total_force<S: Real>(&self, x: &[S], state: &SimState, fs: &FrictionState<S>, a: &[S]) -> Result<Vec<S>> {
        let dt = self.step.dt;
        let surf = &self.mesh.surface_vertices;
        let mut f = elasticity::elastic_forces(&self.mesh, &self.material, x);
        let v: Vec<S> = x.iter().zip(&state.x).map(|(&xi, &xt)| (xi - xt) / dt).collect();
        let fd = elasticity::damping_force(&self.k0, &self.mass, &self.material, &v);
        let fc = contact::contact_forces(surf, &self.colliders, &self.barrier, x)?;
        let ff = contact::friction_forces(fs, &self.colliders, &self.barrier, x, &state.x, dt);
        let fm = self.muscles.forces(&self.mesh, x, a)?;
        for i in 0..f.len() {
            f[i] += fd[i] + fc[i] + ff[i] + fm[i] + self.mass[i / 3] * self.gravity[i % 3];
        }
        Ok(f)
    }

    /// `r = M(x − x_t − Δt v_t) − Δt² f`.
    pub fn residual<S: Real>(&self, x: &[S], state: &SimState, fs: &FrictionState<S>, a: &[S]) -> Result<Vec<S>> {
        let dt = self.step.dt;
        let f = self.total_force(x, state, fs, a)?;
        Ok((0..x.len())
            .map(|i| (x[i] - (state.x[i] + dt * state.v[i])) * self.mass[i / 3] - f[i] * (dt * dt))
            .collect())
    }

    fn friction_state<S: Real>(&self, x: &[S]) -> Result<FrictionState<S>> {
        contact::friction_state(&self.mesh.surface_vertices, &self.colliders, &self.barrier, x)
    }

    /// `∂r/∂x` at a real state. With `lagged`, friction normal forces and
    /// frames are held at `fs`; otherwise they follow `x`.
    pub fn residual_jacobian(
        &self,
        x: &[f64],
        state: &SimState,
        fs: &FrictionState<f64>,
        a: &[f64],
        lagged: bool,
    ) -> Result<DMatrix<f64>> {
        let n = x.len();
        let dt = self.step.dt;
        let h = PerturbStep::DEFAULT.get();
        // ∂f/∂x, accumulated by forward complex steps of local force kernels
        let mut k = DMatrix::<f64>::zeros(n, n);
        let ac: Vec<CScalar> = a.iter().map(|&v| CScalar::real(v)).collect();
        for e in 0..self.mesh.num_tets() {
            let t = self.mesh.tets[e];
            let base: [V3<CScalar>; 4] = element_positions(&self.mesh, e, x).map(|p| p.map(CScalar::real));
            for col in 0..12 {
                let mut xe = base;
                xe[col / 3][col % 3].im = h;
                let mut fe = elasticity::element_forces_local(&self.mesh, &self.material, e, &xe);
                if self.muscles.is_active(e) {
                    let fm = self.muscles.element_forces_local(&self.mesh, e, &xe, &ac)?;
                    for l in 0..4 {
                        for c in 0..3 {
                            fe[l][c] += fm[l][c];
                        }
                    }
                }
                let gc = 3 * t[col / 3] + col % 3;
                for l in 0..4 {
                    for c in 0..3 {
                        k[(3 * t[l] + c, gc)] += fe[l][c].im / h;
                    }
                }
            }
        }
        for &v in &self.mesh.surface_vertices {
            let p0 = elasticity::vertex(x, v);
            let lag: Vec<_> = fs.contacts.iter().filter(|c| c.vertex == v).collect();
            for col in 0..3 {
                let mut p = p0.map(CScalar::real);
                p[col].im = h;
                let mut f = vertex_contact_force(&p, &self.colliders, &self.barrier)?;
                let u = [0, 1, 2].map(|i| (p[i] - state.x[3 * v + i]) / dt);
                if lagged {
                    for c in &lag {
                        let normal = c.normal.map(CScalar::real);
                        let mu = self.colliders[c.collider].friction();
                        let ff = friction_force_single(mu, CScalar::real(c.lambda), &normal, &u, self.barrier.eps_v);
                        for i in 0..3 {
                            f[i] += ff[i];
                        }
                    }
                } else {
                    for col_obj in &self.colliders {
                        if let Some((lambda, normal)) = friction_contact_at(&p, col_obj, &self.barrier)? {
                            let ff = friction_force_single(col_obj.friction(), lambda, &normal, &u, self.barrier.eps_v);
                            for i in 0..3 {
                                f[i] += ff[i];
                            }
                        }
                    }
                }
                for i in 0..3 {
                    k[(3 * v + i, 3 * v + col)] += f[i].im / h;
                }
            }
        }
        // damping: ∂f_d/∂x = −(αM + βK₀)/Δt
        let m = &self.material;
        let mut j = -k * (dt * dt);
        for i in 0..n {
            j[(i, i)] += self.mass[i / 3] * (1.0 + dt * m.alpha);
        }
        if m.beta != 0.0 {
            for r in 0..n {
                for (c, val) in self.k0.row(r) {
                    j[(r, c)] += dt * m.beta * val;
                }
            }
        }
        Ok(j)
    }

    /// Symmetrized Newton matrix and its Cholesky factorization, with a
    /// diagonal shift escalated ×10 from 1e-8·mean(diag) when needed.
    pub fn newton_system(
        &self,
        x: &[f64],
        state: &SimState,
        fs: &FrictionState<f64>,
        a: &[f64],
    ) -> Result<(DMatrix<f64>, Arc<Factorization>, f64)> {
        let j = self.residual_jacobian(x, state, fs, a, true)?;
        let sym = (&j + j.transpose()) * 0.5;
        let (fact, shift) = shifted_cholesky(&sym)?;
        Ok((sym, Arc::new(fact), shift))
    }

    /// One time step. The scalar type decides the mode: `f64` is the fast
    /// path, tape variables record the step, oracle types propagate their
    /// perturbations. Control flow only reads real parts.
    pub fn step<S: Real>(&self, state: &SimState, a: &[S]) -> Result<StepOutput<S>> {
        let n = self.num_dofs();
        if state.x.len() != n || state.v.len() != n {
            return Err(Error::Shape(format!("state has {} dofs, mesh has {n}", state.x.len())));
        }
        if a.len() != self.num_activations() {
            return Err(Error::Shape(format!(
                "{} activations given, scene has {}",
                a.len(),
                self.num_activations()
            )));
        }
        let cfg = &self.step;
        let dt = cfg.dt;
        let surf = &self.mesh.surface_vertices;
        let a_re = re_vec(a);

        let drift: Vec<f64> = state.v.iter().map(|v| dt * v).collect();
        let alpha0 = contact::max_feasible_step(surf, &self.colliders, &state.x, &drift)?;
        let mut x: Vec<S> = (0..n).map(|i| S::cst(state.x[i] + alpha0 * drift[i])).collect();
        let mut fs = self.friction_state(&x)?;
        let mut r = self.residual(&x, state, &fs, a)?;
        let r0 = norm_re(&r);
        let floor = dt * dt * self.total_mass();
        let mut history = Vec::new();
        let mut shifts = Vec::new();
        let mut min_d = self.min_distance(&re_vec(&x));
        let merit = |r: &[S]| -> f64 {
            r.iter().enumerate().map(|(i, v)| v.re() * v.re() / self.mass[i / 3]).sum::<f64>() * 0.5
        };

        let mut iterations = 0;
        loop {
            let rn = norm_re(&r);
            history.push(rn);
            if rn <= cfg.newton_tol * (r0 + floor) {
                break;
            }
            if iterations == cfg.max_newton {
                return Err(Error::ForwardNonConvergence { iterations, history });
            }
            iterations += 1;
            let x_re = re_vec(&x);
            let fs_re = fs.re();
            let (_, fact, shift) = self.newton_system(&x_re, state, &fs_re, &a_re)?;
            shifts.push(shift);
            let m0 = merit(&r);
            let mut accepted = self.line_search(&x, &r, &fact, m0, state, &fs, a)?;
            if accepted.is_none() {
                // the symmetrized matrix did not give a descent direction;
                // fall back to the exact lagged Jacobian
                let j = self.residual_jacobian(&x_re, state, &fs_re, &a_re, true)?;
                let lu = Arc::new(Factorization::lu(j)?);
                accepted = self.line_search(&x, &r, &lu, m0, state, &fs, a)?;
            }
            match accepted {
                Some(xn) => x = xn,
                None => return Err(Error::ForwardNonConvergence { iterations, history }),
            }
            min_d = min_d.min(self.min_distance(&re_vec(&x)));
            fs = self.friction_state(&x)?;
            r = self.residual(&x, state, &fs, a)?;
        }

        // closing steps with the exact Jacobian at the converged point
        let x_re = re_vec(&x);
        let j = self.residual_jacobian(&x_re, state, &fs.re(), &a_re, false)?;
        let lu = Arc::new(Factorization::lu(j)?);
        for pass in 0..2 {
            let dx = S::solve_const(&lu, &r);
            let dx_re = re_vec(&dx);
            let cap = contact::max_feasible_step(surf, &self.colliders, &re_vec(&x), &dx_re)?;
            if cap < 1.0 {
                return Err(Error::Feasibility(format!(
                    "closing Newton step would leave the feasible set (cap {cap})"
                )));
            }
            for i in 0..n {
                x[i] -= dx[i];
            }
            fs = self.friction_state(&x)?;
            if pass == 0 {
                r = self.residual(&x, state, &fs, a)?;
            }
        }
        let x_re = re_vec(&x);
        let residual = norm_re(&self.residual(&x_re, state, &fs.re(), &a_re)?);
        min_d = min_d.min(self.min_distance(&x_re));
        let v_next: Vec<S> = (0..n).map(|i| (x[i] - state.x[i]) / dt).collect();
        Ok(StepOutput { x_next: x, v_next, iterations, residual, history, min_distance: min_d, shifts })
    }

    #[allow(clippy::too_many_arguments)]
    fn line_search<S: Real>(
        &self,
        x: &[S],
        r: &[S],
        fact: &Arc<Factorization>,
        m0: f64,
        state: &SimState,
        fs: &FrictionState<S>,
        a: &[S],
    ) -> Result<Option<Vec<S>>> {
        let dx = S::solve_const(fact, r);
        let dx_re: Vec<f64> = dx.iter().map(|v| -v.re()).collect();
        let x_re = re_vec(x);
        let mut alpha = contact::max_feasible_step(&self.mesh.surface_vertices, &self.colliders, &x_re, &dx_re)?;
        for _ in 0..40 {
            let trial: Vec<S> = x.iter().zip(&dx).map(|(&xi, &d)| xi - d * alpha).collect();
            match self.residual(&trial, state, fs, a) {
                Ok(rt) => {
                    let mt = rt
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v.re() * v.re() / self.mass[i / 3])
                        .sum::<f64>()
                        * 0.5;
                    if mt <= (1.0 - 2e-4 * alpha) * m0 {
                        return Ok(Some(trial));
                    }
                }
                Err(Error::Feasibility(_)) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        Ok(None)
    }

    /// Plain forward step; with `step.record` the step is taken on a tape
    /// and its real parts returned, which must give identical numbers.
    pub fn advance(&self, state: &SimState, a: &[f64]) -> Result<(SimState, StepOutput<f64>)> {
        let out = if self.step.record {
            let (res, _tape) = Tape::record(|| {
                let av: Vec<Var> = a.iter().map(|&v| tape::input(CScalar::real(v))).collect();
                self.step(state, &av)
            })?;
            let o = res?;
            StepOutput {
                x_next: re_vec(&o.x_next),
                v_next: re_vec(&o.v_next),
                iterations: o.iterations,
                residual: o.residual,
                history: o.history,
                min_distance: o.min_distance,
                shifts: o.shifts,
            }
        } else {
            self.step::<f64>(state, a)?
        };
        Ok((out.state(state.frame + 1), out))
    }
}

/// Cholesky of `a + τI`, trying `τ = 0` first and then `1e-8·m, 1e-7·m, …,
/// 1e2·m` with `m` the mean diagonal magnitude.
pub fn shifted_cholesky(a: &DMatrix<f64>) -> Result<(Factorization, f64)> {
    if let Ok(f) = Factorization::cholesky(a.clone()) {
        return Ok((f, 0.0));
    }
    let n = a.nrows().max(1);
    let mean = (0..a.nrows()).map(|i| a[(i, i)].abs()).sum::<f64>() / n as f64;
    let mean = if mean > 0.0 { mean } else { 1.0 };
    let mut tau = 1e-8 * mean;
    while tau <= 1e2 * mean * (1.0 + 1e-12) {
        let mut s = a.clone();
        for i in 0..a.nrows() {
            s[(i, i)] += tau;
        }
        if let Ok(f) = Factorization::cholesky(s) {
            return Ok((f, tau));
        }
        tau *= 10.0;
    }
    Err(Error::Singular(format!("no positive definite shift up to {:e}", 1e2 * mean)))
}
