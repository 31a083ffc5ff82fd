//! Per-frame activation solve: gradient-descent warm start followed by
//! Newton with CSFD-AD Hessians, plus the sequential rollout driver.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Factorization;
use crate::loss::{self, LossSpec, Schedule};
use crate::real::Real;
use crate::scalar::PerturbStep;
use crate::sim::{SimState, Simulator};
use crate::tape::{self, HessianOutput, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "d_gd_iters")]
    pub gd_iters: usize,
    #[serde(default = "d_newton_max")]
    pub newton_max: usize,
    /// Stop once `‖g‖ ≤ gtol`.
    #[serde(default = "d_gtol")]
    pub gtol: f64,
    #[serde(default = "d_ls_factor")]
    pub ls_factor: f64,
    #[serde(default = "d_armijo")]
    pub armijo: f64,
    #[serde(default = "d_ls_max")]
    pub ls_max: usize,
    /// First non-zero Tikhonov shift, relative to mean |diag H|.
    #[serde(default = "d_tau0")]
    pub tau0: f64,
    #[serde(default = "d_h")]
    pub h: f64,
    #[serde(default = "d_workers")]
    pub workers: usize,
    /// Box applied by projection after each accepted step.
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
}

fn d_gd_iters() -> usize {
    10
}
fn d_newton_max() -> usize {
    20
}
fn d_gtol() -> f64 {
    1e-13
}
fn d_ls_factor() -> f64 {
    0.5
}
fn d_armijo() -> f64 {
    1e-4
}
fn d_ls_max() -> usize {
    40
}
fn d_tau0() -> f64 {
    1e-8
}
fn d_h() -> f64 {
    1e-20
}
fn d_workers() -> usize {
    1
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            gd_iters: d_gd_iters(),
            newton_max: d_newton_max(),
            gtol: d_gtol(),
            ls_factor: d_ls_factor(),
            armijo: d_armijo(),
            ls_max: d_ls_max(),
            tau0: d_tau0(),
            h: d_h(),
            workers: d_workers(),
            bounds: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("optimizer: {m}")));
        if !(self.gtol > 0.0) {
            return bad("gtol must be positive");
        }
        if !(self.ls_factor > 0.0 && self.ls_factor < 1.0) {
            return bad("ls_factor must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if self.ls_max == 0 || self.workers == 0 {
            return bad("ls_max and workers must be positive");
        }
        if !(self.tau0 > 0.0) {
            return bad("tau0 must be positive");
        }
        PerturbStep::new(self.h)?;
        if let Some([lo, hi]) = self.bounds {
            if !(lo <= hi) {
                return bad("bounds must satisfy lo ≤ hi");
            }
        }
        Ok(())
    }

    pub fn step(&self) -> Result<PerturbStep> {
        PerturbStep::new(self.h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Gd,
    Newton,
    Lbfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Gd => "gd",
            Phase::Newton => "newton",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub loss: f64,
    pub grad_norm: f64,
    /// Accepted line-search step (0 for the starting point).
    pub step: f64,
    /// Tikhonov shift used by a Newton step.
    pub tau: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub history: Vec<IterRecord>,
    pub gd_iterations: usize,
    pub newton_iterations: usize,
    pub gradient_evals: usize,
    pub loss_evals: usize,
    /// Wall time of each Hessian assembly, seconds.
    pub hessian_seconds: Vec<f64>,
    pub max_symmetry_defect: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// The line search found no decrease before the gradient tolerance.
    pub stalled: bool,
}

impl SolveReport {
    pub fn initial_loss(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// A scalar function of the activations, evaluable in any `Real`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn eval<S: Real>(&self, a: &[S]) -> Result<S>;
}

/// Loss of one frame: a forward step from `state` followed by the loss terms.
pub struct FrameObjective<'a> {
    pub sim: &'a Simulator,
    pub state: &'a SimState,
    pub a_prev: &'a [f64],
    pub spec: &'a LossSpec,
}

impl Objective for FrameObjective<'_> {
    fn dim(&self) -> usize {
        self.sim.num_activations()
    }

    fn eval<S: Real>(&self, a: &[S]) -> Result<S> {
        loss::total_loss(self.sim, self.state, a, self.a_prev, self.spec).map(|(l, _)| l)
    }
}

pub fn value<O: Objective>(obj: &O, a: &[f64]) -> Result<f64> {
    obj.eval::<f64>(a)
}

pub fn gradient<O: Objective>(obj: &O, a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let f = |x: &[Var]| obj.eval(x);
    let out = tape::gradient(&f, a)?;
    Ok((out.value, out.gradient))
}

/// Full Hessian from `dim` perturbed passes on `workers` threads, before
/// symmetrization.
pub fn hessian<O: Objective>(obj: &O, a: &[f64], h: PerturbStep, workers: usize) -> Result<HessianOutput> {
    let f = |x: &[Var]| obj.eval(x);
    tape::hessian(&f, a, h, workers)
}

pub fn loss_gradient(sim: &Simulator, state: &SimState, a: &[f64], a_prev: &[f64], spec: &LossSpec) -> Result<Vec<f64>> {
    gradient(&FrameObjective { sim, state, a_prev, spec }, a).map(|(_, g)| g)
}

/// Symmetrized loss Hessian.
pub fn loss_hessian(
    sim: &Simulator,
    state: &SimState,
    a: &[f64],
    a_prev: &[f64],
    spec: &LossSpec,
    cfg: &OptimizerConfig,
) -> Result<DMatrix<f64>> {
    let out = hessian(&FrameObjective { sim, state, a_prev, spec }, a, cfg.step()?, cfg.workers)?;
    check_defect(&out);
    Ok(out.symmetrized())
}

fn check_defect(out: &HessianOutput) -> f64 {
    let d = out.symmetry_defect();
    if d > 1e-6 {
        log::warn!("Hessian symmetry defect {d:.3e} before symmetrization");
    }
    d
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(a: &mut [f64], bounds: Option<[f64; 2]>) {
    if let Some([lo, hi]) = bounds {
        for v in a {
            *v = v.clamp(lo, hi);
        }
    }
}

enum Search {
    Accepted { a: Vec<f64>, loss: f64, alpha: f64 },
    /// Every trial evaluated but none satisfied the Armijo test.
    NoDecrease,
    /// Every trial failed in the forward solve.
    Failed(Error),
}

/// Backtracking from `alpha0`; a forward failure rejects the trial.
fn line_search<O: Objective>(
    obj: &O,
    a: &[f64],
    l0: f64,
    g: &[f64],
    d: &[f64],
    alpha0: f64,
    cfg: &OptimizerConfig,
    report: &mut SolveReport,
) -> Search {
    let slope = dot(g, d);
    let mut alpha = alpha0;
    let mut evaluated = false;
    let mut last_err = None;
    for _ in 0..cfg.ls_max {
        let mut trial: Vec<f64> = a.iter().zip(d).map(|(x, y)| x + alpha * y).collect();
        project(&mut trial, cfg.bounds);
        report.loss_evals += 1;
        match value(obj, &trial) {
            Ok(lt) if lt.is_finite() => {
                evaluated = true;
                if lt <= l0 + cfg.armijo * alpha * slope && lt < l0 {
                    return Search::Accepted { a: trial, loss: lt, alpha };
                }
            }
            Ok(_) => evaluated = true,
            Err(e) => {
                log::debug!("trial at step {alpha:.3e} rejected: {e}");
                last_err = Some(e);
            }
        }
        alpha *= cfg.ls_factor;
    }
    match (evaluated, last_err) {
        (false, Some(e)) => Search::Failed(e),
        _ => Search::NoDecrease,
    }
}

fn record(report: &mut SolveReport, phase: Phase, loss: f64, g: &[f64], step: f64, tau: f64) {
    let iteration = report.history.len();
    report.history.push(IterRecord { iteration, phase, loss, grad_norm: norm(g), step, tau });
}

fn frame_error(report: &SolveReport, e: Error) -> Error {
    Error::Optimization(format!(
        "line search failed after {} iterations (loss {:.6e}): {e}",
        report.history.len().saturating_sub(1),
        report.final_loss()
    ))
}

/// Up to `iters` steepest-descent steps, each backtracking from 1.
/// Returns the new point, its loss and gradient, and whether a line search
/// found no decrease.
fn gd_phase<O: Objective>(
    obj: &O,
    mut a: Vec<f64>,
    mut l: f64,
    mut g: Vec<f64>,
    iters: usize,
    cfg: &OptimizerConfig,
    report: &mut SolveReport,
) -> Result<(Vec<f64>, f64, Vec<f64>, bool)> {
    for _ in 0..iters {
        if norm(&g) <= cfg.gtol {
            break;
        }
        let d: Vec<f64> = g.iter().map(|v| -v).collect();
        match line_search(obj, &a, l, &g, &d, 1.0, cfg, report) {
            Search::Accepted { a: na, loss, alpha } => {
                a = na;
                let (lv, gv) = gradient(obj, &a)?;
                report.gradient_evals += 1;
                debug_assert!(lv.to_bits() == loss.to_bits() || (lv - loss).abs() <= 1e-12 * loss.abs());
                l = lv;
                g = gv;
                report.gd_iterations += 1;
                record(report, Phase::Gd, l, &g, alpha, 0.0);
            }
            Search::NoDecrease => return Ok((a, l, g, true)),
            Search::Failed(e) => return Err(frame_error(report, e)),
        }
    }
    Ok((a, l, g, false))
}

/// Solves `(H + τI)Δ = −g`, trying τ = 0 first and then escalating from
/// `tau0·mean|diag H|` by ×10 until the factorization succeeds and Δ is a
/// descent direction.
pub fn shifted_newton_direction(h: &DMatrix<f64>, g: &[f64], tau0: f64) -> Result<(Vec<f64>, f64)> {
    let n = g.len();
    let mean = (0..n).map(|i| h[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
    let base = if mean > 0.0 { tau0 * mean } else { tau0 };
    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut tau = 0.0;
    for _ in 0..60 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += tau;
        }
        if let Ok(f) = Factorization::cholesky(m) {
            let d = f.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) && dot(&d, g) < 0.0 {
                return Ok((d, tau));
            }
        }
        tau = if tau == 0.0 { base } else { tau * 10.0 };
    }
    Err(Error::Singular("no shift makes the Hessian positive definite".into()))
}

/// Warm-start gradient descent from `a0`, then Newton.
pub fn minimize<O: Objective>(obj: &O, a0: &[f64], cfg: &OptimizerConfig) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    if a0.len() != obj.dim() {
        return Err(Error::Shape(format!("{} activations for a problem of size {}", a0.len(), obj.dim())));
    }
    let hstep = cfg.step()?;
    let mut report = SolveReport::default();
    let mut a = a0.to_vec();
    project(&mut a, cfg.bounds);
    let (l, g) = gradient(obj, &a)?;
    report.gradient_evals += 1;
    record(&mut report, Phase::Start, l, &g, 0.0, 0.0);
    // a stalled warm start hands over to Newton
    let (mut a, mut l, mut g, _) = gd_phase(obj, a, l, g, cfg.gd_iters, cfg, &mut report)?;

    while report.newton_iterations < cfg.newton_max && norm(&g) > cfg.gtol && !report.stalled {
        let t = Instant::now();
        let hout = hessian(obj, &a, hstep, cfg.workers)?;
        report.hessian_seconds.push(t.elapsed().as_secs_f64());
        report.max_symmetry_defect = report.max_symmetry_defect.max(check_defect(&hout));
        let (d, tau) = shifted_newton_direction(&hout.symmetrized(), &g, cfg.tau0)?;
        match line_search(obj, &a, l, &g, &d, 1.0, cfg, &mut report) {
            Search::Accepted { a: na, alpha, .. } => {
                a = na;
                let (lv, gv) = gradient(obj, &a)?;
                report.gradient_evals += 1;
                l = lv;
                g = gv;
                report.newton_iterations += 1;
                record(&mut report, Phase::Newton, l, &g, alpha, tau);
            }
            Search::NoDecrease => report.stalled = true,
            Search::Failed(e) => return Err(frame_error(&report, e)),
        }
    }
    report.final_grad_norm = norm(&g);
    report.converged = report.final_grad_norm <= cfg.gtol;
    Ok((a, report))
}

/// Plain gradient descent with `iters` iterations; baseline for comparisons.
pub fn gradient_descent<O: Objective>(
    obj: &O,
    a0: &[f64],
    iters: usize,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let mut report = SolveReport::default();
    let (l, g) = gradient(obj, a0)?;
    report.gradient_evals += 1;
    record(&mut report, Phase::Start, l, &g, 0.0, 0.0);
    let (a, _, g, stalled) = gd_phase(obj, a0.to_vec(), l, g, iters, cfg, &mut report)?;
    report.stalled = stalled;
    report.final_grad_norm = norm(&g);
    report.converged = report.final_grad_norm <= cfg.gtol;
    Ok((a, report))
}

/// Limited-memory BFGS (two-loop recursion, `memory` pairs) with the same
/// backtracking line search; reference baseline only.
pub fn lbfgs<O: Objective>(
    obj: &O,
    a0: &[f64],
    iters: usize,
    memory: usize,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let mut report = SolveReport::default();
    let mut a = a0.to_vec();
    let (mut l, mut g) = gradient(obj, &a)?;
    report.gradient_evals += 1;
    record(&mut report, Phase::Start, l, &g, 0.0, 0.0);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for _ in 0..iters {
        if norm(&g) <= cfg.gtol {
            break;
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let al = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= al * yi;
            }
            alphas.push(al);
        }
        let gamma = pairs.back().map_or_else(
            || 1.0 / norm(&g).max(1e-300),
            |(s, y, _)| dot(s, y) / dot(y, y),
        );
        for v in &mut q {
            *v *= gamma;
        }
        for ((s, y, rho), al) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (al - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            d = g.iter().map(|v| -v / norm(&g)).collect();
        }
        match line_search(obj, &a, l, &g, &d, 1.0, cfg, &mut report) {
            Search::Accepted { a: na, alpha, .. } => {
                let (ln, gn) = gradient(obj, &na)?;
                report.gradient_evals += 1;
                let s: Vec<f64> = na.iter().zip(&a).map(|(x, y)| x - y).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(x, y)| x - y).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    pairs.push_back((s, y, 1.0 / sy));
                    if pairs.len() > memory {
                        pairs.pop_front();
                    }
                }
                a = na;
                l = ln;
                g = gn;
                record(&mut report, Phase::Lbfgs, l, &g, alpha, 0.0);
            }
            Search::NoDecrease => {
                report.stalled = true;
                break;
            }
            Search::Failed(e) => return Err(frame_error(&report, e)),
        }
    }
    report.final_grad_norm = norm(&g);
    report.converged = report.final_grad_norm <= cfg.gtol;
    Ok((a, report))
}

/// Optimal activations for one frame, starting from the previous frame's.
pub fn solve_frame(
    sim: &Simulator,
    state: &SimState,
    a_prev: &[f64],
    spec: &LossSpec,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    spec.validate(&sim.mesh)?;
    minimize(&FrameObjective { sim, state, a_prev, spec }, a_prev, cfg)
}

#[derive(Clone, Debug)]
pub struct Rollout {
    /// States `0..=frames_done`; `states[0]` is the initial state.
    pub states: Vec<SimState>,
    pub activations: Vec<Vec<f64>>,
    pub reports: Vec<SolveReport>,
}

/// Frame-by-frame solve. On failure returns the partial rollout alongside
/// the error of the failing frame.
pub fn rollout(
    sim: &Simulator,
    initial: &SimState,
    a0: &[f64],
    schedule: &Schedule,
    frames: usize,
    cfg: &OptimizerConfig,
) -> (Rollout, Option<(usize, Error)>) {
    let mut out = Rollout { states: vec![initial.clone()], activations: Vec::new(), reports: Vec::new() };
    let mut a_prev = a0.to_vec();
    for t in 0..frames {
        let state = out.states.last().cloned().expect("initial state present");
        let result = schedule
            .spec_at(state.frame)
            .and_then(|spec| solve_frame(sim, &state, &a_prev, &spec, cfg))
            .and_then(|(a, rep)| sim.advance(&state, &a).map(|(next, _)| (a, rep, next)));
        match result {
            Ok((a, rep, next)) => {
                log::info!(
                    "frame {}: loss {:.3e} → {:.3e}, {} newton iterations",
                    state.frame,
                    rep.initial_loss(),
                    rep.final_loss(),
                    rep.newton_iterations
                );
                out.states.push(next);
                out.activations.push(a.clone());
                out.reports.push(rep);
                a_prev = a;
            }
            Err(e) => return (out, Some((t, e))),
        }
    }
    (out, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        q: DMatrix<f64>,
        center: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }

        fn eval<S: Real>(&self, a: &[S]) -> Result<S> {
            let d: Vec<S> = a.iter().zip(&self.center).map(|(x, c)| *x - *c).collect();
            let mut acc = S::zero();
            for i in 0..d.len() {
                for j in 0..d.len() {
                    acc += d[i] * d[j] * (0.5 * self.q[(i, j)]);
                }
            }
            Ok(acc)
        }
    }

    fn quadratic() -> Quadratic {
        let q = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        Quadratic { q, center: vec![0.3, -1.2, 2.0] }
    }

    #[test]
    fn one_newton_step_solves_a_quadratic() {
        let obj = quadratic();
        let cfg = OptimizerConfig { gd_iters: 0, newton_max: 1, ..Default::default() };
        let (a, rep) = minimize(&obj, &[0.0; 3], &cfg).unwrap();
        assert_eq!(rep.newton_iterations, 1);
        for (x, c) in a.iter().zip(&obj.center) {
            assert!((x - c).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_start_is_returned_unchanged() {
        let obj = quadratic();
        let (a, rep) = minimize(&obj, &obj.center.clone(), &OptimizerConfig::default()).unwrap();
        assert_eq!(a, obj.center);
        assert_eq!(rep.gd_iterations + rep.newton_iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn warm_start_never_increases_loss() {
        let obj = quadratic();
        let cfg = OptimizerConfig { newton_max: 0, ..Default::default() };
        let (_, rep) = minimize(&obj, &[5.0, 5.0, -5.0], &cfg).unwrap();
        assert!(rep.history.windows(2).all(|w| w[1].loss < w[0].loss));
    }

    #[test]
    fn indefinite_hessian_gets_shifted() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let (d, tau) = shifted_newton_direction(&h, &[1.0, 1.0], 1e-8).unwrap();
        assert!(tau > 1.0);
        assert!(dot(&d, &[1.0, 1.0]) < 0.0);
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let (d, tau) = shifted_newton_direction(&spd, &[2.0, 4.0], 1e-8).unwrap();
        assert_eq!(tau, 0.0);
        assert!(d.iter().all(|v| (v + 1.0).abs() < 1e-15));
    }

    #[test]
    fn lbfgs_converges_on_a_quadratic() {
        let obj = quadratic();
        let (a, _) = lbfgs(&obj, &[0.0; 3], 50, 5, &OptimizerConfig::default()).unwrap();
        for (x, c) in a.iter().zip(&obj.center) {
            assert!((x - c).abs() < 1e-6);
        }
    }

    #[test]
    fn bounds_are_enforced() {
        let obj = quadratic();
        let cfg = OptimizerConfig { bounds: Some([-1.0, 1.0]), ..Default::default() };
        let (a, _) = minimize(&obj, &[0.0; 3], &cfg).unwrap();
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
