//! Forward runs, inverse runs, derivative checks and export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opt::{self, FrameObjective, SolveReport};
use crate::oracle;
use crate::sim::SimState;

use super::{io, jitter, Scenario};

pub const GRAD_FD_TOL: f64 = 1e-4;
pub const HESS_FD_TOL: f64 = 1e-3;
pub const HESS_BICOMPLEX_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// Positions of frames `0..=T`.
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Activations applied in frames `0..T`.
    pub activations: Vec<Vec<f64>>,
    pub reports: Vec<SolveReport>,
}

impl Trajectory {
    fn start(s: &SimState) -> Self {
        Trajectory { positions: vec![s.x.clone()], velocities: vec![s.v.clone()], ..Default::default() }
    }

    fn push(&mut self, s: &SimState, a: Vec<f64>) {
        self.positions.push(s.x.clone());
        self.velocities.push(s.v.clone());
        self.activations.push(a);
    }

    /// Writes `positions.csv`, `velocities.csv`, `activations.csv` and, for
    /// solved runs, `reports.csv` and `convergence.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_frames(&dir.join("positions.csv"), "x", 0, &self.positions)?;
        io::write_frames(&dir.join("velocities.csv"), "v", 0, &self.velocities)?;
        io::write_frames(&dir.join("activations.csv"), "a", 0, &self.activations)?;
        if !self.reports.is_empty() {
            io::write_reports(&dir.join("reports.csv"), &self.reports)?;
            io::write_convergence(&dir.join("convergence.csv"), &self.reports)?;
        }
        Ok(())
    }
}

/// A run that may have stopped early; `failure` names the frame that failed.
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub failure: Option<(usize, Error)>,
}

/// Forward rollout with the given activations per frame (zeros if `None`).
pub fn simulate(sc: &Scenario, activations: Option<&[Vec<f64>]>, frames: usize) -> Result<RunOutput> {
    let m = sc.sim.num_activations();
    if let Some(acts) = activations {
        if acts.len() < frames {
            return Err(Error::Config(format!("{} activation rows for {frames} frames", acts.len())));
        }
        if let Some((k, row)) = acts.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Config(format!("activation row {k} has {} entries, scene has {m}", row.len())));
        }
    }
    let mut state = sc.initial.clone();
    let mut traj = Trajectory::start(&state);
    for t in 0..frames {
        let a = activations.map_or_else(|| vec![0.0; m], |acts| acts[t].clone());
        match sc.sim.advance(&state, &a) {
            Ok((next, _)) => {
                traj.push(&next, a);
                state = next;
            }
            Err(e) => return Ok(RunOutput { trajectory: traj, failure: Some((t, e)) }),
        }
    }
    Ok(RunOutput { trajectory: traj, failure: None })
}

/// Frame-by-frame inverse solve over `frames` frames.
pub fn solve(sc: &Scenario, frames: usize) -> RunOutput {
    let cfg = &sc.config.optimizer;
    let (roll, failure) = opt::rollout(&sc.sim, &sc.initial, &sc.a0, &sc.config.loss, frames, cfg);
    let mut traj = Trajectory::start(&roll.states[0]);
    for (s, a) in roll.states[1..].iter().zip(&roll.activations) {
        traj.push(s, a.clone());
    }
    traj.reports = roll.reports;
    RunOutput { trajectory: traj, failure }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Fd,
    Bicomplex,
    Both,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    /// Frame whose state is reached by zero-activation steps from the start.
    pub frame: usize,
    pub mode: CheckMode,
    pub h: f64,
    /// Half-width of the seeded activation probe point (Pa).
    pub probe: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { frame: 0, mode: CheckMode::Both, h: 1e-20, probe: 1e3 }
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
    /// Row-major index of the worst entry.
    pub worst: (usize, usize),
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct DerivativeReport {
    pub point: Vec<f64>,
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// `(step, relative error)` of central differences against the tape.
    pub gradient_sweep: Vec<(f64, f64)>,
    pub hessian_sweep: Vec<(f64, f64)>,
    pub symmetry_defect: f64,
    pub tapes: usize,
    pub comparisons: Vec<Comparison>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(Comparison::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loss {:.6e} at a = {:?}", self.loss, self.point);
        let _ = writeln!(s, "gradient FD sweep (step, rel. error):");
        for (h, e) in &self.gradient_sweep {
            let _ = writeln!(s, "  {h:.0e}  {e:.3e}");
        }
        if !self.hessian_sweep.is_empty() {
            let _ = writeln!(s, "Hessian FD-of-gradient sweep (step, rel. error):");
            for (h, e) in &self.hessian_sweep {
                let _ = writeln!(s, "  {h:.0e}  {e:.3e}");
            }
        }
        let _ = writeln!(s, "symmetry defect before symmetrization {:.3e} ({} tapes)", self.symmetry_defect, self.tapes);
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{} {}: max rel. error {:.3e} (tolerance {:.0e}), worst entry {:?}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance,
                c.worst
            );
        }
        s
    }
}

fn best(sweep: &[(f64, f64)]) -> f64 {
    sweep.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
}

fn worst_index(a: &[f64], b: &[f64], cols: usize) -> (usize, usize) {
    let (i, _) = oracle::worst_entry(a, b);
    (i / cols.max(1), i % cols.max(1))
}

/// Compares the tape gradient and the CSFD-AD Hessian of the loss against
/// finite differences and the bicomplex oracle.
pub fn check_derivatives(sc: &Scenario, opts: &CheckOptions) -> Result<DerivativeReport> {
    let sim = &sc.sim;
    let m = sim.num_activations();
    if m == 0 {
        return Err(Error::Config("scene has no activations to differentiate".into()));
    }
    let mut state = sc.initial.clone();
    for _ in 0..opts.frame {
        state = sim.advance(&state, &vec![0.0; m])?.0;
    }
    let spec = sc.config.loss.spec_at(state.frame)?;
    let a_prev = vec![0.0; m];
    let obj = FrameObjective { sim, state: &state, a_prev: &a_prev, spec: &spec };
    let a = jitter(sc.config.seed, m, opts.probe);
    let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));

    let (loss, g) = opt::gradient(&obj, &a)?;
    let mut gradient_sweep = Vec::new();
    for k in 1..=5 {
        let step = scale * 10f64.powi(-(k + 3));
        let fd = oracle::fd_gradient(&obj, &a, step)?;
        gradient_sweep.push((step, oracle::max_rel_error(&fd, &g, 1e-300)));
    }
    let hout = opt::hessian(&obj, &a, crate::PerturbStep::new(opts.h)?, sc.config.optimizer.workers)?;
    let h = hout.symmetrized();
    let hv: Vec<f64> = h.transpose().iter().copied().collect();
    let mut comparisons = vec![Comparison {
        name: "gradient vs central FD",
        error: best(&gradient_sweep),
        tolerance: GRAD_FD_TOL,
        worst: (0, 0),
    }];
    let mut hessian_sweep = Vec::new();
    if matches!(opts.mode, CheckMode::Fd | CheckMode::Both) {
        let mut best_fd = None;
        for k in 1..=5 {
            let step = scale * 10f64.powi(-(k + 1));
            let fd = oracle::fd_hessian(&obj, &a, step)?;
            let fv: Vec<f64> = fd.transpose().iter().copied().collect();
            let e = oracle::max_rel_error(&fv, &hv, 1e-300);
            hessian_sweep.push((step, e));
            if best_fd.as_ref().map_or(true, |(be, _): &(f64, Vec<f64>)| e < *be) {
                best_fd = Some((e, fv));
            }
        }
        let (e, fv) = best_fd.expect("sweep is non-empty");
        comparisons.push(Comparison {
            name: "Hessian vs FD of gradient",
            error: e,
            tolerance: HESS_FD_TOL,
            worst: worst_index(&fv, &hv, m),
        });
    }
    if matches!(opts.mode, CheckMode::Bicomplex | CheckMode::Both) {
        let bc = oracle::bicomplex_hessian(&obj, &a, opts.h.max(1e-30))?;
        let bv: Vec<f64> = bc.transpose().iter().copied().collect();
        comparisons.push(Comparison {
            name: "Hessian vs bicomplex oracle",
            error: oracle::max_rel_error(&hv, &bv, 1e-300),
            tolerance: HESS_BICOMPLEX_TOL,
            worst: worst_index(&hv, &bv, m),
        });
    }
    Ok(DerivativeReport {
        point: a,
        loss,
        gradient: g,
        gradient_sweep,
        hessian_sweep,
        symmetry_defect: hout.symmetry_defect(),
        tapes: hout.tapes,
        comparisons,
    })
}

/// Writes an OBJ per row of `positions.csv` in `trajectory_dir` into `out`.
pub fn export(sc: &Scenario, trajectory_dir: &Path, out: &Path) -> Result<usize> {
    let positions = io::read_frames(&trajectory_dir.join("positions.csv"))?;
    io::write_obj_sequence(out, &sc.sim.mesh, &positions)
}
