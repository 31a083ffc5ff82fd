//! Reverse-mode AD over [`CScalar`] values.
//!
//! A recording installs a fresh tape on the current thread; every operation on
//! [`Var`]s appends a node with its complex local partials. The reverse sweep
//! propagates complex adjoints: real parts are the gradient, and when one
//! input carried an imaginary perturbation `ih`, imaginary parts divided by
//! `h` are the matching Hessian column.
//!
//! One tape per thread; tapes are independent and may be swept anywhere.

mod driver;
mod fat;
mod var;

pub use driver::{gradient, hessian, hessian_column, ColumnOutput, GradientOutput, HessianOutput};
pub use var::Var;

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::scalar::CScalar;

pub const DEFAULT_NODE_BUDGET: usize = 50_000_000;

pub(crate) const CONST_IDX: u32 = u32::MAX;

/// Reverse rule of a vector/matrix node. `out_adj` are the adjoints of the
/// node's outputs; contributions are accumulated into `adj`, which covers
/// every node recorded before it.
pub(crate) trait FatRule: Send {
    fn backprop(&self, out_adj: &[CScalar], adj: &mut [CScalar]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input,
    Unary,
    Binary,
    /// First output of a fat node, owning rule `rule` with `outputs` outputs.
    Fat { rule: u32, outputs: u32 },
    /// Subsequent outputs of a fat node.
    FatOutput,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    kind: NodeKind,
    parents: [u32; 2],
    partials: [CScalar; 2],
}

pub(crate) struct TapeData {
    nodes: Vec<Node>,
    values: Vec<CScalar>,
    rules: Vec<Box<dyn FatRule>>,
    inputs: Vec<u32>,
    error: Option<Error>,
    budget: usize,
}

thread_local! {
    static ACTIVE: RefCell<Option<TapeData>> = const { RefCell::new(None) };
    static RECORDED: Cell<usize> = const { Cell::new(0) };
}

/// Number of tapes recorded on the current thread so far.
pub fn tapes_recorded_on_thread() -> usize {
    RECORDED.with(|c| c.get())
}

pub fn is_recording() -> bool {
    ACTIVE.with(|a| a.borrow().is_some())
}

impl TapeData {
    fn new(budget: usize) -> Self {
        TapeData {
            nodes: Vec::new(),
            values: Vec::new(),
            rules: Vec::new(),
            inputs: Vec::new(),
            error: None,
            budget,
        }
    }

    fn over_budget(&mut self, extra: usize) -> bool {
        if self.nodes.len() + extra > self.budget {
            if self.error.is_none() {
                self.error = Some(Error::TapeBudget { budget: self.budget });
            }
            return true;
        }
        false
    }

    fn push(&mut self, kind: NodeKind, parents: [u32; 2], partials: [CScalar; 2], val: CScalar) -> Var {
        if self.over_budget(1) {
            return Var::constant(val);
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { kind, parents, partials });
        self.values.push(val);
        Var::from_parts(idx, val)
    }

    fn push_fat(&mut self, rule: Box<dyn FatRule>, outputs: &[CScalar]) -> Vec<Var> {
        if outputs.is_empty() {
            return Vec::new();
        }
        if self.over_budget(outputs.len()) {
            return outputs.iter().map(|&v| Var::constant(v)).collect();
        }
        let rid = self.rules.len() as u32;
        self.rules.push(rule);
        let start = self.nodes.len() as u32;
        let none = [CScalar::ZERO; 2];
        for (k, &v) in outputs.iter().enumerate() {
            let kind = if k == 0 {
                NodeKind::Fat { rule: rid, outputs: outputs.len() as u32 }
            } else {
                NodeKind::FatOutput
            };
            self.nodes.push(Node { kind, parents: [CONST_IDX; 2], partials: none });
            self.values.push(v);
        }
        outputs
            .iter()
            .enumerate()
            .map(|(k, &v)| Var::from_parts(start + k as u32, v))
            .collect()
    }

    fn flag_domain(&mut self, op: &'static str, value: f64) {
        if self.error.is_none() {
            self.error = Some(Error::TapeDomain { node: self.nodes.len(), op, value });
        }
    }
}

pub(crate) fn with_tape<R>(f: impl FnOnce(&mut TapeData) -> R) -> R {
    ACTIVE.with(|a| {
        let mut b = a.borrow_mut();
        let t = b.as_mut().expect("tape variable used outside an active recording");
        f(t)
    })
}

pub(crate) fn flag_domain(op: &'static str, value: f64) {
    ACTIVE.with(|a| {
        if let Some(t) = a.borrow_mut().as_mut() {
            t.flag_domain(op, value);
        }
    });
}

/// Registers a new independent variable on the active tape.
///
/// # Panics
/// When no recording is active on this thread.
pub fn input(value: CScalar) -> Var {
    with_tape(|t| {
        let v = t.push(NodeKind::Input, [CONST_IDX; 2], [CScalar::ZERO; 2], value);
        if !v.is_constant() {
            t.inputs.push(v.index().unwrap() as u32);
        }
        v
    })
}

/// A finished recording.
pub struct Tape {
    data: TapeData,
}

/// Complex adjoints of every node of a tape.
#[derive(Clone, Debug)]
pub struct AdjointSet {
    adj: Vec<CScalar>,
}

impl AdjointSet {
    pub fn get(&self, v: Var) -> CScalar {
        match v.index() {
            Some(i) => self.adj[i],
            None => CScalar::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }
}

struct ClearOnDrop;

impl Drop for ClearOnDrop {
    fn drop(&mut self) {
        ACTIVE.with(|a| {
            a.borrow_mut().take();
        });
    }
}

impl Tape {
    /// Runs `f` with a fresh tape installed on this thread.
    pub fn record<R>(f: impl FnOnce() -> R) -> Result<(R, Tape)> {
        Self::record_with_budget(DEFAULT_NODE_BUDGET, f)
    }

    pub fn record_with_budget<R>(budget: usize, f: impl FnOnce() -> R) -> Result<(R, Tape)> {
        ACTIVE.with(|a| {
            let mut b = a.borrow_mut();
            if b.is_some() {
                return Err(Error::TapeBusy);
            }
            *b = Some(TapeData::new(budget));
            Ok(())
        })?;
        let guard = ClearOnDrop;
        let out = f();
        let data = ACTIVE.with(|a| a.borrow_mut().take()).expect("tape vanished during recording");
        drop(guard);
        RECORDED.with(|c| c.set(c.get() + 1));
        Ok((out, Tape { data }))
    }

    pub fn len(&self) -> usize {
        self.data.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nodes.is_empty()
    }

    pub fn inputs(&self) -> &[u32] {
        &self.data.inputs
    }

    pub fn value(&self, v: Var) -> CScalar {
        match v.index() {
            Some(i) => self.data.values[i],
            None => v.value(),
        }
    }

    pub fn error(&self) -> Option<&Error> {
        self.data.error.as_ref()
    }

    /// Node kinds and parent ids in recording order.
    pub fn structure(&self) -> Vec<(NodeKind, [u32; 2])> {
        self.data.nodes.iter().map(|n| (n.kind, n.parents)).collect()
    }

    /// Propagates adjoints from `output` (seeded with `1 + 0i`) back to the
    /// first node.
    pub fn reverse_sweep(&self, output: Var) -> Result<AdjointSet> {
        if let Some(e) = &self.data.error {
            return Err(e.clone());
        }
        let n = self.data.nodes.len();
        let mut adj = vec![CScalar::ZERO; n];
        let Some(out) = output.index() else {
            return Ok(AdjointSet { adj });
        };
        adj[out] = CScalar::ONE;
        let nodes = &self.data.nodes;
        for i in (0..=out).rev() {
            let node = &nodes[i];
            match node.kind {
                NodeKind::Input | NodeKind::FatOutput => {}
                NodeKind::Unary => {
                    let g = adj[i];
                    if g.re != 0.0 || g.im != 0.0 {
                        let p = node.parents[0] as usize;
                        adj[p] += node.partials[0] * g;
                    }
                }
                NodeKind::Binary => {
                    let g = adj[i];
                    if g.re != 0.0 || g.im != 0.0 {
                        let p0 = node.parents[0] as usize;
                        let p1 = node.parents[1] as usize;
                        adj[p0] += node.partials[0] * g;
                        adj[p1] += node.partials[1] * g;
                    }
                }
                NodeKind::Fat { rule, outputs } => {
                    let (lo, hi) = adj.split_at_mut(i);
                    let outs = &hi[..outputs as usize];
                    if outs.iter().any(|g| g.re != 0.0 || g.im != 0.0) {
                        self.data.rules[rule as usize].backprop(outs, lo);
                    }
                }
            }
        }
        Ok(AdjointSet { adj })
    }
}
