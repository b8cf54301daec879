//! Per-frame distortion as seen by the energy allocator.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{domain, Result};
use crate::frame::{Binding, FopMode, SolverConfig};
use crate::model::{ChannelModel, DeviceParams, FrameNode};
use crate::solver::FopSolver;

/// What the allocator needs from one frame solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    /// Optimal normalised distortion, infinite when infeasible.
    pub gamma: f64,
    pub total_tau: f64,
    pub binding: Option<Binding>,
}

impl FrameOutcome {
    pub fn feasible(&self) -> bool {
        self.gamma.is_finite()
    }
}

/// Frames come in `period()` classes; frame `k` belongs to class `k % period()`.
pub trait FrameOracle {
    fn n_nodes(&self) -> usize;
    fn period(&self) -> usize;
    fn budget(&self, node: usize) -> f64;
    fn t_frame(&self) -> f64;
    /// Energy above which the node's distortion cannot improve.
    fn e_cap(&self, node: usize, class: usize) -> f64;
    /// Joint solve of a frame of class `class`.
    fn solve(&self, class: usize, energies: &[f64]) -> FrameOutcome;
    /// Solve with `node` alone in the frame.
    fn solve_single(&self, node: usize, class: usize, energy: f64) -> FrameOutcome;
}

const MEMO_LIMIT: usize = 1 << 16;

type JointKey = (usize, Vec<u64>);
type SingleKey = (usize, usize, u64);

/// Oracle backed by the per-frame solvers, with memoised results.
#[derive(Debug)]
pub struct NetworkOracle {
    /// `frames[class][node]`.
    frames: Vec<Vec<FrameNode>>,
    budgets: Vec<f64>,
    t_frame: f64,
    solver: FopSolver,
    joint: RefCell<HashMap<JointKey, FrameOutcome>>,
    single: RefCell<HashMap<SingleKey, FrameOutcome>>,
}

impl NetworkOracle {
    pub fn new(
        devices: &[DeviceParams],
        channel: &ChannelModel,
        t_frame: f64,
        mode: FopMode,
        config: SolverConfig,
    ) -> Result<Self> {
        if !(t_frame > 0.0 && t_frame.is_finite()) {
            return Err(domain("t_frame", t_frame));
        }
        let period = devices.iter().map(DeviceParams::period).fold(1, lcm);
        let frames = (0..period)
            .map(|k| devices.iter().map(|d| FrameNode::new(d, channel, k)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkOracle {
            frames,
            budgets: devices.iter().map(|d| d.b0).collect(),
            t_frame,
            solver: FopSolver::new(mode, config),
            joint: RefCell::new(HashMap::new()),
            single: RefCell::new(HashMap::new()),
        })
    }

    pub fn mode(&self) -> FopMode {
        self.solver.mode
    }

    pub fn nodes(&self, class: usize) -> &[FrameNode] {
        &self.frames[class]
    }

    pub fn solver(&self) -> &FopSolver {
        &self.solver
    }

    fn outcome(sol: &crate::frame::FrameSolution) -> FrameOutcome {
        FrameOutcome {
            gamma: if sol.feasible { sol.gamma_star } else { f64::INFINITY },
            total_tau: if sol.feasible { sol.total_tau } else { f64::NAN },
            binding: sol.binding,
        }
    }
}

impl FrameOracle for NetworkOracle {
    fn n_nodes(&self) -> usize {
        self.budgets.len()
    }

    fn period(&self) -> usize {
        self.frames.len()
    }

    fn budget(&self, node: usize) -> f64 {
        self.budgets[node]
    }

    fn t_frame(&self) -> f64 {
        self.t_frame
    }

    fn e_cap(&self, node: usize, class: usize) -> f64 {
        let n = &self.frames[class][node];
        n.energy(n.radio.p_max, self.t_frame, n.l0) * (1.0 + 1e-9)
    }

    fn solve(&self, class: usize, energies: &[f64]) -> FrameOutcome {
        let key = (class, energies.iter().map(|e| e.to_bits()).collect::<Vec<_>>());
        if let Some(o) = self.joint.borrow().get(&key) {
            return *o;
        }
        let out = Self::outcome(&self.solver.solve(&self.frames[class], energies, self.t_frame));
        let mut memo = self.joint.borrow_mut();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, out);
        out
    }

    fn solve_single(&self, node: usize, class: usize, energy: f64) -> FrameOutcome {
        let key = (node, class, energy.to_bits());
        if let Some(o) = self.single.borrow().get(&key) {
            return *o;
        }
        let nodes = [self.frames[class][node]];
        let out = Self::outcome(&self.solver.solve(&nodes, &[energy], self.t_frame));
        let mut memo = self.single.borrow_mut();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, out);
        out
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
