//! Per-frame problem with known channel gains.
//!
//! For a trial normalised distortion `gamma`, every node sends the smallest
//! payload that meets `gamma * d_th` and picks the largest power its energy
//! allows. The energy per bit `g(x) = (x/eta_a + e_c) / log2(1 + h x)` is
//! decreasing then increasing in the power `x`, so the largest feasible power
//! sits on the increasing branch. `gamma` is then bisected on the frame-time
//! constraint.

use crate::error::{domain, Result};
use crate::frame::{Binding, FrameSolution, NodeAllocation, PowerAssignment, SolverConfig};
use crate::model::FrameNode;
use crate::numeric::golden_section_min;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFunctionContext {
    pub h: f64,
    pub eta_a: f64,
    pub e_c_rate: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl GFunctionContext {
    pub fn new(node: &FrameNode, h: f64) -> Self {
        GFunctionContext {
            h,
            eta_a: node.radio.eta_a,
            e_c_rate: node.radio.e_c_rate,
            p_min: node.radio.p_min,
            p_max: node.radio.p_max,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        (x / self.eta_a + self.e_c_rate) * std::f64::consts::LN_2 / (self.h * x).ln_1p()
    }
}

/// Energy per bit-per-hertz at power `x > 0`.
pub fn g_value(x: f64, ctx: &GFunctionContext) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain("power", x));
    }
    Ok(ctx.eval(x))
}

const MAX_EXPANSIONS: usize = 12;

/// Minimiser of `g` and its value, by golden section in `ln x`.
pub fn find_g_minimum(ctx: &GFunctionContext) -> (f64, f64) {
    find_g_minimum_tol(ctx, 1e-9)
}

pub fn find_g_minimum_tol(ctx: &GFunctionContext, rel_tol: f64) -> (f64, f64) {
    if ctx.h <= 0.0 {
        return (ctx.p_max, f64::INFINITY);
    }
    let mut lo = (ctx.p_min * 1e-3).ln();
    let mut hi = (ctx.p_max * 1e3).ln();
    let f = |y: f64| ctx.eval(y.exp());
    let mut best = golden_section_min(f, lo, hi, rel_tol, 400);
    for _ in 0..MAX_EXPANSIONS {
        let edge = 1e3 * rel_tol;
        if best.0 - lo < edge {
            hi = lo + 1.0;
            lo -= 3.0 * std::f64::consts::LN_10;
        } else if hi - best.0 < edge {
            lo = hi - 1.0;
            hi += 3.0 * std::f64::consts::LN_10;
        } else {
            break;
        }
        best = golden_section_min(f, lo, hi, rel_tol, 400);
    }
    (best.0.exp(), best.1)
}

/// Which branch of the power search produced the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerCase {
    /// The energy curve crosses the budget line inside `[x_min, p_max]`.
    Intersection,
    /// `g` is still decreasing at `p_max`.
    MinimumBeyondMax,
    /// `g(p_max)` is below the budget line.
    BeyondMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerFailure {
    /// Nothing is left after processing and the per-frame constant.
    NoEnergy,
    /// Even the most efficient power overspends.
    AboveCurve,
    /// The largest affordable power is below `p_min`.
    BelowMinimum,
    NoChannel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSolution {
    pub p_star: f64,
    pub case: PowerCase,
    pub l_bits: f64,
    pub tau: f64,
}

/// Largest affordable power for a node at normalised distortion `gamma`.
pub fn solve_power(
    gamma: f64,
    e_budget: f64,
    node: &FrameNode,
    h: f64,
) -> std::result::Result<PowerSolution, PowerFailure> {
    let ctx = GFunctionContext::new(node, h);
    solve_power_with(gamma, e_budget, node, &ctx, find_g_minimum(&ctx), 1e-9)
}

/// [`solve_power`] with a precomputed minimum of `g`.
pub fn solve_power_with(
    gamma: f64,
    e_budget: f64,
    node: &FrameNode,
    ctx: &GFunctionContext,
    (x_min, g_min): (f64, f64),
    tol_power: f64,
) -> std::result::Result<PowerSolution, PowerFailure> {
    if ctx.h <= 0.0 {
        return Err(PowerFailure::NoChannel);
    }
    let l_bits = node.bits_for_distortion(gamma * node.d_th);
    let avail = e_budget - node.compression.e0_alpha * l_bits - node.processing_offset() - node.radio.beta_const;
    if avail <= 0.0 || l_bits <= 0.0 {
        return Err(PowerFailure::NoEnergy);
    }
    let rhs = node.w * avail / l_bits;
    if g_min > rhs {
        return Err(PowerFailure::AboveCurve);
    }
    let g_pmax = ctx.eval(ctx.p_max);
    let (p_star, case) = if x_min >= ctx.p_max {
        if g_pmax > rhs {
            return Err(PowerFailure::AboveCurve);
        }
        (ctx.p_max, PowerCase::MinimumBeyondMax)
    } else if g_pmax <= rhs {
        (ctx.p_max, PowerCase::BeyondMax)
    } else {
        // g is increasing on [x_min, p_max]; keep the feasible end.
        let (mut lo, mut hi) = (x_min, ctx.p_max);
        while hi - lo > tol_power {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ctx.eval(mid) <= rhs {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, PowerCase::Intersection)
    };
    if p_star < ctx.p_min {
        return Err(PowerFailure::BelowMinimum);
    }
    let tau = l_bits / crate::model::shannon_rate(ctx.h, p_star, node.w);
    Ok(PowerSolution {
        p_star,
        case,
        l_bits,
        tau,
    })
}

fn binding_of(failure: PowerFailure, id: usize) -> Binding {
    match failure {
        PowerFailure::NoEnergy | PowerFailure::AboveCurve => Binding::Energy { id },
        PowerFailure::BelowMinimum => Binding::PowerFloor { id },
        PowerFailure::NoChannel => Binding::NoChannel { id },
    }
}

/// A frame prepared for repeated feasibility checks.
pub struct FullCsiFrame<'a> {
    nodes: &'a [FrameNode],
    energies: &'a [f64],
    ctxs: Vec<GFunctionContext>,
    minima: Vec<(f64, f64)>,
    t_frame: f64,
    tol_power: f64,
}

impl<'a> FullCsiFrame<'a> {
    /// `gains[i]` is the gain assumed for node `i`.
    pub fn new(nodes: &'a [FrameNode], gains: &[f64], energies: &'a [f64], t_frame: f64, cfg: &SolverConfig) -> Self {
        assert_eq!(nodes.len(), gains.len());
        assert_eq!(nodes.len(), energies.len());
        let ctxs: Vec<_> = nodes.iter().zip(gains).map(|(n, &h)| GFunctionContext::new(n, h)).collect();
        let minima = ctxs.iter().map(|c| find_g_minimum_tol(c, cfg.tol_golden)).collect();
        FullCsiFrame {
            nodes,
            energies,
            ctxs,
            minima,
            t_frame,
            tol_power: cfg.tol_power,
        }
    }

    /// Per-node power solutions at `gamma`, or the constraint that fails.
    pub fn check(&self, gamma: f64) -> std::result::Result<Vec<PowerSolution>, Binding> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut total = 0.0;
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            let sol = solve_power_with(gamma, self.energies[i], node, &self.ctxs[i], self.minima[i], self.tol_power)
                .map_err(|f| binding_of(f, node.id))?;
            total += sol.tau;
            out.push(sol);
        }
        if total > self.t_frame {
            return Err(Binding::FrameTime { total_tau: total });
        }
        Ok(out)
    }

    pub fn feasible(&self, gamma: f64) -> bool {
        self.check(gamma).is_ok()
    }

    pub fn solve(&self, cfg: &SolverConfig) -> FrameSolution {
        match crate::frame::bisect_gamma(|g| self.check(g), cfg) {
            Err(b) => FrameSolution::infeasible(b),
            Ok((gamma, sols, binding)) => self.assemble(gamma, sols, binding),
        }
    }

    fn assemble(&self, gamma: f64, sols: Vec<PowerSolution>, binding: Option<Binding>) -> FrameSolution {
        let allocations: Vec<NodeAllocation> = self
            .nodes
            .iter()
            .zip(sols)
            .map(|(node, s)| NodeAllocation {
                id: node.id,
                tau: s.tau,
                power: PowerAssignment::Fixed(s.p_star),
                l_bits: s.l_bits,
                distortion: gamma * node.d_th,
                e_used: node.energy(s.p_star, s.tau, s.l_bits),
            })
            .collect();
        FrameSolution {
            feasible: true,
            gamma_star: gamma,
            total_tau: allocations.iter().map(|a| a.tau).sum(),
            allocations,
            binding,
        }
    }
}

/// Whether every node meets `gamma * d_th` and the airtimes fit in the frame.
pub fn fop_feasible_at_gamma(
    gamma: f64,
    energies: &[f64],
    nodes: &[FrameNode],
    gains: &[f64],
    t_frame: f64,
    cfg: &SolverConfig,
) -> bool {
    FullCsiFrame::new(nodes, gains, energies, t_frame, cfg).feasible(gamma)
}

/// Smallest normalised distortion reachable in the frame.
pub fn solve_fop_full_csi(
    energies: &[f64],
    nodes: &[FrameNode],
    gains: &[f64],
    t_frame: f64,
    cfg: &SolverConfig,
) -> FrameSolution {
    FullCsiFrame::new(nodes, gains, energies, t_frame, cfg).solve(cfg)
}
