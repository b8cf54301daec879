//! Per-frame problem when only the fading law is known.
//!
//! A node fixes its airtime `tau` before the frame and adapts power and
//! payload to the realised fading coefficient `theta >= theta_tx`. At fixed
//! `tau` the policy spends the whole budget where it can:
//!
//! * capped: even at `p_max` the budget is not exhausted,
//! * normal: a power in `[p_min, p_max)` exhausts the budget,
//! * underuse: `p_min` is forced and the payload shrinks to what processing
//!   can still afford.
//!
//! The policy power is non-increasing in `theta`, so the regimes appear in
//! that order and their boundaries have closed forms. Expected distortion is
//! integrated over the fading excess `t = theta - theta_tx`, which is a unit
//! exponential given transmission, on panels split at the regime boundaries.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use crate::frame::{Binding, FrameSolution, NodeAllocation, PowerAssignment, SolverConfig};
use crate::full_csi::solve_fop_full_csi;
use crate::model::{payload_distortion, Fading, FrameNode};
use crate::numeric::{adaptive_gl, bisect_log, golden_section_min};

pub use crate::model::theta_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Capped,
    Normal,
    Underuse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyPoint {
    pub power: f64,
    pub l_bits: f64,
    pub regime: Regime,
}

/// Closed-form description of the policy for one node, budget and airtime.
#[derive(Debug, Clone, Copy)]
struct Slot {
    h0: f64,
    w: f64,
    tau: f64,
    l0: f64,
    /// Processing energy per bit.
    s: f64,
    eta_a: f64,
    p_min: f64,
    p_max: f64,
    /// Budget left for processing the payload and radiating.
    r: f64,
    /// `theta` up to which `p_max` is affordable.
    theta_cap: f64,
    /// `theta` beyond which `p_min` is forced.
    theta_under: f64,
    /// `theta` beyond which the whole original payload is sent.
    theta_full: f64,
    /// Power that sends the whole payload while exhausting the budget.
    p_full: f64,
}

impl Slot {
    fn new(node: &FrameNode, e_budget: f64, tau: f64) -> Option<Slot> {
        let radio = &node.radio;
        let r = e_budget - radio.beta_const - node.processing_offset() - radio.e_c_rate * tau;
        if !(tau > 0.0) || r - tau * radio.p_min / radio.eta_a < 0.0 {
            return None;
        }
        let s = node.compression.e0_alpha;
        let l0 = node.l0;
        let h0 = node.h0;
        let bits_per_log = tau * node.w / LN_2;
        // theta at which s * tau * r_theta(p) equals `rest`.
        let crossing = |rest: f64, p: f64| -> f64 {
            if s <= 0.0 || s * l0 <= rest {
                f64::INFINITY
            } else {
                (rest / (s * bits_per_log)).exp_m1() / (h0 * p)
            }
        };
        let r_cap = r - tau * radio.p_max / radio.eta_a;
        let theta_cap = if r_cap < 0.0 { f64::NEG_INFINITY } else { crossing(r_cap, radio.p_max) };
        let theta_under = crossing(r - tau * radio.p_min / radio.eta_a, radio.p_min);
        let p_full = radio.eta_a * (r - s * l0) / tau;
        let theta_full = if theta_under.is_finite() {
            f64::INFINITY
        } else {
            (l0 / bits_per_log).exp_m1() / (h0 * p_full.min(radio.p_max))
        };
        Some(Slot {
            h0,
            w: node.w,
            tau,
            l0,
            s,
            eta_a: radio.eta_a,
            p_min: radio.p_min,
            p_max: radio.p_max,
            r,
            theta_cap,
            theta_under,
            theta_full,
            p_full,
        })
    }

    fn capacity(&self, theta: f64, p: f64) -> f64 {
        self.tau * self.w * (self.h0 * theta * p).ln_1p() / LN_2
    }

    fn point(&self, theta: f64) -> PolicyPoint {
        if theta > self.theta_under {
            return PolicyPoint {
                power: self.p_min,
                l_bits: (self.r - self.tau * self.p_min / self.eta_a) / self.s,
                regime: Regime::Underuse,
            };
        }
        if theta <= self.theta_cap {
            return PolicyPoint {
                power: self.p_max,
                l_bits: self.capacity(theta, self.p_max).min(self.l0),
                regime: Regime::Capped,
            };
        }
        if theta >= self.theta_full {
            return PolicyPoint {
                power: self.p_full,
                l_bits: self.l0,
                regime: Regime::Normal,
            };
        }
        let p = self.normal_power(theta);
        PolicyPoint {
            power: p,
            l_bits: self.capacity(theta, p).min(self.l0),
            regime: Regime::Normal,
        }
    }

    /// Root of `s * tau * r_theta(p) + tau p / eta_a = r` on `[p_min, p_max]`.
    ///
    /// The residual is concave and increasing, so Newton from the left end
    /// climbs monotonically to the root.
    fn normal_power(&self, theta: f64) -> f64 {
        let h = self.h0 * theta;
        let k = self.s * self.tau * self.w / LN_2;
        let c = self.tau / self.eta_a;
        let mut p = self.p_min;
        for _ in 0..100 {
            let f = k * (h * p).ln_1p() + c * p - self.r;
            let df = k * h / (1.0 + h * p) + c;
            let step = f / df;
            let next = (p - step).min(self.p_max);
            if (next - p).abs() <= 1e-15 * p {
                return next;
            }
            p = next;
        }
        p
    }

    fn distortion(&self, theta: f64, node: &FrameNode) -> f64 {
        payload_distortion(self.point(theta).l_bits, self.l0, &node.compression)
    }

    /// Distortion once the fading is strong enough that it no longer changes.
    fn limit_distortion(&self, node: &FrameNode) -> f64 {
        if self.theta_under.is_finite() {
            self.distortion(f64::INFINITY, node)
        } else {
            0.0
        }
    }

    fn expected_distortion(&self, node: &FrameNode, rel_tol: f64) -> f64 {
        let t0 = node.theta_tx;
        let limit = self.limit_distortion(node);
        let tail = (self.theta_under.min(self.theta_full) - t0).max(0.0);
        let end = tail.min(TRUNCATION);
        let mut cuts: Vec<f64> = PANEL_EDGES.iter().copied().filter(|&t| t < end).collect();
        let cap = self.theta_cap - t0;
        if cap > 0.0 && cap < end {
            cuts.push(cap);
        }
        cuts.push(end);
        cuts.sort_by(f64::total_cmp);
        let f = |t: f64| (-t).exp() * self.distortion(t0 + t, node);
        let mut total = 0.0;
        let mut a = 0.0;
        for &b in &cuts {
            total += adaptive_gl(f, a, b, rel_tol, 1e-15);
            a = b;
        }
        let rest = if tail <= TRUNCATION {
            limit
        } else {
            // Monotone in theta: the remainder lies between the two ends.
            0.5 * (limit + self.distortion(t0 + TRUNCATION, node))
        };
        total + (-end).exp() * rest
    }
}

/// Fading excess beyond which the remaining probability mass (1e-12) is
/// bounded rather than integrated.
const TRUNCATION: f64 = 27.631_021_115_928_547;

const PANEL_EDGES: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Power and payload the policy selects at fading `theta`; `None` when the
/// budget cannot even keep the transmitter on for `tau`.
pub fn power_policy_at(theta: f64, tau: f64, e_budget: f64, node: &FrameNode) -> Option<PolicyPoint> {
    Slot::new(node, e_budget, tau).map(|s| s.point(theta))
}

/// Distortion of the policy at fading `theta`; infinite when infeasible.
pub fn delta(theta: f64, tau: f64, e_budget: f64, node: &FrameNode) -> f64 {
    Slot::new(node, e_budget, tau).map_or(f64::INFINITY, |s| s.distortion(theta, node))
}

/// Distortion averaged over the channels the node transmits on.
pub fn expected_distortion(tau: f64, e_budget: f64, node: &FrameNode, cfg: &SolverConfig) -> f64 {
    Slot::new(node, e_budget, tau).map_or(f64::INFINITY, |s| s.expected_distortion(node, cfg.quad_rel_tol))
}

/// The fading-adaptive power policy chosen for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicy {
    pub node: FrameNode,
    pub tau: f64,
    pub e_budget: f64,
}

impl PowerPolicy {
    pub fn at(&self, theta: f64) -> Option<PolicyPoint> {
        power_policy_at(theta, self.tau, self.e_budget, &self.node)
    }

    pub fn distortion_at(&self, theta: f64) -> f64 {
        delta(theta, self.tau, self.e_budget, &self.node)
    }

    /// Energy drawn by the policy at `theta`.
    pub fn energy_at(&self, theta: f64) -> Option<f64> {
        self.at(theta).map(|p| self.node.energy(p.power, self.tau, p.l_bits))
    }

    /// Largest energy drawn over all channels.
    pub fn max_energy(&self) -> f64 {
        match Slot::new(&self.node, self.e_budget, self.tau) {
            None => f64::INFINITY,
            Some(s) if s.theta_under.is_finite() => self.e_budget,
            Some(s) => self.node.energy(s.p_full.min(s.p_max), self.tau, s.l0),
        }
    }
}

// ---------------------------------------------------------------------------
// Airtime search

/// Airtimes over which the threshold is met at the worst channel served.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauWindow {
    pub tau_low: f64,
    pub tau_min: f64,
    pub tau_high: f64,
    pub delta_min: f64,
}

/// Window and lazily evaluated expected distortions for one node and budget.
#[derive(Debug, Clone)]
pub struct NodeProfile {
    node: FrameNode,
    energy: f64,
    quad_rel_tol: f64,
    tol_golden: f64,
    window: Result<TauWindow, Binding>,
    taus: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    dbar: Vec<f64>,
    refined: HashMap<(usize, u64), f64>,
    minimum_added: bool,
}

impl NodeProfile {
    pub fn new(node: &FrameNode, energy: f64, t_frame: f64, cfg: &SolverConfig) -> Self {
        let window = tau_window(node, energy, t_frame, cfg);
        let mut taus = Vec::new();
        if let Ok(w) = &window {
            taus.push(w.tau_low);
            let l_min = node.bits_for_distortion(node.d_th);
            let start = l_min / crate::model::shannon_rate(node.h0 * node.theta_tx, node.radio.p_max, node.w);
            let n = cfg.tau_grid_points.max(2);
            let step = (t_frame / start).ln() / (n - 1) as f64;
            for i in 0..n {
                let t = start * (step * i as f64).exp();
                if t > w.tau_low && t <= w.tau_high {
                    taus.push(t);
                }
            }
        }
        let m = taus.len();
        NodeProfile {
            node: *node,
            energy,
            quad_rel_tol: cfg.quad_rel_tol,
            tol_golden: cfg.tol_golden,
            window,
            upper: vec![f64::NAN; m],
            lower: vec![f64::NAN; m],
            dbar: vec![f64::NAN; m],
            refined: HashMap::new(),
            minimum_added: false,
            taus,
        }
    }

    pub fn window(&self) -> Result<TauWindow, Binding> {
        self.window
    }

    pub fn candidates(&self) -> &[f64] {
        &self.taus
    }

    /// Expected distortion at candidate `j`.
    pub fn dbar_at(&mut self, j: usize) -> f64 {
        if self.dbar[j].is_nan() {
            self.dbar[j] = self.dbar(self.taus[j]);
        }
        self.dbar[j]
    }

    fn dbar(&self, tau: f64) -> f64 {
        Slot::new(&self.node, self.energy, tau)
            .map_or(f64::INFINITY, |s| s.expected_distortion(&self.node, self.quad_rel_tol))
    }

    fn bounds(&mut self, j: usize) -> (f64, f64) {
        if self.upper[j].is_nan() {
            match Slot::new(&self.node, self.energy, self.taus[j]) {
                Some(s) => {
                    self.upper[j] = s.distortion(self.node.theta_tx, &self.node);
                    self.lower[j] = s.limit_distortion(&self.node);
                }
                None => {
                    self.upper[j] = f64::INFINITY;
                    self.lower[j] = f64::INFINITY;
                }
            }
        }
        (self.lower[j], self.upper[j])
    }

    /// First candidate whose expected distortion is at most `target`.
    ///
    /// Targets just above the smallest expected distortion are met only on a
    /// short airtime interval that can fall between candidates, so a failed
    /// scan adds the exact minimiser once and scans again.
    pub fn first_meeting(&mut self, target: f64) -> Option<usize> {
        match self.scan(target) {
            None if !self.minimum_added => {
                self.add_minimum();
                self.scan(target)
            }
            found => found,
        }
    }

    fn scan(&mut self, target: f64) -> Option<usize> {
        for j in 0..self.taus.len() {
            let (lo, hi) = self.bounds(j);
            if hi <= target {
                return Some(j);
            }
            // The lower bound grows with tau, so nothing further can qualify.
            if lo > target {
                return None;
            }
            // A zero average needs zero distortion already at the threshold.
            if target > 0.0 && self.dbar_at(j) <= target {
                return Some(j);
            }
        }
        None
    }

    /// Inserts the minimiser of the expected distortion, refined by golden
    /// section between the neighbours of the best candidate.
    fn add_minimum(&mut self) {
        self.minimum_added = true;
        let mut best = (f64::INFINITY, None);
        for j in 0..self.taus.len() {
            let (lo, _) = self.bounds(j);
            if lo >= best.0 {
                break;
            }
            let d = self.dbar_at(j);
            if d < best.0 {
                best = (d, Some(j));
            }
        }
        let (d_best, Some(j)) = best else { return };
        let a = self.taus[j.saturating_sub(1)];
        let b = self.taus[(j + 1).min(self.taus.len() - 1)];
        if !(b > a) {
            return;
        }
        let (y, d) = golden_section_min(|y| self.dbar(y.exp()), a.ln(), b.ln(), self.tol_golden, 200);
        let tau = y.exp();
        if !(d < d_best) || self.taus.contains(&tau) {
            return;
        }
        let at = self.taus.partition_point(|&t| t < tau);
        self.taus.insert(at, tau);
        self.upper.insert(at, f64::NAN);
        self.lower.insert(at, f64::NAN);
        self.dbar.insert(at, d);
        // Indices past the insertion point have shifted.
        self.refined.clear();
    }

    /// Bracket `(lower, upper)` on the smallest airtime meeting `target`,
    /// given the candidate index from [`Self::first_meeting`].
    pub fn bracket(&self, j: usize) -> (f64, f64) {
        if j == 0 {
            (self.taus[0], self.taus[0])
        } else {
            (self.taus[j - 1], self.taus[j])
        }
    }

    /// Smallest airtime meeting `target` near candidate `j`, by bisection
    /// between `j - 1` and `j`.
    pub fn refine(&mut self, j: usize, target: f64) -> f64 {
        if j == 0 {
            return self.taus[0];
        }
        if let Some(&t) = self.refined.get(&(j, target.to_bits())) {
            return t;
        }
        let (a, b) = (self.taus[j - 1], self.taus[j]);
        let iters = ((b - a) / (b * 1e-9)).log2().ceil().max(1.0) as usize;
        let (_, t) = crate::numeric::bisect(|t| self.dbar(t) <= target, a, b, iters);
        self.refined.insert((j, target.to_bits()), t);
        t
    }

    /// Smallest expected distortion over the airtime window.
    pub fn min_dbar(&mut self) -> f64 {
        if !self.minimum_added {
            self.add_minimum();
        }
        let mut best = f64::INFINITY;
        for j in 0..self.taus.len() {
            let (lo, hi) = self.bounds(j);
            if lo >= best {
                break;
            }
            best = best.min(self.dbar_at(j).min(hi));
        }
        best
    }
}

fn tau_window(node: &FrameNode, energy: f64, t_frame: f64, cfg: &SolverConfig) -> Result<TauWindow, Binding> {
    let id = node.id;
    if node.h0 * node.theta_tx <= 0.0 {
        return Err(Binding::NoChannel { id });
    }
    let radio = &node.radio;
    let spare = energy - radio.beta_const - node.processing_offset();
    if spare <= 0.0 {
        return Err(Binding::Energy { id });
    }
    let tau_top = t_frame.min(spare / (radio.p_min / radio.eta_a + radio.e_c_rate));
    let tau_floor = tau_top * 1e-12;
    let at_tx = |tau: f64| delta(node.theta_tx, tau, energy, node);
    let (y_min, delta_min) = golden_section_min(|y| at_tx(y.exp()), tau_floor.ln(), tau_top.ln(), cfg.tol_golden, 400);
    let tau_min = y_min.exp();
    if !(delta_min <= node.d_th) {
        return Err(Binding::Distortion { id });
    }
    let meets = |tau: f64| at_tx(tau) <= node.d_th;
    let tau_low = if meets(tau_floor) {
        tau_floor
    } else {
        bisect_log(meets, tau_floor, tau_min, 64).1
    };
    let tau_high = if meets(tau_top) {
        tau_top
    } else {
        bisect_log(|t| !meets(t), tau_min, tau_top, 64).0
    };
    Ok(TauWindow {
        tau_low,
        tau_min,
        tau_high,
        delta_min,
    })
}

/// Smallest airtime at which a lone node reaches `gamma * d_th` on average.
pub fn tau_search(gamma: f64, e_budget: f64, node: &FrameNode, t_frame: f64, cfg: &SolverConfig) -> Option<f64> {
    let mut profile = NodeProfile::new(node, e_budget, t_frame, cfg);
    profile.window().ok()?;
    let target = gamma * node.d_th;
    let j = profile.first_meeting(target)?;
    Some(profile.refine(j, target))
}

// ---------------------------------------------------------------------------
// Frame solver

/// Feasibility of `gamma` given per-node profiles; on success the per-node
/// candidate indices.
pub fn check_gamma(profiles: &mut [&mut NodeProfile], gamma: f64, t_frame: f64) -> Result<Vec<usize>, Binding> {
    let mut idx = Vec::with_capacity(profiles.len());
    let (mut lo_sum, mut hi_sum) = (0.0, 0.0);
    for p in profiles.iter_mut() {
        let target = gamma * p.node.d_th;
        let j = p.first_meeting(target).ok_or(Binding::Energy { id: p.node.id })?;
        let (a, b) = p.bracket(j);
        lo_sum += a;
        hi_sum += b;
        idx.push(j);
    }
    if hi_sum <= t_frame {
        return Ok(idx);
    }
    if lo_sum > t_frame {
        return Err(Binding::FrameTime { total_tau: lo_sum });
    }
    let total: f64 = profiles
        .iter_mut()
        .zip(&idx)
        .map(|(p, &j)| {
            let target = gamma * p.node.d_th;
            p.refine(j, target)
        })
        .sum();
    if total > t_frame {
        return Err(Binding::FrameTime { total_tau: total });
    }
    Ok(idx)
}

/// Smallest normalised expected distortion reachable in the frame, using
/// (and filling) the caller's profiles, one per node.
pub fn solve_with_profiles(
    profiles: &mut [&mut NodeProfile],
    t_frame: f64,
    cfg: &SolverConfig,
) -> FrameSolution {
    for p in profiles.iter() {
        if let Err(b) = p.window() {
            return FrameSolution::infeasible(b);
        }
    }
    let found = crate::frame::bisect_gamma(|g| check_gamma(profiles, g, t_frame), cfg);
    let (gamma, idx, binding) = match found {
        Err(b) => return FrameSolution::infeasible(b),
        Ok(x) => x,
    };
    let allocations: Vec<NodeAllocation> = profiles
        .iter_mut()
        .zip(idx)
        .map(|(p, j)| {
            let tau = p.refine(j, gamma * p.node.d_th);
            let policy = PowerPolicy {
                node: p.node,
                tau,
                e_budget: p.energy,
            };
            let at_tx = policy.at(p.node.theta_tx).expect("policy feasible inside the window");
            NodeAllocation {
                id: p.node.id,
                tau,
                power: PowerAssignment::Policy(policy),
                l_bits: at_tx.l_bits,
                distortion: p.dbar(tau),
                e_used: policy.max_energy(),
            }
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

/// Statistical frame solver. Without fading it reduces to the full-CSI solver.
pub fn solve_fop_statistical(energies: &[f64], nodes: &[FrameNode], t_frame: f64, cfg: &SolverConfig) -> FrameSolution {
    if nodes.iter().all(|n| n.fading == Fading::None) {
        let gains: Vec<f64> = nodes.iter().map(|n| n.h0).collect();
        return solve_fop_full_csi(energies, nodes, &gains, t_frame, cfg);
    }
    let mut owned: Vec<NodeProfile> = nodes
        .iter()
        .zip(energies)
        .map(|(n, &e)| NodeProfile::new(n, e, t_frame, cfg))
        .collect();
    let mut refs: Vec<&mut NodeProfile> = owned.iter_mut().collect();
    solve_with_profiles(&mut refs, t_frame, cfg)
}

/// Fixed power sized for the worst channel served: the full-CSI solver at
/// gain `h0 * theta_tx`.
pub fn solve_fop_suboptimal(energies: &[f64], nodes: &[FrameNode], t_frame: f64, cfg: &SolverConfig) -> FrameSolution {
    let gains: Vec<f64> = nodes.iter().map(worst_gain).collect();
    solve_fop_full_csi(energies, nodes, &gains, t_frame, cfg)
}

/// Gain of the worst channel a node must serve.
pub fn worst_gain(node: &FrameNode) -> f64 {
    match node.fading {
        Fading::None => node.h0,
        Fading::Rayleigh => node.h0 * node.theta_tx,
    }
}
