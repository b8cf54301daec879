//! Alternate optimisation of the battery split: one node's row of the
//! energy matrix at a time, water-filled against the others, with the unused
//! residual spread at random over frames that cannot use it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::oracle::{FrameOracle, FrameOutcome};
use super::surrogate::{build_surrogate, FopSurrogate};
use super::waterfill::water_fill_grouped;
use crate::frame::Binding;

/// Whether slices are rebuilt from joint frame solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Start decoupled and switch once a frame nears time saturation.
    Auto,
    /// Each node's slice is its own single-node envelope raised to the others' level.
    Decoupled,
    /// Slices are sampled from joint solves every time a row is updated.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EapConfig {
    /// Energy samples per surrogate slice.
    pub samples: usize,
    /// Relative change of the mean distortion that ends the iteration.
    pub tol_conv: f64,
    pub max_sweeps: usize,
    pub coupling: Coupling,
    /// Fraction of the frame above which airtime counts as saturated.
    pub saturation: f64,
}

impl Default for EapConfig {
    fn default() -> Self {
        EapConfig {
            samples: 64,
            tol_conv: 1e-5,
            max_sweeps: 200,
            coupling: Coupling::Auto,
            saturation: 0.999,
        }
    }
}

/// Why a lifetime cannot be sustained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infeasibility {
    pub node: Option<usize>,
    pub binding: Option<Binding>,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.node, self.binding) {
            (Some(n), Some(b)) => write!(f, "node {n}: {b:?}"),
            (Some(n), None) => write!(f, "node {n}: battery too small"),
            (None, Some(b)) => write!(f, "{b:?}"),
            (None, None) => write!(f, "no feasible allocation"),
        }
    }
}

/// Battery split over a lifetime of `n` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySchedule {
    pub n: usize,
    /// `e[node][frame]`, joules.
    pub e: Vec<Vec<f64>>,
    /// Optimal normalised distortion of each frame.
    pub gamma: Vec<f64>,
    /// Airtime used in each frame.
    pub total_tau: Vec<f64>,
    /// Mean of `gamma` over the lifetime.
    pub d_mean: f64,
    /// Mean distortion after initialisation and after every sweep.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    /// Whether the final sweeps used joint slices.
    pub coupled: bool,
    /// Largest gap between a surrogate and its samples.
    pub max_gap: f64,
}

impl EnergySchedule {
    pub fn objective(&self, sigma: f64) -> f64 {
        objective(sigma, self.d_mean, self.n)
    }
}

/// Weighted trade-off value; lower is better.
pub fn objective(sigma: f64, d_mean: f64, n: usize) -> f64 {
    sigma * d_mean - (1.0 - sigma) * n as f64
}

/// Share of the battery kept back from the water-filling so that rounding
/// in long sums cannot overdraw it.
const BUDGET_MARGIN: f64 = 1e-9;

/// Energy allocator over one oracle; single-node envelopes are cached
/// across lifetimes.
pub struct Eap<'a, O: FrameOracle> {
    oracle: &'a O,
    cfg: EapConfig,
    envs: RefCell<HashMap<(usize, usize), Result<FopSurrogate, Infeasibility>>>,
}

struct State {
    e: Vec<Vec<f64>>,
    outcomes: Vec<FrameOutcome>,
    objective: f64,
}

impl<'a, O: FrameOracle> Eap<'a, O> {
    pub fn new(oracle: &'a O, cfg: EapConfig) -> Self {
        Eap {
            oracle,
            cfg,
            envs: RefCell::new(HashMap::new()),
        }
    }

    pub fn oracle(&self) -> &O {
        self.oracle
    }

    pub fn config(&self) -> &EapConfig {
        &self.cfg
    }

    /// Convex envelope of the node's distortion when alone in a frame of `class`.
    pub fn envelope(&self, node: usize, class: usize) -> Result<FopSurrogate, Infeasibility> {
        if let Some(r) = self.envs.borrow().get(&(node, class)) {
            return r.clone();
        }
        let o = self.oracle;
        let cap = o.e_cap(node, class);
        let f = |e: f64| {
            let out = o.solve_single(node, class, e);
            out.feasible().then_some(out.gamma)
        };
        let r = build_surrogate(f, cap, self.cfg.samples).ok_or_else(|| Infeasibility {
            node: Some(node),
            binding: o.solve_single(node, class, cap).binding,
        });
        if let Ok(s) = &r {
            if s.max_gap > 1e-6 {
                log::debug!("node {node} class {class}: convexification gap {:.3e}", s.max_gap);
            }
        }
        self.envs.borrow_mut().insert((node, class), r.clone());
        r
    }

    fn envelopes(&self) -> Result<Vec<Vec<FopSurrogate>>, Infeasibility> {
        (0..self.oracle.n_nodes())
            .map(|l| (0..self.oracle.period()).map(|c| self.envelope(l, c)).collect())
            .collect()
    }

    /// Energy a node needs to stay feasible for `n` frames.
    pub fn min_energy(&self, node: usize, n: usize) -> Result<f64, Infeasibility> {
        let p = self.oracle.period();
        let mut total = 0.0;
        for c in 0..p {
            total += class_count(n, p, c) as f64 * self.envelope(node, c)?.e_lower;
        }
        Ok(total)
    }

    /// Cheap necessary condition: every battery covers its per-frame minima.
    pub fn lifetime_feasible(&self, n: usize) -> Result<(), Infeasibility> {
        for l in 0..self.oracle.n_nodes() {
            if self.min_energy(l, n)? > self.oracle.budget(l) * (1.0 - BUDGET_MARGIN) {
                return Err(Infeasibility {
                    node: Some(l),
                    binding: Some(Binding::Energy { id: l }),
                });
            }
        }
        Ok(())
    }

    /// Allocation for a lifetime of `n` frames.
    pub fn random_alternate<R: Rng>(&self, n: usize, rng: &mut R) -> Result<EnergySchedule, Infeasibility> {
        assert!(n >= 1);
        let envs = self.envelopes()?;
        self.lifetime_feasible(n)?;
        let o = self.oracle;
        let nn = o.n_nodes();
        let p = o.period();
        let max_gap = envs.iter().flatten().map(|s| s.max_gap).fold(0.0, f64::max);

        let e: Vec<Vec<f64>> = (0..nn).map(|l| self.level_fill(&envs[l], n, o.budget(l))).collect();
        let mut coupled = self.cfg.coupling == Coupling::Coupled;
        let mut state = self.evaluate(e, &envs, coupled);
        if !coupled && self.cfg.coupling == Coupling::Auto && (!state.objective.is_finite() || self.saturated(&state)) {
            coupled = true;
            state = self.evaluate(state.e, &envs, true);
        }
        if !state.objective.is_finite() {
            let binding = state.outcomes.iter().find(|x| !x.feasible()).and_then(|x| x.binding);
            return Err(Infeasibility { node: None, binding });
        }

        let mut trace = vec![state.objective / n as f64];
        let mut sweeps = 0;
        while sweeps < self.cfg.max_sweeps {
            sweeps += 1;
            for l in 0..nn {
                let Some(row) = self.update_row(l, &state, &envs, coupled, p, rng) else {
                    continue;
                };
                let mut cand_e = state.e.clone();
                cand_e[l] = row;
                let cand = self.evaluate(cand_e, &envs, coupled);
                if cand.objective <= state.objective {
                    state = cand;
                }
                if !coupled && self.cfg.coupling == Coupling::Auto && self.saturated(&state) {
                    log::debug!("n={n}: frame airtime saturated, switching to joint slices");
                    coupled = true;
                    state = self.evaluate(state.e, &envs, true);
                }
            }
            let d = state.objective / n as f64;
            let prev = *trace.last().unwrap();
            trace.push(d);
            log::trace!("n={n} sweep {sweeps}: d_mean {d:.12e}");
            if (prev - d).abs() <= self.cfg.tol_conv * prev.abs() {
                break;
            }
        }

        Ok(EnergySchedule {
            n,
            gamma: state.outcomes.iter().map(|x| x.gamma).collect(),
            total_tau: state.outcomes.iter().map(|x| x.total_tau).collect(),
            d_mean: state.objective / n as f64,
            e: state.e,
            trace,
            sweeps,
            coupled,
            max_gap,
        })
    }

    fn saturated(&self, s: &State) -> bool {
        let limit = self.cfg.saturation * self.oracle.t_frame();
        s.outcomes.iter().any(|x| x.total_tau > limit)
    }

    /// Equal split clamped to each frame's envelope range.
    fn level_fill(&self, envs: &[FopSurrogate], n: usize, budget: f64) -> Vec<f64> {
        let p = envs.len();
        let mult: Vec<f64> = (0..p).map(|c| class_count(n, p, c) as f64).collect();
        let sum_at = |mu: f64| -> f64 { envs.iter().zip(&mult).map(|(s, m)| m * mu.clamp(s.e_lower, s.e_upper)).sum() };
        let hi_total = sum_at(f64::INFINITY);
        let target = (budget * (1.0 - BUDGET_MARGIN)).min(hi_total);
        let top = envs.iter().map(|s| s.e_upper).fold(0.0, f64::max);
        let mu = if hi_total <= target {
            top
        } else {
            crate::numeric::bisect(|mu| sum_at(mu) > target, 0.0, top, 200).0
        };
        (0..n).map(|k| mu.clamp(envs[k % p].e_lower, envs[k % p].e_upper)).collect()
    }

    /// Column of frame `k`, with energies above each node's own flat point
    /// clamped when slices are decoupled.
    fn column(&self, e: &[Vec<f64>], k: usize, envs: &[Vec<FopSurrogate>], clamp: bool) -> Vec<f64> {
        let c = k % self.oracle.period();
        (0..e.len())
            .map(|l| if clamp { e[l][k].min(envs[l][c].e_upper) } else { e[l][k] })
            .collect()
    }

    fn evaluate(&self, e: Vec<Vec<f64>>, envs: &[Vec<FopSurrogate>], coupled: bool) -> State {
        let n = e.first().map_or(0, Vec::len);
        let p = self.oracle.period();
        let mut cache: HashMap<(usize, Vec<u64>), FrameOutcome> = HashMap::new();
        let mut outcomes = Vec::with_capacity(n);
        let mut objective = 0.0;
        for k in 0..n {
            let col = self.column(&e, k, envs, !coupled);
            let key = (k % p, col.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            let out = *cache.entry(key).or_insert_with(|| self.oracle.solve(k % p, &col));
            objective += out.gamma;
            outcomes.push(out);
        }
        State { e, outcomes, objective }
    }

    fn update_row<R: Rng>(
        &self,
        l: usize,
        state: &State,
        envs: &[Vec<FopSurrogate>],
        coupled: bool,
        p: usize,
        rng: &mut R,
    ) -> Option<Vec<f64>> {
        let o = self.oracle;
        let e = &state.e;
        let n = e[l].len();
        let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        let mut slices: Vec<FopSurrogate> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        let mut group_of = Vec::with_capacity(n);
        for k in 0..n {
            let c = k % p;
            let key = if coupled {
                (c, (0..e.len()).filter(|&i| i != l).map(|i| e[i][k].to_bits()).collect())
            } else {
                let level = (0..e.len())
                    .filter(|&i| i != l)
                    .map(|i| envs[i][c].value(e[i][k]))
                    .fold(0.0, f64::max);
                (c, vec![level.to_bits()])
            };
            let g = match index.get(&key) {
                Some(&g) => g,
                None => {
                    let slice = if coupled {
                        let mut col = self.column(e, k, envs, false);
                        let f = |x: f64| {
                            col[l] = x;
                            let out = o.solve(c, &col);
                            out.feasible().then_some(out.gamma)
                        };
                        build_surrogate(f, o.e_cap(l, c), self.cfg.samples)?
                    } else {
                        envs[l][c].raised(f64::from_bits(key.1[0]))
                    };
                    slices.push(slice);
                    mult.push(0);
                    index.insert(key, slices.len() - 1);
                    slices.len() - 1
                }
            };
            mult[g] += 1;
            group_of.push(g);
        }

        let budget = o.budget(l) * (1.0 - BUDGET_MARGIN);
        let mut per_group = water_fill_grouped(&slices, &mult, budget)?.energies;
        let used: f64 = per_group.iter().zip(&mult).map(|(x, &m)| m as f64 * x).sum();
        let residual = budget - used;
        if residual > 0.0 && residual.is_finite() {
            let full: Vec<usize> = (0..slices.len())
                .filter(|&g| per_group[g] >= slices[g].e_upper * (1.0 - 1e-12))
                .collect();
            if !full.is_empty() {
                let draws: Vec<f64> = full
                    .iter()
                    .map(|&g| Gamma::new(mult[g] as f64, 1.0).expect("positive shape").sample(rng))
                    .collect();
                let total: f64 = draws.iter().sum();
                if total > 0.0 {
                    for (&g, w) in full.iter().zip(draws) {
                        per_group[g] += residual * (w / total) / mult[g] as f64;
                    }
                }
            }
        }
        Some(group_of.into_iter().map(|g| per_group[g]).collect())
    }
}

/// Number of frames among the first `n` that fall in `class`.
pub fn class_count(n: usize, period: usize, class: usize) -> usize {
    n / period + usize::from(class < n % period)
}
