//! Lifetime sweep: one allocation per candidate lifetime, then the weighted
//! choice between distortion and lifetime.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alternate::{objective, Eap, EnergySchedule, Infeasibility};
use super::oracle::FrameOracle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Stride between evaluated lifetimes. The largest feasible lifetime is
    /// always located and evaluated.
    pub n_step: usize,
    /// Stop after this lifetime even if longer ones are feasible.
    pub n_max: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { n_step: 1, n_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub n: usize,
    pub d_mean: f64,
    pub tau_min: f64,
    pub tau_mean: f64,
    pub tau_max: f64,
    pub sweeps: usize,
    pub dismissed: usize,
}

impl TradeoffRow {
    pub fn from_schedule(s: &EnergySchedule, dismissed: usize) -> Self {
        let taus = &s.total_tau;
        TradeoffRow {
            n: s.n,
            d_mean: s.d_mean,
            tau_min: taus.iter().copied().fold(f64::INFINITY, f64::min),
            tau_mean: taus.iter().sum::<f64>() / taus.len() as f64,
            tau_max: taus.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sweeps: s.sweeps,
            dismissed,
        }
    }
}

/// Rows ordered by lifetime, one per evaluated feasible lifetime.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TradeoffCurve {
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffCurve {
    /// Index of the row minimising `sigma * d_mean - (1 - sigma) * n`; ties go
    /// to the shortest lifetime.
    pub fn best(&self, sigma: f64) -> Option<usize> {
        self.best_with(sigma, |n| n as f64)
    }

    /// Like [`best`](Self::best) with a custom increasing lifetime reward.
    pub fn best_with<F: Fn(usize) -> f64>(&self, sigma: f64, reward: F) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.rows.iter().enumerate() {
            let v = sigma * r.d_mean - (1.0 - sigma) * reward(r.n);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub curve: TradeoffCurve,
    pub schedules: Vec<EnergySchedule>,
}

impl SweepResult {
    /// Best lifetime and its schedule for weight `sigma`.
    pub fn best(&self, sigma: f64) -> Option<(usize, &EnergySchedule)> {
        self.curve.best(sigma).map(|i| (self.schedules[i].n, &self.schedules[i]))
    }

    pub fn objective_at(&self, sigma: f64, i: usize) -> f64 {
        let r = &self.curve.rows[i];
        objective(sigma, r.d_mean, r.n)
    }
}

/// Generator for lifetime `n`: the master seed with stream `n`.
pub fn rng_for(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

/// Allocations for `n = 1, 1 + step, ...` until infeasible, then for the
/// largest feasible lifetime.
pub fn tradeoff_sweep<O: FrameOracle>(eap: &Eap<'_, O>, cfg: &SweepConfig, seed: u64) -> Result<SweepResult, Infeasibility> {
    let step = cfg.n_step.max(1);
    let cap = cfg.n_max.unwrap_or(usize::MAX);
    let run = |n: usize| eap.random_alternate(n, &mut rng_for(seed, n));
    let mut schedules = vec![run(1)?];
    let mut last_ok = 1;
    let mut first_bad = None;
    let mut n = 1;
    while n < cap {
        n = n.saturating_add(step).min(cap);
        match run(n) {
            Ok(s) => {
                log::info!("n={n}: d_mean {:.6e} after {} sweeps", s.d_mean, s.sweeps);
                schedules.push(s);
                last_ok = n;
            }
            Err(why) => {
                log::info!("n={n}: infeasible ({why})");
                first_bad = Some(n);
                break;
            }
        }
    }
    if let Some(bad) = first_bad {
        let (mut lo, mut hi) = (last_ok, bad);
        let mut best = None;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            match run(mid) {
                Ok(s) => {
                    lo = mid;
                    best = Some(s);
                }
                Err(_) => hi = mid,
            }
        }
        if let Some(s) = best.filter(|s| s.n == lo) {
            schedules.push(s);
        } else if lo != last_ok {
            schedules.push(run(lo).expect("bisection found it feasible"));
        }
    }
    let curve = TradeoffCurve {
        rows: schedules.iter().map(|s| TradeoffRow::from_schedule(s, 0)).collect(),
    };
    Ok(SweepResult { curve, schedules })
}
