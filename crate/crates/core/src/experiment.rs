//! Seeded experiment runs over a scenario and the CSV files they emit.

use std::path::{Path, PathBuf};

use crate::admission::{dismiss, AdmissionResult};
use crate::eap::{tradeoff_sweep, Eap, EnergySchedule, FrameOracle, NetworkOracle, SweepResult};
use crate::error::{Error, Result};
use crate::frame::{FopMode, FrameSolution, PowerAssignment};
use crate::model::{Fading, FrameNode};
use crate::output::Table;
use crate::row;
use crate::scenario::Scenario;
use crate::solver::FopSolver;

/// Survival probability at the top of the fading grid in the policy dump.
const THETA_SPAN: f64 = 8.0;

/// Result of admission followed by the lifetime sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub admission: AdmissionResult,
    /// The scenario restricted to admitted devices.
    pub admitted: Scenario,
    pub sweep: SweepResult,
}

/// Applies admission when the scenario asks for it and sweeps lifetimes.
pub fn sweep_scenario(s: &Scenario, mode: FopMode) -> Result<SweepOutcome> {
    let admission = if s.run.admission {
        dismiss(&s.devices, &s.channel, s.t_frame, mode, s.seed)?
    } else {
        AdmissionResult {
            admitted: (0..s.devices.len()).collect(),
            dismissed: Vec::new(),
            total_tau_min: f64::NAN,
        }
    };
    if admission.admitted.is_empty() {
        return Err(Error::Infeasible("every node was dismissed".into()));
    }
    let admitted = s.restricted_to(&admission.admitted);
    let oracle = NetworkOracle::new(&admitted.devices, &admitted.channel, admitted.t_frame, mode, admitted.solver)?;
    let eap = Eap::new(&oracle, admitted.eap);
    let mut sweep = tradeoff_sweep(&eap, &admitted.sweep, admitted.seed)
        .map_err(|why| Error::Infeasible(format!("no feasible allocation for a single frame: {why}")))?;
    for r in &mut sweep.curve.rows {
        r.dismissed = admission.dismissed.len();
    }
    Ok(SweepOutcome {
        admission,
        admitted,
        sweep,
    })
}

pub fn tradeoff_table(sweep: &SweepResult, sigmas: &[f64]) -> Table {
    let mut t = Table::new(&["sigma", "n", "d_mean", "objective", "best", "dismissed"]);
    for &sigma in sigmas {
        let best = sweep.curve.best(sigma);
        for (i, r) in sweep.curve.rows.iter().enumerate() {
            t.push(row![sigma, r.n, r.d_mean, sweep.objective_at(sigma, i), best == Some(i), r.dismissed]);
        }
    }
    t
}

pub fn tau_table(sweep: &SweepResult) -> Table {
    let mut t = Table::new(&["n", "tau_min", "tau_mean", "tau_max", "d_mean"]);
    for r in &sweep.curve.rows {
        t.push(row![r.n, r.tau_min, r.tau_mean, r.tau_max, r.d_mean]);
    }
    t
}

/// Solves the first frame of a schedule and samples each node's distortion
/// over the fading coefficient.
pub fn delta_policy_table(s: &Scenario, schedule: &EnergySchedule, mode: FopMode) -> Result<Table> {
    let nodes = s
        .devices
        .iter()
        .map(|d| FrameNode::new(d, &s.channel, 0))
        .collect::<Result<Vec<_>>>()?;
    let energies: Vec<f64> = schedule.e.iter().map(|row| row[0]).collect();
    let sol = FopSolver::new(mode, s.solver).solve(&nodes, &energies, s.t_frame);
    let mut t = Table::new(&["node", "theta", "power", "l_bits", "delta"]);
    if !sol.feasible {
        return Ok(t);
    }
    let m = s.run.theta_points.max(2);
    for (node, a) in nodes.iter().zip(&sol.allocations) {
        for j in 0..m {
            let theta = node.theta_tx + THETA_SPAN * j as f64 / (m - 1) as f64;
            let (power, l_bits, delta) = match &a.power {
                PowerAssignment::Policy(p) => match p.at(theta) {
                    Some(pt) => (pt.power, pt.l_bits, p.distortion_at(theta)),
                    None => (f64::NAN, 0.0, f64::INFINITY),
                },
                PowerAssignment::Fixed(p) => (*p, a.l_bits, a.distortion),
            };
            t.push(row![a.id, theta, power, l_bits, delta]);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DismissalRow {
    pub t_frame: f64,
    /// Dismissals with the scenario seed.
    pub dismissed: usize,
    /// Mean over `dismissal_runs` consecutive seeds.
    pub mean_dismissed: f64,
}

/// Dismissal counts over the scenario's frame-length sweep.
pub fn dismissal_sweep(s: &Scenario, mode: FopMode) -> Result<Vec<DismissalRow>> {
    let runs = s.run.dismissal_runs.max(1);
    s.run
        .t_sweep
        .iter()
        .map(|&t| {
            let main = dismiss(&s.devices, &s.channel, t, mode, s.seed)?.dismissed.len();
            let mut total = 0usize;
            for r in 0..runs as u64 {
                total += dismiss(&s.devices, &s.channel, t, mode, s.seed.wrapping_add(r))?.dismissed.len();
            }
            Ok(DismissalRow {
                t_frame: t,
                dismissed: main,
                mean_dismissed: total as f64 / runs as f64,
            })
        })
        .collect()
}

pub fn dismissal_table(rows: &[DismissalRow], n_devices: usize) -> Table {
    let mut t = Table::new(&["t_frame", "dismissed", "mean_dismissed", "devices"]);
    for r in rows {
        t.push(row![r.t_frame, r.dismissed, r.mean_dismissed, n_devices]);
    }
    t
}

/// Trade-off curves for every processing slope of the scenario.
pub fn sensitivity_table(s: &Scenario, mode: FopMode) -> Result<Table> {
    let mut t = Table::new(&["e0_alpha", "n", "d_mean"]);
    for &slope in &s.run.slope_sweep {
        match sweep_scenario(&s.with_processing_slope(slope), mode) {
            Ok(out) => {
                for r in &out.sweep.curve.rows {
                    t.push(row![slope, r.n, r.d_mean]);
                }
            }
            Err(Error::Infeasible(why)) => log::warn!("slope {slope:e}: {why}"),
            Err(e) => return Err(e),
        }
    }
    Ok(t)
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub outcome: SweepOutcome,
    pub files: Vec<PathBuf>,
}

/// Admission, lifetime sweep and every CSV artifact under `out_dir`.
pub fn run_experiment(s: &Scenario, mode: FopMode, sigmas: &[f64], out_dir: &Path) -> Result<ExperimentReport> {
    std::fs::create_dir_all(out_dir)?;
    let outcome = sweep_scenario(s, mode)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, t: &Table| -> Result<()> {
        let p = out_dir.join(name);
        t.write(&p)?;
        files.push(p);
        Ok(())
    };
    emit("tradeoff.csv", &tradeoff_table(&outcome.sweep, sigmas))?;
    emit("tau.csv", &tau_table(&outcome.sweep))?;
    let first = sigmas.first().copied().unwrap_or(1.0);
    let (_, best) = outcome.sweep.best(first).expect("sweep has at least one row");
    emit("delta_policy.csv", &delta_policy_table(&outcome.admitted, best, mode)?)?;
    emit("dismissal.csv", &dismissal_table(&dismissal_sweep(s, mode)?, s.devices.len()))?;
    emit("sensitivity.csv", &sensitivity_table(s, mode)?)?;
    Ok(ExperimentReport { outcome, files })
}

/// Single-frame solve with explicit energies, for inspection.
pub fn solve_frame(s: &Scenario, energies: &[f64], mode: FopMode) -> Result<(Vec<FrameNode>, FrameSolution)> {
    if energies.len() != s.devices.len() {
        return Err(crate::error::config(
            "energies",
            format!("expected {} values, found {}", s.devices.len(), energies.len()),
        ));
    }
    let nodes = s
        .devices
        .iter()
        .map(|d| FrameNode::new(d, &s.channel, 0))
        .collect::<Result<Vec<_>>>()?;
    let sol = FopSolver::new(mode, s.solver).solve(&nodes, energies, s.t_frame);
    Ok((nodes, sol))
}

pub fn frame_table(sol: &FrameSolution) -> Table {
    let mut t = Table::new(&["node", "tau", "power", "l_bits", "distortion", "e_used"]);
    for a in &sol.allocations {
        let p = match &a.power {
            PowerAssignment::Fixed(p) => *p,
            PowerAssignment::Policy(pol) => pol.at(pol.node.theta_tx).map_or(f64::NAN, |x| x.power),
        };
        t.push(row![a.id, a.tau, p, a.l_bits, a.distortion, a.e_used]);
    }
    t
}

/// Re-solves every distinct column of a schedule from scratch.
pub fn resolve_schedule(s: &Scenario, schedule: &EnergySchedule, mode: FopMode) -> Result<Vec<FrameSolution>> {
    let oracle = NetworkOracle::new(&s.devices, &s.channel, s.t_frame, mode, s.solver)?;
    let p = oracle.period();
    let solver = FopSolver::new(mode, s.solver);
    let mut seen: std::collections::HashMap<(usize, Vec<u64>), FrameSolution> = std::collections::HashMap::new();
    Ok((0..schedule.n)
        .map(|k| {
            let col: Vec<f64> = schedule.e.iter().map(|r| r[k]).collect();
            let key = (k % p, col.iter().map(|x| x.to_bits()).collect());
            seen.entry(key)
                .or_insert_with(|| solver.solve(oracle.nodes(k % p), &col, s.t_frame))
                .clone()
        })
        .collect())
}

/// Whether the scenario's channel has fading.
pub fn has_fading(s: &Scenario) -> bool {
    s.channel.fading != Fading::None
}
