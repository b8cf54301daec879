//! Types shared by the per-frame solvers.

use serde::{Deserialize, Serialize};

use crate::statistical::PowerPolicy;

/// How the per-frame problem treats the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FopMode {
    /// Gain known exactly (the mean gain is used as the realised gain).
    FullCsi,
    /// Only the fading law is known; power follows a fading-adaptive policy.
    Statistical,
    /// Fixed power sized for the worst channel the node must serve.
    Suboptimal,
}

impl FopMode {
    pub fn name(self) -> &'static str {
        match self {
            FopMode::FullCsi => "full_csi",
            FopMode::Statistical => "statistical",
            FopMode::Suboptimal => "suboptimal",
        }
    }
}

impl std::str::FromStr for FopMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full_csi" | "full-csi" => Ok(FopMode::FullCsi),
            "statistical" => Ok(FopMode::Statistical),
            "suboptimal" => Ok(FopMode::Suboptimal),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Numerical knobs of the per-frame solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Width of the final bracket on the normalised distortion.
    pub tol_gamma: f64,
    /// Absolute tolerance of the power search, watts.
    pub tol_power: f64,
    /// Relative tolerance of golden-section searches.
    pub tol_golden: f64,
    /// Relative agreement required between successive quadrature estimates.
    pub quad_rel_tol: f64,
    /// Points of the log-spaced airtime scan.
    pub tau_grid_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_gamma: 1e-6,
            tol_power: 1e-9,
            tol_golden: 1e-9,
            quad_rel_tol: 1e-6,
            tau_grid_points: 2048,
        }
    }
}

impl SolverConfig {
    /// Bisection steps needed to shrink `[0, 1]` below `tol_gamma`.
    pub fn gamma_iterations(&self) -> usize {
        (1.0 / self.tol_gamma).log2().ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerAssignment {
    Fixed(f64),
    Policy(PowerPolicy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeAllocation {
    pub id: usize,
    pub tau: f64,
    pub power: PowerAssignment,
    /// Payload actually sent (for a policy, the payload at the silence threshold).
    pub l_bits: f64,
    /// Distortion (expected distortion under a policy).
    pub distortion: f64,
    /// Energy consumed (worst case over fading under a policy).
    pub e_used: f64,
}

/// Constraint that prevents a lower distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Binding {
    /// The node's energy cannot cover the required payload.
    Energy { id: usize },
    /// The power needed falls below the transceiver's minimum.
    PowerFloor { id: usize },
    /// The threshold cannot be met at the worst channel served.
    Distortion { id: usize },
    /// The node has no usable link.
    NoChannel { id: usize },
    /// Airtimes do not fit in the frame.
    FrameTime { total_tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    pub feasible: bool,
    /// Normalised distortion in `[0, 1]`; infinite when infeasible.
    pub gamma_star: f64,
    pub allocations: Vec<NodeAllocation>,
    pub binding: Option<Binding>,
    pub total_tau: f64,
}

impl FrameSolution {
    pub fn infeasible(binding: Binding) -> Self {
        FrameSolution {
            feasible: false,
            gamma_star: f64::INFINITY,
            allocations: Vec::new(),
            binding: Some(binding),
            total_tau: f64::NAN,
        }
    }
}

/// Bisection on the normalised distortion over `[0, 1]`.
///
/// `check` must be monotone: feasible at `gamma` implies feasible above it.
/// Returns the smallest feasible `gamma` found, the matching witness and the
/// constraint that failed just below it.
pub fn bisect_gamma<S, F>(mut check: F, cfg: &SolverConfig) -> Result<(f64, S, Option<Binding>), Binding>
where
    F: FnMut(f64) -> Result<S, Binding>,
{
    let at_one = check(1.0)?;
    let mut binding = match check(0.0) {
        Ok(s) => return Ok((0.0, s, None)),
        Err(b) => b,
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = at_one;
    for _ in 0..cfg.gamma_iterations() {
        let mid = 0.5 * (lo + hi);
        match check(mid) {
            Ok(s) => {
                hi = mid;
                best = s;
            }
            Err(b) => {
                lo = mid;
                binding = b;
            }
        }
    }
    Ok((hi, best, Some(binding)))
}
