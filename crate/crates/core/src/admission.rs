//! Stochastic dismissal of nodes whose minimum airtimes cannot share a frame.
//!
//! While the sum of minimum airtimes exceeds the frame, one node is
//! dismissed per round with probability proportional to `2^rank`, so
//! low-priority nodes (large rank) go first on average. Batteries are never
//! consulted.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::frame::FopMode;
use crate::model::{shannon_rate, ChannelModel, DeviceParams, FrameNode};
use crate::statistical::worst_gain;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionResult {
    /// Admitted node ids, in input order.
    pub admitted: Vec<usize>,
    /// Dismissed node ids, in dismissal order.
    pub dismissed: Vec<usize>,
    /// Sum of minimum airtimes of the admitted nodes.
    pub total_tau_min: f64,
}

/// Airtime needed to carry the threshold payload at full power over the
/// channel the mode plans for; infinite without a usable link.
pub fn min_transmission_time(node: &FrameNode, mode: FopMode) -> f64 {
    let h = match mode {
        FopMode::FullCsi => node.h0,
        FopMode::Statistical | FopMode::Suboptimal => worst_gain(node),
    };
    if h <= 0.0 {
        return f64::INFINITY;
    }
    node.bits_for_distortion(node.d_th) / shannon_rate(h, node.radio.p_max, node.w)
}

/// One node as seen by the dismissal procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub priority: u32,
    pub tau_min: f64,
}

/// Dismisses candidates until their minimum airtimes fit in `t_frame`.
pub fn dismiss_candidates(candidates: &[Candidate], t_frame: f64, rng: &mut ChaCha8Rng) -> AdmissionResult {
    let mut remaining: Vec<Candidate> = candidates.to_vec();
    let mut dismissed = Vec::new();
    let total = |r: &[Candidate]| r.iter().map(|c| c.tau_min).sum::<f64>();
    while !remaining.is_empty() && total(&remaining) > t_frame {
        let weights: Vec<f64> = remaining.iter().map(|c| 2f64.powi(c.priority as i32)).collect();
        let pick = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
        dismissed.push(remaining.remove(pick).id);
    }
    AdmissionResult {
        admitted: remaining.iter().map(|c| c.id).collect(),
        total_tau_min: total(&remaining),
        dismissed,
    }
}

/// Minimum airtime of a device over its whole frame cycle.
pub fn device_tau_min(dev: &DeviceParams, channel: &ChannelModel, mode: FopMode) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..dev.period() {
        worst = worst.max(min_transmission_time(&FrameNode::new(dev, channel, k)?, mode));
    }
    Ok(worst)
}

/// Admission for a device set with a seeded generator.
pub fn dismiss(
    devices: &[DeviceParams],
    channel: &ChannelModel,
    t_frame: f64,
    mode: FopMode,
    seed: u64,
) -> Result<AdmissionResult> {
    let candidates = devices
        .iter()
        .map(|d| {
            Ok(Candidate {
                id: d.id,
                priority: d.priority,
                tau_min: device_tau_min(d, channel, mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dismiss_candidates(&candidates, t_frame, &mut rng))
}
