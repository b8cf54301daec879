//! Mode dispatch for the per-frame problem, with a cache of statistical
//! airtime profiles shared across calls.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::frame::{FopMode, FrameSolution, SolverConfig};
use crate::full_csi::solve_fop_full_csi;
use crate::model::{Fading, FrameNode};
use crate::statistical::{solve_fop_suboptimal, solve_with_profiles, NodeProfile};

const PROFILE_CACHE_LIMIT: usize = 1024;

type ProfileKey = (u64, u64, u64);

/// Per-frame solver for one channel-knowledge mode.
#[derive(Debug)]
pub struct FopSolver {
    pub mode: FopMode,
    pub config: SolverConfig,
    profiles: RefCell<HashMap<ProfileKey, NodeProfile>>,
}

impl FopSolver {
    pub fn new(mode: FopMode, config: SolverConfig) -> Self {
        FopSolver {
            mode,
            config,
            profiles: RefCell::new(HashMap::new()),
        }
    }

    pub fn solve(&self, nodes: &[FrameNode], energies: &[f64], t_frame: f64) -> FrameSolution {
        match self.mode {
            FopMode::FullCsi => {
                let gains: Vec<f64> = nodes.iter().map(|n| n.h0).collect();
                solve_fop_full_csi(energies, nodes, &gains, t_frame, &self.config)
            }
            FopMode::Suboptimal => solve_fop_suboptimal(energies, nodes, t_frame, &self.config),
            FopMode::Statistical if nodes.iter().all(|n| n.fading == Fading::None) => {
                let gains: Vec<f64> = nodes.iter().map(|n| n.h0).collect();
                solve_fop_full_csi(energies, nodes, &gains, t_frame, &self.config)
            }
            FopMode::Statistical => self.solve_statistical(nodes, energies, t_frame),
        }
    }

    fn solve_statistical(&self, nodes: &[FrameNode], energies: &[f64], t_frame: f64) -> FrameSolution {
        let keys: Vec<ProfileKey> = nodes
            .iter()
            .zip(energies)
            .map(|(n, e)| (n.cache_key(), e.to_bits(), t_frame.to_bits()))
            .collect();
        let mut owned: Vec<NodeProfile> = {
            let mut cache = self.profiles.borrow_mut();
            nodes
                .iter()
                .zip(energies)
                .zip(&keys)
                .map(|((n, &e), k)| {
                    cache
                        .remove(k)
                        .unwrap_or_else(|| NodeProfile::new(n, e, t_frame, &self.config))
                })
                .collect()
        };
        let sol = {
            let mut refs: Vec<&mut NodeProfile> = owned.iter_mut().collect();
            solve_with_profiles(&mut refs, t_frame, &self.config)
        };
        let mut cache = self.profiles.borrow_mut();
        if cache.len() + owned.len() > PROFILE_CACHE_LIMIT {
            cache.clear();
        }
        for (k, p) in keys.into_iter().zip(owned) {
            cache.insert(k, p);
        }
        sol
    }

    /// Drops cached profiles.
    pub fn clear_cache(&self) {
        self.profiles.borrow_mut().clear();
    }
}
