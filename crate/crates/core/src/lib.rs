//! Lifetime/distortion trade-off scheduling for energy-constrained sensor
//! nodes that compress before transmitting.
//!
//! Each frame solves a min-max distortion problem over power, airtime and
//! compression ([`full_csi`], [`statistical`]); across frames, batteries are
//! split by alternating water-filling ([`eap`]); [`admission`] trims the
//! node set when airtimes cannot fit in a frame.

pub mod admission;
pub mod eap;
pub mod error;
pub mod experiment;
pub mod frame;
pub mod full_csi;
pub mod model;
pub mod numeric;
pub mod output;
pub mod scenario;
pub mod solver;
pub mod statistical;

pub use admission::{dismiss, AdmissionResult};
pub use eap::{Eap, EapConfig, EnergySchedule, NetworkOracle, SweepConfig, TradeoffCurve};
pub use error::{Error, Result};
pub use frame::{Binding, FopMode, FrameSolution, NodeAllocation, PowerAssignment, SolverConfig};
pub use model::{ChannelModel, CompressionParams, DeviceParams, Fading, FrameNode, RadioParams};
pub use solver::FopSolver;
