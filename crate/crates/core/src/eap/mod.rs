//! Energy allocation across a lifetime of frames.

pub mod alternate;
pub mod oracle;
pub mod surrogate;
pub mod sweep;
pub mod waterfill;

pub use alternate::{class_count, objective, Coupling, Eap, EapConfig, EnergySchedule, Infeasibility};
pub use oracle::{FrameOracle, FrameOutcome, NetworkOracle};
pub use surrogate::{build_surrogate, FopSurrogate};
pub use sweep::{rng_for, tradeoff_sweep, SweepConfig, SweepResult, TradeoffCurve, TradeoffRow};
pub use waterfill::{water_fill, water_fill_grouped, WaterFill};
