//! Proof-of-stake finality, its network simulation, attack scenarios and the
//! economics of staking security.
//!
//! The protocol path works in integer stake units with exact fractions. The
//! economic formulas are generic over any `num_traits::Float`; the aliases
//! below fix them to `f64`.

pub mod attacks;
pub mod bundled;
pub mod economics;
pub mod finality;
pub mod netsim;
pub mod output;
pub mod sweep;
pub mod types;

pub use economics::{BetaConvention, EconError};
pub use finality::{FinalityConfig, FinalityError, FinalityState, SlashingEvidence};
pub use netsim::{EventQueue, LatencyModel, NetError, Partition, Trace};
pub use types::{Checkpoint, CheckpointId, RegionId, SimTime, StakeAmount, ValidatorId, Vote};

pub type Scalar = f64;
pub type Params = economics::EconomicParams<Scalar>;
pub type Velocity = economics::VelocityModel<Scalar>;
pub type PowBenchmark = economics::PoWComparison<Scalar>;
pub type StakeRatio = num_rational::Ratio<u64>;
