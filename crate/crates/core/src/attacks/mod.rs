//! Attack scenarios: configuration, the event-driven driver, and the
//! resolution mechanisms applied after an attack.

pub mod config;
pub mod report;
pub mod resolution;
pub mod scenario;

pub use config::{
    AttackConfig, BranchPreference, ConfigError, Rate, ResolutionConfig, ScenarioConfig,
};
pub use report::ScenarioReport;
pub use resolution::{
    apply_inactivity_leak, merchant_observer, resolve_by_soft_fork, select_surviving_branch,
    MerchantObserver, OfflineTracker, SoftFork,
};
pub use scenario::{run_double_spend, run_sabotage, run_scenario, ScenarioError, ScenarioRun};
