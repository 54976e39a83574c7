//! Scenario configs shipped with the crate.

use crate::attacks::config::{ConfigError, ScenarioConfig};

pub const BUNDLED: &[(&str, &str)] = &[
    (
        "double_spend_latency",
        include_str!("../scenarios/double_spend_latency.toml"),
    ),
    (
        "sabotage_leak",
        include_str!("../scenarios/sabotage_leak.toml"),
    ),
    (
        "sabotage_soft_fork",
        include_str!("../scenarios/sabotage_soft_fork.toml"),
    ),
    (
        "honest_baseline",
        include_str!("../scenarios/honest_baseline.toml"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a bundled scenario. Panics on unknown names.
pub fn load(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = source(name).unwrap_or_else(|| panic!("no bundled scenario {name:?}"));
    ScenarioConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_parse_and_names_match() {
        for name in names() {
            let cfg = load(name).unwrap();
            assert_eq!(cfg.name, name);
        }
    }
}
