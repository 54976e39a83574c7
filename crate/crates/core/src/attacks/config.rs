//! Scenario configuration files.
//!
//! TOML with a versioned `schema` key. Unknown keys anywhere are rejected.

use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::finality::DEFAULT_WITHDRAWAL_DELAY;
use crate::netsim::{LatencyModel, NetError, Partition, DEFAULT_EVENT_CAP};
use crate::types::{SimTime, StakeAmount};

pub const SCENARIO_SCHEMA: &str = "posfin-scenario/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema {
        found: String,
        expected: &'static str,
    },
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// A rate in (0, 1) kept exact. Written as `"1/10"` or `"0.1"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate(pub Ratio<u64>);

impl Rate {
    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }

    /// `floor(amount * rate)` in exact integer arithmetic.
    pub fn apply_floor(self, amount: StakeAmount) -> StakeAmount {
        let r = self.0;
        StakeAmount((amount.0 as u128 * *r.numer() as u128 / *r.denom() as u128) as u64)
    }
}

impl FromStr for Rate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let ratio = if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n
                .trim()
                .parse()
                .map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: u64 = d
                .trim()
                .parse()
                .map_err(|_| format!("bad denominator in {s:?}"))?;
            if d == 0 {
                return Err("zero denominator".into());
            }
            Ratio::new(n, d)
        } else {
            let (int, frac) = s.split_once('.').unwrap_or((s, ""));
            if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(format!("bad decimal {s:?}"));
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| format!("bad decimal {s:?}"))?
            };
            let scale = 10u64.pow(frac.len() as u32);
            let frac_v: u64 = if frac.is_empty() {
                0
            } else {
                frac.parse().unwrap()
            };
            let n = int
                .checked_mul(scale)
                .and_then(|x| x.checked_add(frac_v))
                .ok_or_else(|| format!("decimal {s:?} out of range"))?;
            Ratio::new(n, scale)
        };
        Ok(Rate(ratio))
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Num(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(t) => t,
            // Floats are accepted through their shortest decimal form.
            Raw::Num(x) => format!("{x}"),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub region: String,
    pub stake: u64,
    pub honest: bool,
    /// Validators the stake is split across; the first takes the remainder.
    #[serde(default = "one")]
    pub validators: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayOverride {
    pub from: String,
    pub to: String,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub a: String,
    pub b: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub regions: Vec<String>,
    pub default_delay: u64,
    #[serde(default)]
    pub self_delay: Option<u64>,
    #[serde(default)]
    pub jitter: u64,
    #[serde(default)]
    pub delays: Vec<DelayOverride>,
    #[serde(default)]
    pub partitions: Vec<PartitionConfig>,
}

impl LatencyConfig {
    pub fn build(&self) -> Result<LatencyModel, ConfigError> {
        let net = |field: &str, e: NetError| ConfigError::invalid(field, e.to_string());
        if self.regions.is_empty() {
            return Err(ConfigError::invalid(
                "latency.regions",
                "at least one region required",
            ));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if self.regions[..i].contains(r) {
                return Err(ConfigError::invalid(
                    "latency.regions",
                    format!("duplicate region {r:?}"),
                ));
            }
        }
        let mut model = LatencyModel::uniform(self.regions.clone(), self.default_delay)
            .with_jitter(self.jitter);
        if let Some(d) = self.self_delay {
            for r in 0..self.regions.len() {
                let id = crate::types::RegionId(r);
                model.set_delay(id, id, d).expect("in range");
            }
        }
        for (i, o) in self.delays.iter().enumerate() {
            let field = format!("latency.delays[{i}]");
            let from = model.region(&o.from).map_err(|e| net(&field, e))?;
            let to = model.region(&o.to).map_err(|e| net(&field, e))?;
            model
                .set_delay(from, to, o.ticks)
                .map_err(|e| net(&field, e))?;
        }
        for (i, p) in self.partitions.iter().enumerate() {
            let field = format!("latency.partitions[{i}]");
            if p.end <= p.start {
                return Err(ConfigError::invalid(field, "end must be after start"));
            }
            let a = model.region(&p.a).map_err(|e| net(&field, e))?;
            let b = model.region(&p.b).map_err(|e| net(&field, e))?;
            if a == b {
                return Err(ConfigError::invalid(
                    field,
                    "a region cannot be partitioned from itself",
                ));
            }
            model = model
                .with_partition(Partition {
                    a,
                    b,
                    start: SimTime(p.start),
                    end: SimTime(p.end),
                })
                .map_err(|e| net(&field, e))?;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackConfig {
    None,
    DoubleSpend {
        /// Group name of the equivocating attacker.
        attacker: String,
        /// First region sees the first branch; second region the conflicting one.
        merchant_regions: [String; 2],
        #[serde(default = "one_u64")]
        epsilon_units: u64,
        #[serde(default = "one_u64")]
        epoch: u64,
        /// Ticks between publishing the first and the second branch.
        #[serde(default = "default_second_delay")]
        second_branch_delay: u64,
        /// Value obtained from each merchant.
        v_attack: f64,
    },
    Sabotage {
        attacker: String,
        #[serde(default = "one_u64")]
        start_epoch: u64,
    },
}

fn one_u64() -> u64 {
    1
}

fn default_second_delay() -> u64 {
    100
}

impl AttackConfig {
    pub fn attacker(&self) -> Option<&str> {
        match self {
            AttackConfig::None => None,
            AttackConfig::DoubleSpend { attacker, .. }
            | AttackConfig::Sabotage { attacker, .. } => Some(attacker),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchPreference {
    #[default]
    FirstFinalized,
    HighestBurned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResolutionConfig {
    None {
        #[serde(default)]
        branch_preference: BranchPreference,
    },
    SoftForkCensor {
        #[serde(default = "default_t_offline")]
        t_offline: u64,
        #[serde(default)]
        branch_preference: BranchPreference,
    },
    InactivityLeak {
        rate: Rate,
        #[serde(default)]
        branch_preference: BranchPreference,
    },
}

fn default_t_offline() -> u64 {
    3
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig::None {
            branch_preference: BranchPreference::default(),
        }
    }
}

impl ResolutionConfig {
    pub fn branch_preference(&self) -> BranchPreference {
        match self {
            ResolutionConfig::None { branch_preference }
            | ResolutionConfig::SoftForkCensor {
                branch_preference, ..
            }
            | ResolutionConfig::InactivityLeak {
                branch_preference, ..
            } => *branch_preference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    /// Transaction value per period.
    pub demand: f64,
    pub velocity: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            demand: 1.0e9,
            velocity: 10.0,
        }
    }
}

/// An honest group that misses its votes for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineConfig {
    pub group: String,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub total_supply: u64,
    pub duration_epochs: u64,
    #[serde(default = "default_block_interval")]
    pub block_interval: u64,
    #[serde(default = "default_blocks_per_checkpoint")]
    pub blocks_per_checkpoint: u64,
    #[serde(default = "default_withdrawal_delay")]
    pub withdrawal_delay: u64,
    /// Region whose view proposes each regular checkpoint; defaults to the first region.
    #[serde(default)]
    pub proposer_region: Option<String>,
    /// Reject attacks whose stake exceeds what the liquid pool can supply.
    #[serde(default)]
    pub enforce_liquidity_cap: bool,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    pub groups: Vec<GroupConfig>,
    pub latency: LatencyConfig,
    #[serde(default = "no_attack")]
    pub attack: AttackConfig,
    #[serde(default)]
    pub resolution: ResolutionConfig,
    #[serde(default)]
    pub market: MarketConfig,
    #[serde(default)]
    pub offline: Vec<OfflineConfig>,
}

fn default_block_interval() -> u64 {
    15
}
fn default_blocks_per_checkpoint() -> u64 {
    100
}
fn default_withdrawal_delay() -> u64 {
    DEFAULT_WITHDRAWAL_DELAY
}
fn default_max_events() -> u64 {
    DEFAULT_EVENT_CAP
}
fn no_attack() -> AttackConfig {
    AttackConfig::None
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical JSON form; stable key order.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn epoch_ticks(&self) -> u64 {
        self.block_interval * self.blocks_per_checkpoint
    }

    pub fn group(&self, name: &str) -> Option<&GroupConfig> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(ConfigError::Schema {
                found: self.schema.clone(),
                expected: SCENARIO_SCHEMA,
            });
        }
        if self.duration_epochs == 0 {
            return Err(ConfigError::invalid(
                "duration_epochs",
                "must be at least 1",
            ));
        }
        if self.block_interval == 0 || self.blocks_per_checkpoint == 0 {
            return Err(ConfigError::invalid(
                "block_interval",
                "epoch length must be positive",
            ));
        }
        if self.max_events == 0 {
            return Err(ConfigError::invalid("max_events", "must be positive"));
        }
        let latency = self.latency.build()?;
        if let Some(p) = &self.proposer_region {
            latency
                .region(p)
                .map_err(|e| ConfigError::invalid("proposer_region", e.to_string()))?;
        }
        if self.groups.is_empty() {
            return Err(ConfigError::invalid(
                "groups",
                "at least one group required",
            ));
        }
        let mut sum: u128 = 0;
        for (i, g) in self.groups.iter().enumerate() {
            let field = format!("groups[{i}]");
            if self.groups[..i].iter().any(|o| o.name == g.name) {
                return Err(ConfigError::invalid(
                    field,
                    format!("duplicate group name {:?}", g.name),
                ));
            }
            latency
                .region(&g.region)
                .map_err(|e| ConfigError::invalid(format!("{field}.region"), e.to_string()))?;
            if g.validators == 0 {
                return Err(ConfigError::invalid(
                    format!("{field}.validators"),
                    "must be at least 1",
                ));
            }
            if g.stake < g.validators as u64 {
                return Err(ConfigError::invalid(
                    format!("{field}.stake"),
                    "each validator needs at least one unit",
                ));
            }
            sum += g.stake as u128;
        }
        if sum > self.total_supply as u128 {
            return Err(ConfigError::invalid(
                "total_supply",
                format!(
                    "group stakes sum to {sum}, exceeding supply {}",
                    self.total_supply
                ),
            ));
        }
        if let Some(name) = self.attack.attacker() {
            match self.group(name) {
                None => {
                    return Err(ConfigError::invalid(
                        "attack.attacker",
                        format!("no group named {name:?}"),
                    ))
                }
                Some(g) if g.honest => {
                    return Err(ConfigError::invalid(
                        "attack.attacker",
                        format!("group {name:?} is marked honest"),
                    ))
                }
                Some(_) => {}
            }
        }
        match &self.attack {
            AttackConfig::DoubleSpend {
                merchant_regions,
                epsilon_units,
                epoch,
                v_attack,
                ..
            } => {
                if *epsilon_units == 0 {
                    return Err(ConfigError::invalid(
                        "attack.epsilon_units",
                        "must be at least 1",
                    ));
                }
                if *epoch == 0 || *epoch > self.duration_epochs {
                    return Err(ConfigError::invalid(
                        "attack.epoch",
                        "must be within 1..=duration_epochs",
                    ));
                }
                if !(v_attack.is_finite() && *v_attack >= 0.0) {
                    return Err(ConfigError::invalid(
                        "attack.v_attack",
                        "must be finite and non-negative",
                    ));
                }
                for r in merchant_regions {
                    latency.region(r).map_err(|e| {
                        ConfigError::invalid("attack.merchant_regions", e.to_string())
                    })?;
                }
                if merchant_regions[0] == merchant_regions[1] {
                    return Err(ConfigError::invalid(
                        "attack.merchant_regions",
                        "regions must differ",
                    ));
                }
            }
            AttackConfig::Sabotage { start_epoch, .. } => {
                if *start_epoch == 0 || *start_epoch > self.duration_epochs {
                    return Err(ConfigError::invalid(
                        "attack.start_epoch",
                        "must be within 1..=duration_epochs",
                    ));
                }
            }
            AttackConfig::None => {}
        }
        match &self.resolution {
            ResolutionConfig::InactivityLeak { rate, .. } => {
                let r = rate.ratio();
                if *r.numer() == 0 || r >= Ratio::from_integer(1) {
                    return Err(ConfigError::invalid("resolution.rate", "must be in (0, 1)"));
                }
            }
            ResolutionConfig::SoftForkCensor { t_offline, .. } if *t_offline == 0 => {
                return Err(ConfigError::invalid(
                    "resolution.t_offline",
                    "must be at least 1",
                ));
            }
            _ => {}
        }
        if !(self.market.demand.is_finite() && self.market.demand >= 0.0) {
            return Err(ConfigError::invalid(
                "market.demand",
                "must be finite and non-negative",
            ));
        }
        if !(self.market.velocity.is_finite() && self.market.velocity > 0.0) {
            return Err(ConfigError::invalid("market.velocity", "must be positive"));
        }
        for (i, o) in self.offline.iter().enumerate() {
            if self.group(&o.group).is_none() {
                return Err(ConfigError::invalid(
                    format!("offline[{i}].group"),
                    format!("no group named {:?}", o.group),
                ));
            }
        }
        Ok(())
    }

    pub fn stake_of(&self, name: &str) -> Option<StakeAmount> {
        self.group(name).map(|g| StakeAmount(g.stake))
    }
}
