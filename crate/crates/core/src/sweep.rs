//! Parameter sweeps over the economic formulas and, optionally, a scenario.
//!
//! Axis fields are `econ.<name>` or `scenario.<path>`. Scenario paths walk
//! the config's JSON form; array elements with a `name` key can be selected
//! by name, so `scenario.groups.attacker.stake` addresses the attacker's stake.
//! Grid points run in parallel and rows come back in grid order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::attacks::config::ScenarioConfig;
use crate::attacks::scenario::run_scenario;
use crate::economics::{equilibrium_deposit, EconomicParams, VelocityModel};

pub const SWEEP_SCHEMA: &str = "posfin-sweep/1";

const ECON_FIELDS: &[&str] = &[
    "p_block",
    "c",
    "beta",
    "v_attack",
    "n_attack_share",
    "p_vol",
    "n_total",
    "n_deposit",
    "demand",
    "velocity",
];

pub const RESULT_COLUMNS: &[&str] = &[
    "beta",
    "alpha",
    "n_star",
    "price",
    "n_attack",
    "deterred_stake_cost",
    "deterred_reward_bound",
    "safe_value",
    "n_deposit_star",
    "velocity_price",
    "c_curve",
    "r_liquid_curve",
    "conflicting_pairs",
    "halt_epochs",
    "resume_epoch",
    "attacker_burned",
    "merchants_defrauded",
    "error",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep spec: {0}")]
    Parse(String),
    #[error("sweep spec schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: String },
    #[error("unknown sweep field {0:?}")]
    UnknownField(String),
    #[error("axis {0:?} has no values")]
    EmptyAxis(String),
    #[error("axis {field:?} uses scenario fields but no scenario was given")]
    NoScenario { field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconBase {
    pub p_block: f64,
    pub c: f64,
    pub beta: f64,
    pub v_attack: f64,
    #[serde(default = "half")]
    pub n_attack_share: f64,
    #[serde(default)]
    pub p_vol: f64,
    #[serde(default = "default_n_total")]
    pub n_total: f64,
    #[serde(default = "default_n_deposit")]
    pub n_deposit: f64,
    #[serde(default = "default_demand")]
    pub demand: f64,
    #[serde(default = "default_velocity")]
    pub velocity: f64,
}

fn half() -> f64 {
    0.5
}
fn default_n_total() -> f64 {
    1.0e7
}
fn default_n_deposit() -> f64 {
    3.0e6
}
fn default_demand() -> f64 {
    1.0e9
}
fn default_velocity() -> f64 {
    10.0
}

impl EconBase {
    fn set(&mut self, name: &str, v: f64) -> Result<(), SweepError> {
        let slot = match name {
            "p_block" => &mut self.p_block,
            "c" => &mut self.c,
            "beta" => &mut self.beta,
            "v_attack" => &mut self.v_attack,
            "n_attack_share" => &mut self.n_attack_share,
            "p_vol" => &mut self.p_vol,
            "n_total" => &mut self.n_total,
            "n_deposit" => &mut self.n_deposit,
            "demand" => &mut self.demand,
            "velocity" => &mut self.velocity,
            _ => return Err(SweepError::UnknownField(format!("econ.{name}"))),
        };
        *slot = v;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRange {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub field: String,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub range: Option<LinearRange>,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        if let Some(r) = &self.range {
            match r.steps {
                0 => {}
                1 => out.push(r.start),
                n => out.extend(
                    (0..n).map(|i| r.start + (r.end - r.start) * i as f64 / (n - 1) as f64),
                ),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema: String,
    pub econ: EconBase,
    #[serde(default)]
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, SweepError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| SweepError::Parse(e.to_string()))?;
        if spec.schema != SWEEP_SCHEMA {
            return Err(SweepError::Schema {
                found: spec.schema,
                expected: SWEEP_SCHEMA.into(),
            });
        }
        Ok(spec)
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points().len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis values at grid index `i`; the last axis varies fastest.
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let points: Vec<Vec<f64>> = self.axes.iter().map(Axis::points).collect();
        let mut out = vec![0.0; points.len()];
        for (k, p) in points.iter().enumerate().rev() {
            out[k] = p[i % p.len()];
            i /= p.len();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn lookup<'a>(v: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    match v {
        Value::Object(map) => map.get_mut(key),
        Value::Array(items) => {
            if let Ok(i) = key.parse::<usize>() {
                return items.get_mut(i);
            }
            items
                .iter_mut()
                .find(|item| item.get("name").and_then(Value::as_str) == Some(key))
        }
        _ => None,
    }
}

/// Writes `x` at a dotted path inside a scenario config.
pub fn set_scenario_field(
    cfg: &ScenarioConfig,
    path: &str,
    x: f64,
) -> Result<ScenarioConfig, String> {
    let mut root = serde_json::to_value(cfg).map_err(|e| e.to_string())?;
    let mut slot = &mut root;
    for key in path.split('.') {
        slot = lookup(slot, key).ok_or_else(|| format!("no field {key:?} in scenario.{path}"))?;
    }
    *slot = match slot {
        Value::Number(n) if n.is_u64() => {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(format!(
                    "scenario.{path} takes a non-negative integer, got {x}"
                ));
            }
            Value::from(x as u64)
        }
        Value::Number(_) => Value::from(x),
        Value::String(_) => Value::from(fmt(x)),
        _ => return Err(format!("scenario.{path} is not a scalar")),
    };
    let out: ScenarioConfig = serde_json::from_value(root).map_err(|e| e.to_string())?;
    out.validate().map_err(|e| e.to_string())?;
    Ok(out)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn econ_columns(base: &EconBase) -> Result<Vec<String>, String> {
    let p = EconomicParams::derive_with_attack_share(
        base.p_block,
        base.c,
        base.beta,
        base.v_attack,
        base.n_attack_share,
    )
    .map_err(|e| e.to_string())?;
    let vm = VelocityModel {
        demand: base.demand,
        velocity: base.velocity,
        n_total: base.n_total,
        n_deposit: base.n_deposit,
        p_volatility: base.p_vol,
    };
    let opt = |r: Result<f64, crate::economics::EconError>| r.map(fmt).unwrap_or_default();
    Ok(vec![
        fmt(p.beta),
        fmt(p.alpha),
        fmt(p.n_star),
        fmt(p.price),
        fmt(p.n_attack),
        p.deterred_by_stake_cost().to_string(),
        p.deterred_by_reward_bound().to_string(),
        fmt(p.safe_attack_value()),
        opt(equilibrium_deposit(base.p_block, base.p_vol, base.n_total)),
        opt(vm.price()),
        opt(vm.staking_yield(base.p_block)),
        opt(vm.r_liquid()),
    ])
}

fn run_point(spec: &SweepSpec, scenario: Option<&ScenarioConfig>, index: usize) -> Vec<String> {
    let values = spec.point(index);
    let mut row = vec![index.to_string()];
    row.extend(values.iter().map(|v| fmt(*v)));

    let mut econ = spec.econ;
    let mut cfg = scenario.cloned();
    let mut errors = Vec::new();
    for (axis, v) in spec.axes.iter().zip(&values) {
        if let Some(name) = axis.field.strip_prefix("econ.") {
            econ.set(name, *v).expect("checked");
        } else if let (Some(path), Some(c)) = (axis.field.strip_prefix("scenario."), cfg.as_ref()) {
            match set_scenario_field(c, path, *v) {
                Ok(next) => cfg = Some(next),
                Err(e) => errors.push(e),
            }
        }
    }

    match econ_columns(&econ) {
        Ok(cols) => row.extend(cols),
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), 12));
            errors.push(e);
        }
    }

    let scenario_cols = match (cfg, errors.is_empty()) {
        (Some(c), true) => match run_scenario(&c) {
            Ok(run) => {
                let r = run.report;
                vec![
                    r.conflicting_finalizations.len().to_string(),
                    r.finalization_halt_epochs.to_string(),
                    r.resume_epoch.map(|e| e.to_string()).unwrap_or_default(),
                    r.attacker_stake_burned.to_string(),
                    r.merchants_defrauded.to_string(),
                ]
            }
            Err(e) => {
                errors.push(e.to_string());
                vec![String::new(); 5]
            }
        },
        _ => vec![String::new(); 5],
    };
    row.extend(scenario_cols);
    row.push(errors.join("; "));
    row
}

/// Evaluates every grid point. Spec errors are reported before anything runs;
/// per-point failures land in the `error` column.
pub fn run_sweep(
    spec: &SweepSpec,
    scenario: Option<&ScenarioConfig>,
) -> Result<SweepTable, SweepError> {
    for axis in &spec.axes {
        if axis.points().is_empty() {
            return Err(SweepError::EmptyAxis(axis.field.clone()));
        }
        if let Some(name) = axis.field.strip_prefix("econ.") {
            if !ECON_FIELDS.contains(&name) {
                return Err(SweepError::UnknownField(axis.field.clone()));
            }
        } else if let Some(path) = axis.field.strip_prefix("scenario.") {
            let cfg = scenario.ok_or_else(|| SweepError::NoScenario {
                field: axis.field.clone(),
            })?;
            let mut root = serde_json::to_value(cfg).expect("config serializes");
            let mut slot = &mut root;
            for key in path.split('.') {
                slot = lookup(slot, key)
                    .ok_or_else(|| SweepError::UnknownField(axis.field.clone()))?;
            }
            if !(slot.is_number() || slot.is_string()) {
                return Err(SweepError::UnknownField(axis.field.clone()));
            }
        } else {
            return Err(SweepError::UnknownField(axis.field.clone()));
        }
    }

    let mut columns = vec!["grid_index".to_string()];
    columns.extend(spec.axes.iter().map(|a| a.field.clone()));
    columns.extend(RESULT_COLUMNS.iter().map(|c| c.to_string()));

    let rows = (0..spec.len())
        .into_par_iter()
        .map(|i| run_point(spec, scenario, i))
        .collect();
    Ok(SweepTable { columns, rows })
}
