//! Experiment configuration files.
//!
//! An experiment file is JSON. `scenario` and `filter` are partial objects merged over
//! the built-in defaults, and each variant's `overrides` is merged over the
//! resulting filter. Unknown keys are rejected with their full path.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use setbp::filter::{BirthModel, FilterConfig};
use setbp::scenario::ScenarioConfig;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    #[serde(default = "empty_object")]
    pub overrides: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default = "empty_object")]
    scenario: Value,
    #[serde(default = "empty_object")]
    filter: Value,
    trials: usize,
    #[serde(default)]
    base_seed: u64,
    #[serde(default = "default_steady_state_after")]
    steady_state_after: usize,
    #[serde(default = "default_variants")]
    variants: Vec<VariantConfig>,
}

fn default_steady_state_after() -> usize {
    40
}

/// `pmb_full`, `pmb_baseline` and `mb`.
pub fn default_variants() -> Vec<VariantConfig> {
    vec![
        VariantConfig {
            name: "pmb_full".into(),
            overrides: empty_object(),
        },
        VariantConfig {
            name: "pmb_baseline".into(),
            overrides: serde_json::json!({ "use_new_target_sensor_messages": false }),
        },
        VariantConfig {
            name: "mb".into(),
            overrides: serde_json::json!({ "map_model": "mb" }),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub filter: FilterConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    pub trials: usize,
    pub base_seed: u64,
    /// Scans after this index form the steady-state summary.
    pub steady_state_after: usize,
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    pub fn variant(&self, name: &str) -> Result<&Variant> {
        self.variants.iter().find(|v| v.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
            CliError::Config(format!("unknown variant `{name}` (known: {})", known.join(", ")))
        })
    }

    /// Seed of trial `index`.
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Deep merge; an override of a tagged object with a different `kind`
/// replaces it, starting from that kind's defaults when known.
fn merge(base: &mut Value, over: &Value, kind_default: &dyn Fn(&str) -> Option<Value>) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(key) {
                    Some(slot) => {
                        let switches_kind = matches!(
                            (slot.get("kind"), value.get("kind")),
                            (Some(old), Some(new)) if old != new
                        );
                        if switches_kind {
                            let kind = value["kind"].as_str().unwrap_or_default();
                            let mut fresh = kind_default(kind).unwrap_or_else(empty_object);
                            merge(&mut fresh, value, kind_default);
                            *slot = fresh;
                        } else {
                            merge(slot, value, kind_default);
                        }
                    }
                    None => {
                        b.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

fn birth_default(kind: &str) -> Option<Value> {
    let model = match kind {
        "informative" => BirthModel::informative(),
        "uninformative" => BirthModel::uninformative(),
        _ => return None,
    };
    serde_json::to_value(model).ok()
}

fn no_kind_default(_: &str) -> Option<Value> {
    None
}

fn typed<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
        CliError::Config(format!("{location}: {}", e.inner()))
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration types serialize")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let raw: RawConfig = typed(value, "experiment")?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                raw.schema_version
            )));
        }
        if raw.trials < 1 {
            return Err(CliError::Config("trials: must be at least 1".into()));
        }

        let mut scenario_value = to_value(&ScenarioConfig::default());
        merge(&mut scenario_value, &raw.scenario, &no_kind_default);
        let scenario: ScenarioConfig = typed(scenario_value, "scenario")?;
        scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut filter_value = to_value(&FilterConfig::default());
        merge(&mut filter_value, &raw.filter, &birth_default);
        let filter: FilterConfig = typed(filter_value.clone(), "filter")?;
        filter.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut seen = HashSet::new();
        let mut variants = Vec::with_capacity(raw.variants.len());
        for v in &raw.variants {
            if !seen.insert(v.name.clone()) {
                return Err(CliError::Config(format!("variants: duplicate name `{}`", v.name)));
            }
            if v.name.is_empty() || v.name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("variants: invalid name `{}`", v.name)));
            }
            let mut merged = filter_value.clone();
            merge(&mut merged, &v.overrides, &birth_default);
            let prefix = format!("variants.{}.overrides", v.name);
            let cfg: FilterConfig = typed(merged, &prefix)?;
            cfg.validate()
                .map_err(|e| CliError::Config(format!("{prefix}: {e}")))?;
            variants.push(Variant {
                name: v.name.clone(),
                filter: cfg,
            });
        }
        if variants.is_empty() {
            return Err(CliError::Config("variants: at least one variant is required".into()));
        }
        Ok(Self {
            scenario,
            filter,
            trials: raw.trials,
            base_seed: raw.base_seed,
            steady_state_after: raw.steady_state_after,
            variants,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}
