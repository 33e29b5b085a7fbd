//! Experiment files.

use std::path::Path;

use httq_core::maps::DriftSign;
use httq_core::validation::SweepSpec;
use httq_core::{Distribution, ScalarFn, SystemConfig};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub config: SystemConfig,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Step of the virtual-wait grid and of the densified path CSVs.
    #[serde(default)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub config: SystemConfig,
    #[serde(default = "one")]
    pub samples: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalSpec {
    pub service: Distribution,
    pub horizon: f64,
    #[serde(default)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFile {
    #[serde(flatten)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub configs: Vec<SystemConfig>,
    #[serde(default = "ten")]
    pub seeds: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn ten() -> u64 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    PhiNG,
    Skorokhod,
    PhiM,
    PhiMG,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsSpec {
    pub map: MapKind,
    /// Knots of the piecewise-linear input `y`.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub g: Option<ScalarFn>,
    /// Service law for the renewal maps.
    #[serde(default)]
    pub service: Option<Distribution>,
    /// Rate `μⁿ` for `phi_n_g`.
    #[serde(default)]
    pub mu_n: Option<f64>,
    #[serde(default)]
    pub sign: Option<DriftSign>,
    #[serde(default)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Simulate(SimulateSpec),
    Limit(LimitSpec),
    Renewal(RenewalSpec),
    Sweep(SweepFile),
    Compare(CompareSpec),
    Maps(MapsSpec),
}

impl ExperimentSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentSpec::Simulate(s) => s.seed,
            ExperimentSpec::Limit(s) => s.seed,
            ExperimentSpec::Sweep(s) => s.seed,
            ExperimentSpec::Compare(s) => s.seed,
            ExperimentSpec::Renewal(_) | ExperimentSpec::Maps(_) => None,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Parses an experiment file. `expected` is the subcommand the file
    /// was given to; a `command` key, if present, must agree with it.
    pub fn from_file(path: &Path, expected: &str) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, expected)
    }

    pub fn from_json(text: &str, expected: &str) -> Result<Self, RunError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| RunError::Invalid(format!("bad JSON: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| RunError::Invalid("experiment file must be a JSON object".into()))?;
        if let Some(cmd) = obj.remove("command") {
            if cmd.as_str() != Some(expected) {
                return Err(RunError::Invalid(format!(
                    "file is for command {cmd}, not {expected}"
                )));
            }
        }
        let spec = match expected {
            "simulate" => ExperimentSpec::Simulate(strict(value)?),
            "limit" => ExperimentSpec::Limit(strict(value)?),
            "renewal" => ExperimentSpec::Renewal(strict(value)?),
            "sweep" => {
                let seed = match obj.remove("seed") {
                    None => None,
                    Some(v) => Some(
                        v.as_u64()
                            .ok_or_else(|| RunError::Invalid("seed must be a nonnegative integer".into()))?,
                    ),
                };
                ExperimentSpec::Sweep(SweepFile {
                    sweep: strict(value)?,
                    seed,
                })
            }
            "compare" => ExperimentSpec::Compare(strict(value)?),
            "maps" => ExperimentSpec::Maps(strict(value)?),
            other => return Err(RunError::Invalid(format!("unknown command {other}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), RunError> {
        let check = |c: &SystemConfig| c.validate().map_err(|e| RunError::Invalid(e.to_string()));
        match self {
            ExperimentSpec::Simulate(s) => check(&s.config),
            ExperimentSpec::Limit(s) => check(&s.config),
            ExperimentSpec::Sweep(s) => s
                .sweep
                .n_list
                .iter()
                .try_for_each(|&n| check(&s.sweep.base.with_n(n))),
            ExperimentSpec::Compare(s) => s.configs.iter().try_for_each(check),
            ExperimentSpec::Renewal(s) if !(s.horizon > 0.0) => {
                Err(RunError::Invalid("renewal horizon must be positive".into()))
            }
            ExperimentSpec::Renewal(_) | ExperimentSpec::Maps(_) => Ok(()),
        }
    }
}

/// Deserializes `value`, failing with the list of every unknown key.
fn strict<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, RunError> {
    let mut unknown = Vec::new();
    let parsed = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()))
        .map_err(|e: serde_json::Error| RunError::Invalid(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(RunError::Invalid(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(parsed)
}

/// Parses `family:key=value,...`, e.g. `exp:rate=1` or
/// `hyperexp:probs=0.5|0.5,rates=0.6|3`.
pub fn parse_service(text: &str) -> Result<Distribution, RunError> {
    let bad = |msg: String| RunError::Invalid(format!("bad service `{text}`: {msg}"));
    let (family, params) = text.split_once(':').unwrap_or((text, ""));
    let mut kv = std::collections::BTreeMap::new();
    for part in params.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |k: &str| -> Result<f64, RunError> {
        kv.get(k)
            .ok_or_else(|| bad(format!("missing `{k}`")))?
            .parse()
            .map_err(|_| bad(format!("`{k}` is not a number")))
    };
    let list = |k: &str| -> Result<Vec<f64>, RunError> {
        kv.get(k)
            .ok_or_else(|| bad(format!("missing `{k}`")))?
            .split('|')
            .map(|v| v.parse().map_err(|_| bad(format!("`{k}` is not a list of numbers"))))
            .collect()
    };
    let known: &[&str] = match family {
        "exp" | "exponential" => &["rate"],
        "det" | "deterministic" => &["value"],
        "erlang" => &["stages", "rate"],
        "hyperexp" | "hyperexponential" => &["probs", "rates"],
        "lognormal" => &["mu", "sigma"],
        "uniform" => &["lo", "hi"],
        other => return Err(bad(format!("unknown family `{other}`"))),
    };
    let extra: Vec<&String> = kv.keys().filter(|k| !known.contains(&k.as_str())).collect();
    if !extra.is_empty() {
        return Err(bad(format!("unknown keys {extra:?}")));
    }
    let d = match family {
        "exp" | "exponential" => Distribution::exponential(num("rate")?),
        "det" | "deterministic" => Distribution::deterministic(num("value")?),
        "erlang" => Distribution::erlang(num("stages")? as u32, num("rate")?),
        "hyperexp" | "hyperexponential" => Distribution::hyperexponential(list("probs")?, list("rates")?),
        "lognormal" => Distribution::lognormal(num("mu")?, num("sigma")?),
        _ => Distribution::uniform(num("lo")?, num("hi")?),
    };
    d.map_err(|e| bad(e.to_string()))
}
