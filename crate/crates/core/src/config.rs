//! Declarative run configuration.
//!
//! Configs are JSON with a strict schema: unknown fields are rejected,
//! parse errors carry line and column, and semantic errors name the
//! offending field.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{BatchConfig, SamplingPlan};
use crate::error::{Error, Result};
use crate::scenario::{enumerate_strata, RegimeSwitchConfig};
use crate::stats::DEFAULT_RESAMPLES;
use crate::types::{ConstraintSet, GovernanceSpec, MetricId, PolicySpec, UtilityModel};

pub const REFERENCE_PRESET: &str = "regime-switch-reference";
pub const REFERENCE_SEED: u64 = 42;
pub const REFERENCE_ROLLOUTS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Threshold grid over one governance metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub metric: MetricId,
    pub values: Vec<f64>,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: RegimeSwitchConfig,
    #[serde(default)]
    pub utility: UtilityModel,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub governance: GovernanceSpec,
    pub batch: BatchConfig,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub escalation_policy_id: Option<String>,
    #[serde(default)]
    pub champion_id: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn at(field: &str, e: Error) -> Error {
    Error::InvalidConfig(format!("`{field}`: {e}"))
}

impl RunConfig {
    /// Aggressive vs conservative on the default regime-switching world
    /// with the reference governance.
    pub fn regime_switch_reference() -> Self {
        RunConfig {
            scenario: RegimeSwitchConfig::default(),
            utility: UtilityModel::default(),
            policies: vec![
                PolicySpec::always_aggressive("pi_A"),
                PolicySpec::always_conservative("pi_B"),
            ],
            constraints: ConstraintSet::default(),
            governance: GovernanceSpec::regime_switch_reference(),
            batch: BatchConfig::naive(REFERENCE_ROLLOUTS, REFERENCE_SEED),
            bootstrap_resamples: DEFAULT_RESAMPLES,
            output: OutputConfig::default(),
            escalation_policy_id: None,
            champion_id: Some("pi_A".into()),
            sweep: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            REFERENCE_PRESET => Ok(Self::regime_switch_reference()),
            _ => Err(Error::InvalidConfig(format!(
                "unknown preset `{name}` (available: {REFERENCE_PRESET})"
            ))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fully resolved config with every default expanded.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| at("scenario", e))?;
        self.utility.validate().map_err(|e| at("utility", e))?;
        self.constraints.validate().map_err(|e| at("constraints", e))?;
        let mut ids = BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            p.validate().map_err(|e| at(&format!("policies[{i}]"), e))?;
            if !ids.insert(p.id.as_str()) {
                return Err(at(&format!("policies[{i}].id"), Error::DuplicateId(p.id.clone())));
            }
        }
        for (field, id) in [
            ("escalation_policy_id", &self.escalation_policy_id),
            ("champion_id", &self.champion_id),
        ] {
            if let Some(id) = id {
                if !ids.contains(id.as_str()) {
                    return Err(at(field, Error::UnknownId(id.clone())));
                }
            }
        }
        if self.batch.n == 0 {
            return Err(at("batch.n", Error::OutOfRange("must be at least 1".into())));
        }
        match &self.batch.sampling_plan {
            SamplingPlan::Naive => {}
            SamplingPlan::Importance { proposal_p } => {
                RegimeSwitchConfig::new(*proposal_p, self.scenario.horizon)
                    .map_err(|e| at("batch.sampling_plan.importance.proposal_p", e))?;
            }
            SamplingPlan::Stratified { partition, .. } => {
                let strata = enumerate_strata(&self.scenario, partition)
                    .map_err(|e| at("batch.sampling_plan.stratified.partition", e))?;
                if self.batch.n < strata.len() as u64 {
                    return Err(at(
                        "batch.n",
                        Error::OutOfRange(format!("stratified plan needs n >= {}", strata.len())),
                    ));
                }
            }
        }
        if self.batch.theta_mode == crate::engine::ThetaMode::Sampled
            && self.utility.theta_distribution.is_none()
        {
            return Err(at(
                "batch.theta_mode",
                Error::InvalidConfig("`sampled` requires utility.theta_distribution".into()),
            ));
        }
        if self.bootstrap_resamples < 100 {
            return Err(at(
                "bootstrap_resamples",
                Error::OutOfRange("must be at least 100".into()),
            ));
        }
        if let Some(s) = &self.sweep {
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return Err(at("sweep.values", Error::OutOfRange(format!("{v} is not finite"))));
            }
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::regime_switch_reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "policies": [{"id": "pi_B", "rule": "always_conservative"}],
        "batch": {"n": 1000, "master_seed": 7}
    }"#;

    #[test]
    fn minimal_config_expands_defaults() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(c.scenario, RegimeSwitchConfig::default());
        assert_eq!(c.governance, GovernanceSpec::regime_switch_reference());
        assert_eq!(c.bootstrap_resamples, 1000);
        let round = RunConfig::from_json_str(&c.to_json_value().to_string()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn reference_round_trips() {
        let c = RunConfig::regime_switch_reference();
        c.validate().unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), c);
        assert_eq!(RunConfig::preset(REFERENCE_PRESET).unwrap(), c);
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_field_is_located() {
        let bad = MINIMAL.replace("\"master_seed\"", "\"seed\"");
        let msg = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("unknown field `seed`"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let mut c = RunConfig::regime_switch_reference();
        c.escalation_policy_id = Some("ghost".into());
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("escalation_policy_id") && msg.contains("ghost"), "{msg}");

        let mut c = RunConfig::regime_switch_reference();
        c.policies.push(PolicySpec::always_defer("pi_A"));
        assert!(c.validate().unwrap_err().to_string().contains("policies[2].id"));

        let mut c = RunConfig::regime_switch_reference();
        c.batch.n = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch.n"));

        let mut c = RunConfig::regime_switch_reference();
        c.batch.sampling_plan = SamplingPlan::Importance { proposal_p: 1.5 };
        assert!(c.validate().unwrap_err().to_string().contains("proposal_p"));
    }

    #[test]
    fn policy_rules_parse() {
        let c = RunConfig::from_json_str(
            r#"{
            "policies": [
                {"id": "a", "rule": "always_aggressive"},
                {"id": "a_watch", "rule": {"intervened": {
                    "base": {"id": "a", "rule": "always_aggressive"},
                    "detect_prob": 0.5, "latency": 1}}}
            ],
            "batch": {"n": 10, "master_seed": 1,
                      "sampling_plan": {"stratified": {"partition": [["never"], ["0..3"], ["4..19"]],
                                                       "allocation": "equal"}}},
            "sweep": {"metric": "p_viol", "values": [0.01, 0.05]}
        }"#,
        )
        .unwrap();
        assert_eq!(c.policies[1].intervention_layers(), vec![(0.5, 1)]);
        assert_eq!(c.batch.sampling_plan.name(), "stratified");
    }
}
