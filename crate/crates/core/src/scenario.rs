//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected so that a typo
//! does not silently fall back to a default.
//!
//! ```toml
//! name = "smoke"
//! processes = 4
//! stake = [3, 3, 3, 3]
//! horizon = 3000
//!
//! [network]
//! min = 1
//! max = 10
//!
//! [workload]
//! transfers = 3
//! window = 100
//!
//! [adversary]
//! policy = { every = 50, behaviors = ["drop-all"] }
//! script = [{ trigger = "on-supersede", target = "members", behavior = "stale-sign" }]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Amount, ProcessId};
use crate::netbcast::DelayModel;
use crate::node::Mutation;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub processes: u32,
    /// Initial transaction amounts, one per process; their sum is `M`.
    pub stake: Vec<Amount>,
    pub horizon: u64,
    #[serde(default)]
    pub network: DelayModel,
    pub workload: Workload,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub mutation: Mutation,
    /// Default seed range for `fuzz`, half open.
    #[serde(default)]
    pub seeds: Option<[u64; 2]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmountPolicy {
    /// Pay everything, leaving no change.
    All,
    /// Uniform in `1..=value`.
    #[default]
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub transfers: u32,
    /// Transfer attempts are scheduled uniformly in `[0, window]`.
    pub window: u64,
    #[serde(default = "default_retry")]
    pub retry: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub payers: Option<Vec<u32>>,
    #[serde(default)]
    pub recipients: Option<Vec<u32>>,
    #[serde(default)]
    pub amount: AmountPolicy,
}

fn default_retry() -> u64 {
    25
}

fn default_attempts() -> u32 {
    200
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    DropAll,
    SelectiveSilence,
    EquivocateHistories,
    DoubleSpend,
    StaleSign,
    Replay,
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::DropAll => "drop-all",
            Behavior::SelectiveSilence => "selective-silence",
            Behavior::EquivocateHistories => "equivocate-histories",
            Behavior::DoubleSpend => "double-spend",
            Behavior::StaleSign => "stale-sign",
            Behavior::Replay => "replay",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    #[serde(default)]
    pub policy: Option<Policy>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

/// Corrupt the richest corruptible process every `every` ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub every: u64,
    pub behaviors: Vec<Behavior>,
    #[serde(default)]
    pub start: u64,
    #[serde(default)]
    pub max: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    /// Fires when a pivotal configuration is superseded.
    OnSupersede,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Process(u32),
    Named(NamedTarget),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedTarget {
    /// Every member of the superseded configuration.
    Members,
    Richest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub at: Option<u64>,
    #[serde(default)]
    pub trigger: Option<Trigger>,
    pub target: Target,
    pub behavior: Behavior,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn process_ids(&self) -> Vec<ProcessId> {
        (0..self.processes).map(ProcessId).collect()
    }

    pub fn total_stake(&self) -> Amount {
        self.stake.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.processes == 0 {
            return bad("at least one process is required".into());
        }
        if self.stake.len() != self.processes as usize {
            return bad(format!(
                "stake lists {} amounts for {} processes",
                self.stake.len(),
                self.processes
            ));
        }
        if self.stake.iter().try_fold(0u64, |a, s| a.checked_add(*s)).is_none() {
            return bad("total stake overflows".into());
        }
        if self.total_stake() == 0 {
            return bad("total stake must be positive".into());
        }
        if self.network.min > self.network.max {
            return bad("network.min exceeds network.max".into());
        }
        let known = |ids: &Option<Vec<u32>>, field: &str| -> Result<(), ScenarioError> {
            if let Some(ids) = ids {
                if let Some(p) = ids.iter().find(|p| **p >= self.processes) {
                    return Err(ScenarioError::Invalid(format!(
                        "workload.{field} references undeclared process {p}"
                    )));
                }
                if ids.is_empty() {
                    return Err(ScenarioError::Invalid(format!("workload.{field} is empty")));
                }
            }
            Ok(())
        };
        known(&self.workload.payers, "payers")?;
        known(&self.workload.recipients, "recipients")?;
        if let Some(p) = &self.adversary.policy {
            if p.every == 0 {
                return bad("adversary.policy.every must be positive".into());
            }
            if p.behaviors.is_empty() {
                return bad("adversary.policy.behaviors is empty".into());
            }
        }
        for (i, e) in self.adversary.script.iter().enumerate() {
            if e.at.is_some() == e.trigger.is_some() {
                return bad(format!("adversary.script[{i}] needs exactly one of `at` and `trigger`"));
            }
            match e.target {
                Target::Process(p) if p >= self.processes => {
                    return bad(format!("adversary.script[{i}] targets undeclared process {p}"));
                }
                Target::Named(NamedTarget::Members) if e.trigger.is_none() => {
                    return bad(format!("adversary.script[{i}]: `members` needs a trigger"));
                }
                _ => {}
            }
        }
        if let Some([a, b]) = self.seeds {
            if a > b {
                return bad("seeds range is reversed".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"
name = "smoke"
processes = 4
stake = [3, 3, 3, 3]
horizon = 3000
[workload]
transfers = 3
window = 100
"#;

    #[test]
    fn parses_minimal_scenario() {
        let sc = Scenario::from_toml(SMOKE).unwrap();
        assert_eq!(sc.total_stake(), 12);
        assert_eq!(sc.network, DelayModel::default());
        assert_eq!(sc.mutation, Mutation::None);
        assert_eq!(sc.workload.retry, 25);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{SMOKE}\nbogus = 1\n");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn rejects_zero_stake_and_bad_references() {
        let zero = SMOKE.replace("[3, 3, 3, 3]", "[0, 0, 0, 0]");
        assert!(matches!(Scenario::from_toml(&zero), Err(ScenarioError::Invalid(_))));
        let short = SMOKE.replace("[3, 3, 3, 3]", "[3, 3]");
        assert!(matches!(Scenario::from_toml(&short), Err(ScenarioError::Invalid(_))));
        let payer = format!("{SMOKE}payers = [9]\n");
        assert!(matches!(Scenario::from_toml(&payer), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn adversary_script_targets() {
        let text = format!(
            "{SMOKE}\n[adversary]\nscript = [{{ trigger = \"on-supersede\", target = \"members\", behavior = \"stale-sign\" }}, {{ at = 5, target = 2, behavior = \"drop-all\" }}]\n"
        );
        let sc = Scenario::from_toml(&text).unwrap();
        assert_eq!(sc.adversary.script[0].target, Target::Named(NamedTarget::Members));
        assert_eq!(sc.adversary.script[1].target, Target::Process(2));
        let both = format!(
            "{SMOKE}\n[adversary]\nscript = [{{ at = 1, trigger = \"on-supersede\", target = 1, behavior = \"replay\" }}]\n"
        );
        assert!(Scenario::from_toml(&both).is_err());
    }
}
