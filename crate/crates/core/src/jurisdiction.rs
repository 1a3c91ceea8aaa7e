//! Jurisdictional modules: named constraint sets admitted and exited by
//! governance, and the degradation modes they trigger.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::Action;
use crate::canonical::{hashed_form, is_hashed_form};
use crate::error::{EngineError, EngineResult};
use crate::foundation::ResolutionSource;
use crate::governance::VoteMode;
use crate::state::{ComplianceFinding, EngineState};
use crate::types::{ConstraintId, ModuleId, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintFlag {
    TokenVotingProhibited,
    TransferRestricted,
    DataResidency {
        /// Payload field names whose values must never reach the log.
        sensitive_fields: BTreeSet<String>,
    },
    ReportingRequired {
        period: Tick,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: ConstraintId,
    pub flag: ConstraintFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub id: ModuleId,
    pub name: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleStatus {
    Admitted,
    Exited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JurisdictionModule {
    pub spec: ModuleSpec,
    pub admitted_at: Tick,
    pub status: ModuleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exited_at: Option<Tick>,
}

impl JurisdictionModule {
    pub fn is_admitted(&self) -> bool {
        self.status == ModuleStatus::Admitted
    }

    pub fn has_flag(&self, pred: impl Fn(&ConstraintFlag) -> bool) -> bool {
        self.spec.constraints.iter().any(|c| pred(&c.flag))
    }
}

pub type ModuleRegistry = BTreeMap<ModuleId, JurisdictionModule>;

/// OneMemberOneVote iff any admitted module among `tags` prohibits token voting.
pub fn effective_vote_mode(modules: &ModuleRegistry, tags: &BTreeSet<ModuleId>) -> VoteMode {
    let prohibited = tags
        .iter()
        .filter_map(|t| modules.get(t))
        .filter(|m| m.is_admitted())
        .any(|m| m.has_flag(|f| matches!(f, ConstraintFlag::TokenVotingProhibited)));
    if prohibited {
        VoteMode::OneMemberOneVote
    } else {
        VoteMode::TokenWeighted
    }
}

/// Constraint currently active (its module admitted), if any.
pub fn active_constraint<'a>(modules: &'a ModuleRegistry, id: &ConstraintId) -> Option<&'a Constraint> {
    modules
        .values()
        .filter(|m| m.is_admitted())
        .flat_map(|m| m.spec.constraints.iter())
        .find(|c| &c.id == id)
}

/// Union of sensitive field names over admitted DATA_RESIDENCY modules.
pub fn sensitive_fields(modules: &ModuleRegistry) -> BTreeSet<String> {
    modules
        .values()
        .filter(|m| m.is_admitted())
        .flat_map(|m| m.spec.constraints.iter())
        .filter_map(|c| match &c.flag {
            ConstraintFlag::DataResidency { sensitive_fields } => Some(sensitive_fields.iter().cloned()),
            _ => None,
        })
        .flatten()
        .collect()
}

/// Replace every string value stored under a sensitive key with its digest.
/// Already-hashed values are left as they are.
pub fn residency_filter(payload: &mut Value, sensitive: &BTreeSet<String>) {
    if sensitive.is_empty() {
        return;
    }
    match payload {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if sensitive.contains(k) {
                    hash_strings(v);
                } else {
                    residency_filter(v, sensitive);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| residency_filter(v, sensitive)),
        _ => {}
    }
}

fn hash_strings(v: &mut Value) {
    match v {
        Value::String(s) if !is_hashed_form(s) => *s = hashed_form(s),
        Value::Array(items) => items.iter_mut().for_each(hash_strings),
        Value::Object(map) => map.values_mut().for_each(hash_strings),
        _ => {}
    }
}

impl EngineState {
    pub(crate) fn retire_module(&mut self, id: &ModuleId) -> EngineResult<()> {
        let now = self.clock;
        let m = self
            .jurisdictions
            .get_mut(id)
            .filter(|m| m.is_admitted())
            .ok_or_else(|| EngineError::UnknownModule(id.clone()))?;
        m.status = ModuleStatus::Exited;
        m.exited_at = Some(now);
        Ok(())
    }

    /// Raise a finding for every admitted module whose last compliance report
    /// is `period` or more ticks old. One finding per missed due date; with a
    /// foundation, each finding enqueues a ComplianceFiling resolution.
    pub fn reporting_check(&mut self) -> Vec<ComplianceFinding> {
        let now = self.clock;
        let due: Vec<(ModuleId, Tick)> = self
            .jurisdictions
            .values()
            .filter(|m| m.is_admitted())
            .filter_map(|m| {
                let period = m.spec.constraints.iter().find_map(|c| match c.flag {
                    ConstraintFlag::ReportingRequired { period } => Some(period),
                    _ => None,
                })?;
                let last = self.compliance.last_report.get(&m.spec.id).copied().unwrap_or(m.admitted_at);
                let due_since = last.saturating_add(period);
                (now >= due_since).then(|| (m.spec.id.clone(), due_since))
            })
            .filter(|(id, due_since)| {
                !self
                    .compliance
                    .findings
                    .iter()
                    .any(|f| &f.module == id && f.due_since == *due_since)
            })
            .collect();
        let mut out = Vec::new();
        for (module, due_since) in due {
            let resolution = if self.foundation.is_some() {
                self.push_resolution(
                    ResolutionSource::ComplianceFinding(module.clone()),
                    Action::ComplianceFiling {
                        module: module.clone(),
                        report_hash: None,
                    },
                    [module.clone()].into(),
                )
                .ok()
            } else {
                None
            };
            let finding = ComplianceFinding {
                module,
                tick: now,
                due_since,
                resolution,
            };
            self.compliance.findings.push(finding.clone());
            out.push(finding);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn module(id: &str, flags: Vec<ConstraintFlag>, status: ModuleStatus) -> JurisdictionModule {
        JurisdictionModule {
            spec: ModuleSpec {
                id: id.into(),
                name: id.to_string(),
                constraints: flags
                    .into_iter()
                    .enumerate()
                    .map(|(i, flag)| Constraint {
                        id: format!("{id}-{i}").as_str().into(),
                        flag,
                    })
                    .collect(),
            },
            admitted_at: 0,
            status,
            exited_at: None,
        }
    }

    #[test]
    fn vote_mode_any_quantifier() {
        let mut reg = ModuleRegistry::new();
        reg.insert("eu".into(), module("eu", vec![ConstraintFlag::TransferRestricted], ModuleStatus::Admitted));
        reg.insert(
            "cn".into(),
            module("cn", vec![ConstraintFlag::TokenVotingProhibited], ModuleStatus::Admitted),
        );
        let tags = |ids: &[&str]| ids.iter().map(|s| ModuleId::from(*s)).collect::<BTreeSet<_>>();
        assert_eq!(effective_vote_mode(&reg, &tags(&[])), VoteMode::TokenWeighted);
        assert_eq!(effective_vote_mode(&reg, &tags(&["eu"])), VoteMode::TokenWeighted);
        assert_eq!(effective_vote_mode(&reg, &tags(&["cn"])), VoteMode::OneMemberOneVote);
        assert_eq!(effective_vote_mode(&reg, &tags(&["eu", "cn"])), VoteMode::OneMemberOneVote);
        reg.get_mut(&ModuleId::from("cn")).unwrap().status = ModuleStatus::Exited;
        assert_eq!(effective_vote_mode(&reg, &tags(&["eu", "cn"])), VoteMode::TokenWeighted);
    }

    #[test]
    fn residency_filter_hashes_sensitive_fields() {
        let sensitive: BTreeSet<String> = ["supplier_name".to_string()].into();
        let mut v = json!({"terms": {"supplier_name": "ACME Mill", "qty": "4"}, "other": ["supplier_name"]});
        residency_filter(&mut v, &sensitive);
        let bytes = serde_json::to_string(&v).unwrap();
        assert!(!bytes.contains("ACME Mill"));
        assert_eq!(v["terms"]["supplier_name"], json!(hashed_form("ACME Mill")));
        assert_eq!(v["terms"]["qty"], json!("4"));
        // idempotent
        let before = v.clone();
        residency_filter(&mut v, &sensitive);
        assert_eq!(v, before);
    }

    #[test]
    fn residency_filter_noop_without_modules() {
        let mut v = json!({"supplier_name": "ACME"});
        let before = v.clone();
        residency_filter(&mut v, &BTreeSet::new());
        assert_eq!(v, before);
    }
}
