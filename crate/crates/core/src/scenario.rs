//! Scenario files: genesis config, a timed script and expectations.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Payee};
use crate::event::Event;
use crate::governance::ProposalState;
use crate::metrics::{Requirement, RequirementVerdict};
use crate::state::GenesisConfig;
use crate::types::{ActorId, ModuleId, ProposalId, RoleId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    CoalitionSize,
    Gini,
    Rejections,
    Breaches,
    Refusals,
    Overrides,
    UnresolvedFindings,
    DirectActions,
}

/// An assertion checked against the final report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expect", rename_all = "snake_case")]
pub enum Expectation {
    Verdict {
        requirement: Requirement,
        one_of: Vec<RequirementVerdict>,
    },
    ProposalState {
        proposal: ProposalId,
        state: ProposalState,
    },
    Metric {
        metric: MetricName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub at: Tick,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub config: GenesisConfig,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown reference: {0}")]
    UnknownReference(String),
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(e.to_string()))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    for (i, pair) in scenario.script.windows(2).enumerate() {
        if pair[1].at < pair[0].at {
            return Err(ScenarioError::Parse {
                line: script_entry_line(text, i + 1),
                message: format!("script tick {} follows tick {}", pair[1].at, pair[0].at),
            });
        }
    }
    check_references(&scenario)?;
    Ok(scenario)
}

/// Best-effort line of the n-th `"at"` key after the `"script"` key.
fn script_entry_line(text: &str, n: usize) -> usize {
    let start = text.find("\"script\"").unwrap_or(0);
    text[start..]
        .match_indices("\"at\"")
        .nth(n)
        .map_or(1, |(off, _)| text[..start + off].matches('\n').count() + 1)
}

fn check_references(s: &Scenario) -> Result<(), ScenarioError> {
    let mut actors: BTreeSet<&ActorId> = s.config.members.iter().map(|m| &m.actor).collect();
    let mut modules: BTreeSet<&ModuleId> = s.config.modules.iter().map(|m| &m.id).collect();
    let roles: &BTreeSet<RoleId> = &s.config.roles;
    for entry in &s.script {
        match &entry.event {
            Event::RegisterMember { actor, .. } => {
                actors.insert(actor);
            }
            Event::SubmitProposal { action, .. } | Event::CommitteeDecide { action, .. } => match action {
                Action::MemberAdmit { actor, .. } => {
                    actors.insert(actor);
                }
                Action::ModuleAdmit { module } => {
                    modules.insert(&module.id);
                }
                _ => {}
            },
            _ => {}
        }
    }
    let unknown = |what: &str, name: &str| ScenarioError::UnknownReference(format!("{what} {name}"));
    let actor_ok = |a: &ActorId| actors.contains(a);
    let config_actors = s
        .config
        .foundation
        .iter()
        .flat_map(|f| f.directors.iter())
        .chain(s.config.initiator.iter())
        .chain(s.config.committees.iter().flat_map(|c| c.members.iter()))
        .chain(s.config.workstreams.iter().map(|w| &w.steward))
        .chain(s.config.policy.genesis_allocations.iter().map(|a| &a.actor));
    for a in config_actors {
        if !actor_ok(a) {
            return Err(unknown("actor", a.as_str()));
        }
    }
    for m in &s.config.members {
        if let Some(r) = m.roles.iter().find(|r| !roles.contains(*r)) {
            return Err(unknown("role", r.as_str()));
        }
    }
    for entry in &s.script {
        let e = &entry.event;
        if let Some(a) = e.actors().into_iter().find(|a| !actor_ok(a)) {
            return Err(unknown("actor", a.as_str()));
        }
        let event_roles: Vec<&RoleId> = match e {
            Event::RegisterMember { roles, .. } => roles.iter().collect(),
            Event::GrantRole { role, .. } => vec![role],
            _ => vec![],
        };
        if let Some(r) = event_roles.into_iter().find(|r| !roles.contains(*r)) {
            return Err(unknown("role", r.as_str()));
        }
        if let Event::SubmitProposal { tags, action, .. } | Event::CommitteeDecide { tags, action, .. } = e {
            if let Some(m) = tags.iter().find(|m| !modules.contains(m)) {
                return Err(unknown("module", m.as_str()));
            }
            let named: Vec<&ActorId> = match action {
                Action::TreasuryTransfer {
                    to: Payee::Member(a), ..
                }
                | Action::DirectorElect { actor: a }
                | Action::DirectorRemove { actor: a, .. }
                | Action::Clawback { actor: a, .. }
                | Action::Grant { to: a, .. }
                | Action::RoleGrant { actor: a, .. } => vec![a],
                _ => vec![],
            };
            if let Some(a) = named.into_iter().find(|a| !actor_ok(a)) {
                return Err(unknown("actor", a.as_str()));
            }
        }
    }
    Ok(())
}
