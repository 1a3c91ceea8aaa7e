//! Run reports. A report is a pure function of the log, so regenerating it
//! from a replay reproduces it byte for byte.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::action::ActionKind;
use crate::canonical::{to_canonical_string, Digest};
use crate::engine::{replay, Engine, EventRecord, ReplayError};
use crate::event::Event;
use crate::foundation::{BreachFinding, RefusalRecord};
use crate::governance::{EffectOutcome, ProposalKind, ProposalOrigin, ProposalState, VoteTally};
use crate::metrics::{
    capture_coalition_size, deference_audit, gini, score_requirements, unresolved_findings, DeferenceAudit,
    MetricsError, RequirementScorecard,
};
use crate::oracle::OverrideRecord;
use crate::scenario::{Expectation, MetricName};
use crate::state::{ComplianceFinding, EngineState};
use crate::types::{ActorId, ProposalId, Tick};

pub const REPORT_NOTES: [&str; 2] = [
    "Met/Partial/Unmet verdicts are an interpretive analogy to qualitative coverage judgments, not a reproduction of them.",
    "Simulated sub-metrics cover rule-level behavior only; adoption, legal enforceability and off-chain conduct are not modeled.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub members: usize,
    pub coalition_size: Option<usize>,
    pub coalition_exact: bool,
    pub gini: f64,
    pub total_supply: u64,
    pub treasury: u64,
    pub rejections: usize,
    pub breaches: usize,
    pub refusals: usize,
    pub overrides: usize,
    pub unresolved_findings: usize,
    pub direct_actions: usize,
}

impl MetricValues {
    pub fn get(&self, m: MetricName) -> f64 {
        match m {
            MetricName::CoalitionSize => self.coalition_size.map_or(f64::INFINITY, |s| s as f64),
            MetricName::Gini => self.gini,
            MetricName::Rejections => self.rejections as f64,
            MetricName::Breaches => self.breaches as f64,
            MetricName::Refusals => self.refusals as f64,
            MetricName::Overrides => self.overrides as f64,
            MetricName::UnresolvedFindings => self.unresolved_findings as f64,
            MetricName::DirectActions => self.direct_actions as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalOutcome {
    pub id: ProposalId,
    pub kind: ProposalKind,
    pub action: ActionKind,
    pub proposer: ActorId,
    pub origin: ProposalOrigin,
    pub state: ProposalState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<VoteTally>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<EffectOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionEntry {
    pub index: u64,
    pub tick: Tick,
    pub event: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub expectation: Expectation,
    pub passed: bool,
    pub actual: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub final_digest: Digest,
    pub log_head: Digest,
    pub records: usize,
    pub clock: Tick,
    pub scorecard: RequirementScorecard,
    pub metrics: MetricValues,
    pub deference: DeferenceAudit,
    pub proposals: Vec<ProposalOutcome>,
    pub refusals: Vec<RefusalRecord>,
    pub breaches: Vec<BreachFinding>,
    pub overrides: Vec<OverrideRecord>,
    pub compliance_findings: Vec<ComplianceFinding>,
    pub rejections: Vec<RejectionEntry>,
    pub expectations: Vec<ExpectationResult>,
    pub expectations_passed: bool,
    pub notes: Vec<String>,
}

impl Report {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn rejections(log: &[EventRecord]) -> Vec<RejectionEntry> {
    log.iter()
        .filter_map(|r| match r.event() {
            Ok(Event::Rejected { event, reason }) => Some(RejectionEntry {
                index: r.index,
                tick: r.tick,
                event: event.name().to_string(),
                reason,
            }),
            _ => None,
        })
        .collect()
}

pub fn metric_values(state: &EngineState, log: &[EventRecord]) -> MetricValues {
    let c = capture_coalition_size(state);
    let f = state.foundation.as_ref();
    MetricValues {
        members: state.members.values().filter(|m| m.is_active()).count(),
        coalition_size: c.size,
        coalition_exact: c.exact,
        gini: gini(state),
        total_supply: state.treasury.total_supply,
        treasury: state.treasury.balance,
        rejections: rejections(log).len(),
        breaches: f.map_or(0, |f| f.breaches.len()),
        refusals: f.map_or(0, |f| f.refusals.len()),
        overrides: state.oracle.overrides.len(),
        unresolved_findings: unresolved_findings(state),
        direct_actions: state.audit.direct_actions.len(),
    }
}

fn check(e: &Expectation, state: &EngineState, card: &RequirementScorecard, m: &MetricValues) -> ExpectationResult {
    let (passed, actual) = match e {
        Expectation::Verdict { requirement, one_of } => {
            let v = card.get(*requirement).verdict;
            (one_of.contains(&v), json!(v))
        }
        Expectation::ProposalState { proposal, state: want } => {
            let got = state.governance.proposals.get(proposal).map(|p| p.state);
            (got == Some(*want), json!(got))
        }
        Expectation::Metric { metric, min, max } => {
            let v = m.get(*metric);
            let ok = min.is_none_or(|lo| v >= lo) && max.is_none_or(|hi| v <= hi);
            (ok, if v.is_finite() { json!(v) } else { Value::Null })
        }
    };
    ExpectationResult {
        expectation: e.clone(),
        passed,
        actual,
    }
}

pub fn build_report(engine: &Engine) -> Result<Report, MetricsError> {
    let state = engine.state();
    let log = engine.log();
    let scorecard = score_requirements(state, log)?;
    let metrics = metric_values(state, log);
    let expectations: Vec<ExpectationResult> = state
        .meta
        .expectations
        .iter()
        .map(|e| check(e, state, &scorecard, &metrics))
        .collect();
    let f = state.foundation.as_ref();
    Ok(Report {
        scenario: state.meta.name.clone(),
        final_digest: state.digest(),
        log_head: engine.head(),
        records: log.len(),
        clock: state.clock,
        deference: deference_audit(state),
        proposals: state
            .governance
            .proposals
            .values()
            .map(|p| ProposalOutcome {
                id: p.id,
                kind: p.kind,
                action: p.action.kind(),
                proposer: p.proposer.clone(),
                origin: p.origin.clone(),
                state: p.state,
                tally: p.tally.clone(),
                effect: p.effect.clone(),
            })
            .collect(),
        refusals: f.map(|f| f.refusals.clone()).unwrap_or_default(),
        breaches: f.map(|f| f.breaches.clone()).unwrap_or_default(),
        overrides: state.oracle.overrides.clone(),
        compliance_findings: state.compliance.findings.clone(),
        rejections: rejections(log),
        expectations_passed: expectations.iter().all(|r| r.passed),
        expectations,
        scorecard,
        metrics,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Replay a log and build its report.
pub fn report_from_log(records: &[EventRecord]) -> Result<Report, ReportError> {
    let engine = replay(records)?;
    Ok(build_report(&engine)?)
}
