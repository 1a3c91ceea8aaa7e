//! Computable proxies for the five design requirements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{verify_log, EventRecord};
use crate::event::Event;
use crate::foundation::{BreachKind, ResolutionSource, ResolutionState};
use crate::governance::{passes, GovernanceParams, ProposalKind, ProposalOrigin, ProposalState, VoteMode};
use crate::state::EngineState;
use crate::token::RewardSource;
use crate::workstream::{TaskState, MAX_ESCALATION};

/// Largest member count searched exhaustively.
pub const EXACT_COALITION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringThresholds {
    /// R1: share of tasks in a terminal state.
    pub task_terminal_met: f64,
    pub task_terminal_partial: f64,
    /// R2: share of decisions traceable to votes, approvals or attestations.
    pub traceability_met: f64,
    pub traceability_partial: f64,
    /// R5: capture coalition size.
    pub coalition_met: usize,
    pub coalition_partial: usize,
    /// R5: largest acceptable Gini of voting power.
    pub gini_max: f64,
}

impl Default for ScoringThresholds {
    fn default() -> Self {
        Self {
            task_terminal_met: 0.8,
            task_terminal_partial: 0.5,
            traceability_met: 1.0,
            traceability_partial: 0.5,
            coalition_met: 3,
            coalition_partial: 2,
            gini_max: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Requirement {
    R1,
    R2,
    R3,
    R4,
    R5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementVerdict {
    Met,
    Partial,
    Unmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementScore {
    pub verdict: RequirementVerdict,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementScorecard {
    pub r1: RequirementScore,
    pub r2: RequirementScore,
    pub r3: RequirementScore,
    pub r4: RequirementScore,
    pub r5: RequirementScore,
    /// Genesis-only scenario: every verdict is Partial.
    pub degenerate: bool,
}

impl RequirementScorecard {
    pub fn get(&self, r: Requirement) -> &RequirementScore {
        match r {
            Requirement::R1 => &self.r1,
            Requirement::R2 => &self.r2,
            Requirement::R3 => &self.r3,
            Requirement::R4 => &self.r4,
            Requirement::R5 => &self.r5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("incomplete scenario: {0}")]
    IncompleteScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionSize {
    /// `None` when no coalition can pass a Major proposal at all.
    pub size: Option<usize>,
    pub exact: bool,
}

/// Token-weighted power of every active member, delegation ignored.
pub fn voting_powers(state: &EngineState) -> Vec<u128> {
    state
        .members
        .keys()
        .filter(|a| state.is_active(a))
        .map(|a| state.base_power(a, VoteMode::TokenWeighted) as u128)
        .collect()
}

fn coalition_passes(sum: u128, eligible: u128, params: &GovernanceParams) -> bool {
    passes(sum, 0, 0, eligible, ProposalKind::Major, params)
}

/// Smallest coalition that passes a Major proposal alone, by subset enumeration.
pub fn coalition_size_exhaustive(powers: &[u128], params: &GovernanceParams) -> Option<usize> {
    let n = powers.len();
    assert!(n <= 24, "exhaustive search is limited to small member sets");
    let eligible: u128 = powers.iter().sum();
    let mut best: Option<usize> = None;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if best.is_some_and(|b| size >= b) {
            continue;
        }
        let sum: u128 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| powers[i]).sum();
        if coalition_passes(sum, eligible, params) {
            best = Some(size);
        }
    }
    best
}

/// Largest holders first. An upper bound in general; exact here because the
/// passing condition is monotone in the coalition's summed power.
pub fn coalition_size_greedy(powers: &[u128], params: &GovernanceParams) -> Option<usize> {
    let eligible: u128 = powers.iter().sum();
    let mut sorted = powers.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut sum = 0;
    for (i, p) in sorted.iter().enumerate() {
        sum += p;
        if coalition_passes(sum, eligible, params) {
            return Some(i + 1);
        }
    }
    None
}

pub fn coalition_size(powers: &[u128], params: &GovernanceParams) -> CoalitionSize {
    if powers.len() <= EXACT_COALITION_LIMIT {
        CoalitionSize {
            size: coalition_size_exhaustive(powers, params),
            exact: true,
        }
    } else {
        CoalitionSize {
            size: coalition_size_greedy(powers, params),
            exact: false,
        }
    }
}

pub fn capture_coalition_size(state: &EngineState) -> CoalitionSize {
    coalition_size(&voting_powers(state), &state.params)
}

/// Σ|xi − xj| / (2 n Σx). Zero for empty or all-zero distributions.
pub fn gini_of(values: &[u128]) -> f64 {
    let n = values.len() as u128;
    let total: u128 = values.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    // Σ_i Σ_j |xi − xj| = 2 Σ_i (2i − n + 1) x_(i) over ascending order.
    let mut num: i128 = 0;
    for (i, x) in sorted.iter().enumerate() {
        num += (2 * i as i128 - n as i128 + 1) * *x as i128;
    }
    let num = 2 * num as u128;
    let den = 2 * n * total;
    let g = gcd(num, den).max(1);
    (num / g) as f64 / (den / g) as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn gini(state: &EngineState) -> f64 {
    gini_of(&voting_powers(state))
}

/// Terminal status of every foundation resolution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeferenceAudit {
    pub resolutions: usize,
    pub executed: usize,
    pub refused_valid: usize,
    /// Stalled or invalidly refused, with a breach finding and removal proposal.
    pub breached: usize,
    pub silent: usize,
    /// Foundation-bound proposals that never reached any executor.
    pub unrouted: usize,
    pub unsourced_effects: usize,
}

impl DeferenceAudit {
    pub fn total(&self) -> bool {
        self.silent == 0 && self.unrouted == 0 && self.unsourced_effects == 0
    }
}

pub fn deference_audit(state: &EngineState) -> DeferenceAudit {
    let mut audit = DeferenceAudit {
        unrouted: state
            .governance
            .proposals
            .values()
            .filter(|p| p.state == ProposalState::Executable && p.action.is_foundation_bound())
            .count(),
        ..Default::default()
    };
    let Some(f) = &state.foundation else {
        return audit;
    };
    let answered = |pred: &dyn Fn(&BreachKind) -> bool| {
        f.breaches
            .iter()
            .any(|b| pred(&b.kind) && (b.removal_proposal.is_some() || b.director.is_none()))
    };
    for r in &f.resolutions {
        audit.resolutions += 1;
        let refusal = f.refusals.iter().find(|x| x.resolution == r.id);
        match r.state {
            ResolutionState::Executed => audit.executed += 1,
            ResolutionState::Refused if refusal.is_some_and(|x| x.valid) => audit.refused_valid += 1,
            ResolutionState::Refused => {
                if answered(&|k| matches!(k, BreachKind::InvalidCitation { resolution, .. } if *resolution == r.id)) {
                    audit.breached += 1;
                } else {
                    audit.silent += 1;
                }
            }
            ResolutionState::Pending => {
                if answered(&|k| matches!(k, BreachKind::ExecutionDelay { resolution, .. } if *resolution == r.id)) {
                    audit.breached += 1;
                } else {
                    audit.silent += 1;
                }
            }
        }
    }
    audit.unsourced_effects = f
        .effects
        .iter()
        .enumerate()
        .filter(|(i, _)| !answered(&|k| matches!(k, BreachKind::UnsourcedEffect { effect_index } if effect_index == i)))
        .filter(|(_, e)| {
            !e.resolution
                .and_then(|rid| f.resolution(rid))
                .is_some_and(|r| r.state == ResolutionState::Executed)
        })
        .count();
    audit
}

fn ratio(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        1.0
    } else {
        part as f64 / whole as f64
    }
}

fn grade(met: bool, partial: bool) -> RequirementVerdict {
    if met {
        RequirementVerdict::Met
    } else if partial {
        RequirementVerdict::Partial
    } else {
        RequirementVerdict::Unmet
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn score(verdict: RequirementVerdict, metrics: &[(&str, f64)]) -> RequirementScore {
    RequirementScore {
        verdict,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

/// R1: delivery. Tasks reach terminal states and escalation stays bounded.
fn score_r1(state: &EngineState, t: &ScoringThresholds) -> RequirementScore {
    let tasks: Vec<_> = state.workstreams.values().flat_map(|w| w.tasks.values()).collect();
    let terminal = tasks.iter().filter(|t| t.state.is_terminal()).count();
    let bounded = tasks.iter().all(|t| t.escalations <= MAX_ESCALATION as u32);
    let stuck = tasks
        .iter()
        .filter(|t| matches!(t.state, TaskState::Escalated { level } if level >= MAX_ESCALATION) && t.resolution_proposal.is_none())
        .count();
    let share = ratio(terminal, tasks.len());
    let ok = bounded && stuck == 0;
    score(
        grade(
            !tasks.is_empty() && ok && share >= t.task_terminal_met,
            ok && (tasks.is_empty() || share >= t.task_terminal_partial),
        ),
        &[
            ("tasks", tasks.len() as f64),
            ("terminal_share", share),
            ("escalation_bounded", flag(bounded)),
            ("unresolved_top_escalations", stuck as f64),
        ],
    )
}

fn proposal_traced(state: &EngineState, id: u64) -> bool {
    let Some(p) = state.governance.proposals.get(&id) else {
        return false;
    };
    match &p.origin {
        ProposalOrigin::Committee { committee, approvals } => state
            .governance
            .committees
            .get(committee)
            .is_some_and(|c| approvals.is_subset(&c.members) && 2 * approvals.len() > c.members.len()),
        // Only a passed tally moves a proposal beyond voting.
        _ => p.tally.as_ref().is_some_and(|t| t.for_power > 0) && !matches!(p.state, ProposalState::Open | ProposalState::Failed),
    }
}

/// Count of recorded decisions and how many trace back to votes, committee
/// approvals, attestations or task evidence.
pub fn traceability(state: &EngineState) -> (usize, usize) {
    let mut total = 0;
    let mut traced = 0;
    let mut check = |ok: bool| {
        total += 1;
        traced += ok as usize;
    };
    for p in state.governance.proposals.values() {
        let acted = matches!(p.state, ProposalState::ExecutedOnChain | ProposalState::Enqueued)
            || (p.state == ProposalState::Passed && matches!(p.origin, ProposalOrigin::Challenge { .. }));
        if acted {
            check(proposal_traced(state, p.id));
        }
    }
    if let Some(f) = &state.foundation {
        for r in f.resolutions.iter().filter(|r| r.state == ResolutionState::Executed) {
            check(match &r.source {
                ResolutionSource::Proposal(id) => proposal_traced(state, *id),
                ResolutionSource::ComplianceFinding(m) => state.compliance.findings.iter().any(|x| &x.module == m),
            });
        }
    }
    for o in &state.oracle.overrides {
        check(proposal_traced(state, o.proposal));
    }
    for r in &state.audit.rewards {
        check(match &r.source {
            RewardSource::Proposal(id) => proposal_traced(state, *id),
            RewardSource::TaskCompletion { workstream, task } => state
                .workstreams
                .get(workstream)
                .and_then(|w| w.tasks.get(task))
                .is_some_and(|t| t.state == TaskState::Done && t.evidence_hash.is_some()),
        });
    }
    for c in &state.audit.clawbacks {
        check(proposal_traced(state, c.proposal));
    }
    for _ in &state.audit.direct_actions {
        check(false);
    }
    (total, traced)
}

/// R2: auditability. The log verifies and every decision has a citation chain.
fn score_r2(state: &EngineState, log: &[EventRecord], t: &ScoringThresholds) -> RequirementScore {
    let log_ok = verify_log(log).is_ok();
    let (total, traced) = traceability(state);
    let share = ratio(traced, total);
    score(
        grade(
            log_ok && share >= t.traceability_met,
            log_ok && share >= t.traceability_partial,
        ),
        &[
            ("log_ok", flag(log_ok)),
            ("decisions", total as f64),
            ("traced", traced as f64),
            ("traceable_share", share),
            ("direct_actions", state.audit.direct_actions.len() as f64),
        ],
    )
}

/// Sign of the covariance between contributions and rewards; `None` if either is constant.
pub fn reward_contribution_sign(state: &EngineState) -> Option<std::cmp::Ordering> {
    let mut contribution: BTreeMap<&crate::types::ActorId, i128> = state.members.keys().map(|a| (a, 0)).collect();
    let mut reward: BTreeMap<&crate::types::ActorId, i128> = contribution.clone();
    for t in state.workstreams.values().flat_map(|w| w.tasks.values()) {
        if t.state == TaskState::Done {
            if let Some(a) = &t.assignee {
                *contribution.entry(a).or_default() += 1;
            }
        }
    }
    for r in &state.audit.rewards {
        *reward.entry(&r.to).or_default() += r.amount as i128;
    }
    let n = contribution.len() as i128;
    let xs: Vec<i128> = contribution.values().copied().collect();
    let ys: Vec<i128> = contribution.keys().map(|a| reward.get(a).copied().unwrap_or(0)).collect();
    let (sx, sy): (i128, i128) = (xs.iter().sum(), ys.iter().sum());
    let sxy: i128 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let var = |v: &[i128], s: i128| n * v.iter().map(|x| x * x).sum::<i128>() - s * s;
    if n < 2 || var(&xs, sx) == 0 || var(&ys, sy) == 0 {
        return None;
    }
    Some((n * sxy - sx * sy).cmp(&0))
}

/// R3: incentives. Rewards track contributions; clawbacks never touch vested tokens.
fn score_r3(state: &EngineState) -> RequirementScore {
    let sign = reward_contribution_sign(state);
    let clawbacks_ok = state
        .audit
        .clawbacks
        .iter()
        .all(|c| c.vested_after == c.vested_before && c.amount <= c.unvested_before);
    let positive = sign == Some(std::cmp::Ordering::Greater);
    score(
        grade(positive && clawbacks_ok, sign.is_none() && clawbacks_ok),
        &[
            (
                "reward_contribution_sign",
                match sign {
                    Some(o) => o as i8 as f64,
                    None => 0.0,
                },
            ),
            ("correlation_defined", flag(sign.is_some())),
            ("clawbacks", state.audit.clawbacks.len() as f64),
            ("clawback_bound_ok", flag(clawbacks_ok)),
        ],
    )
}

/// Compliance findings whose reporting duty is still outstanding.
pub fn unresolved_findings(state: &EngineState) -> usize {
    state
        .compliance
        .findings
        .iter()
        .filter(|f| {
            let admitted = state.jurisdictions.get(&f.module).is_some_and(|m| m.is_admitted());
            let reported = state
                .compliance
                .last_report
                .get(&f.module)
                .is_some_and(|t| *t >= f.due_since);
            admitted && !reported
        })
        .count()
}

/// R4: legal interface. Every resolution terminates visibly; no compliance gaps.
fn score_r4(state: &EngineState) -> RequirementScore {
    let audit = deference_audit(state);
    let has_foundation = state.foundation.is_some();
    let unresolved = unresolved_findings(state);
    let clean = audit.breached == 0 && unresolved == 0;
    score(
        grade(has_foundation && audit.total() && clean, has_foundation && audit.total()),
        &[
            ("foundation", flag(has_foundation)),
            ("resolutions", audit.resolutions as f64),
            ("executed", audit.executed as f64),
            ("refused_valid", audit.refused_valid as f64),
            ("breached", audit.breached as f64),
            ("silent", audit.silent as f64),
            ("unrouted", audit.unrouted as f64),
            ("deference_total", flag(audit.total())),
            ("unresolved_findings", unresolved as f64),
        ],
    )
}

/// R5: capture resistance. Coalition size, power concentration and a working
/// challenge mechanism.
fn score_r5(state: &EngineState, t: &ScoringThresholds) -> RequirementScore {
    let c = capture_coalition_size(state);
    let g = gini(state);
    let challenges: Vec<_> = state
        .governance
        .proposals
        .values()
        .filter(|p| matches!(p.origin, ProposalOrigin::Challenge { .. }))
        .collect();
    let challenges_ok = challenges.iter().all(|p| match (&p.origin, p.state) {
        (ProposalOrigin::Challenge { target }, ProposalState::Passed) => {
            state.governance.proposals.get(target).map(|x| x.state) == Some(ProposalState::Withdrawn)
        }
        (_, s) => s == ProposalState::Failed,
    });
    let enabled = state.params.challenges_enabled;
    let size = c.size.unwrap_or(0);
    score(
        grade(
            c.size.is_some() && size >= t.coalition_met && g <= t.gini_max && enabled && challenges_ok,
            c.size.is_none() || size >= t.coalition_partial,
        ),
        &[
            ("coalition_size", size as f64),
            ("coalition_exact", flag(c.exact)),
            ("gini", g),
            ("challenges_enabled", flag(enabled)),
            ("challenges_filed", challenges.len() as f64),
            ("challenges_ok", flag(challenges_ok)),
        ],
    )
}

/// Score a completed scenario from its final state and log.
pub fn score_requirements(state: &EngineState, log: &[EventRecord]) -> Result<RequirementScorecard, MetricsError> {
    let first = log
        .first()
        .ok_or_else(|| MetricsError::IncompleteScenario("empty log".into()))?;
    if !matches!(first.event(), Ok(Event::Genesis { .. })) {
        return Err(MetricsError::IncompleteScenario("log does not start with genesis".into()));
    }
    let t = &state.meta.scoring;
    let degenerate = log[1..]
        .iter()
        .all(|r| matches!(r.event(), Ok(Event::AdvanceTime { .. } | Event::Rejected { .. })));
    let mut card = RequirementScorecard {
        r1: score_r1(state, t),
        r2: score_r2(state, log, t),
        r3: score_r3(state),
        r4: score_r4(state),
        r5: score_r5(state, t),
        degenerate,
    };
    if degenerate {
        for s in [&mut card.r1, &mut card.r2, &mut card.r3, &mut card.r4, &mut card.r5] {
            s.verdict = RequirementVerdict::Partial;
        }
    }
    Ok(card)
}
