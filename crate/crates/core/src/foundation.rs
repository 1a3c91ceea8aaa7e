//! Code-deferent legal foundation.
//!
//! Approved foundation-bound actions arrive as resolutions in a FIFO queue.
//! A serving director either executes the head resolution or refuses it,
//! and a refusal must cite a constraint that is active at that tick. The
//! executor has no other way to change state. Breach detection watches for
//! stalled resolutions, invalid citations and effects without a source, and
//! answers each finding with a Major proposal to remove the director.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::action::{Action, ExecutionSite, Payee, RemitPower};
use crate::error::{EngineError, EngineResult};
use crate::governance::{ProposalKind, ProposalOrigin, ProposalState};
use crate::jurisdiction::{active_constraint, ConstraintFlag};
use crate::state::EngineState;
use crate::types::{ActorId, ConstraintId, ModuleId, ProposalId, ResolutionId, Tick};

/// Cited when the action falls outside the purpose-bound remit.
pub const REMIT_CONSTRAINT: &str = "REMIT";
/// Cited when the treasury cannot cover an outbound transfer.
pub const TREASURY_CONSTRAINT: &str = "INSUFFICIENT_TREASURY";

fn default_max_delay() -> Tick {
    30
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundationConfig {
    #[serde(default)]
    pub directors: Vec<ActorId>,
    #[serde(default = "RemitPower::all")]
    pub remit: BTreeSet<RemitPower>,
    #[serde(default = "default_max_delay")]
    pub max_execution_delay: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectorStatus {
    Serving,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Director {
    pub actor: ActorId,
    pub ratified_at: Tick,
    pub status: DirectorStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionSource {
    Proposal(ProposalId),
    /// Raised by a reporting check for a module with a reporting duty.
    ComplianceFinding(ModuleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionState {
    Pending,
    Executed,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub id: ResolutionId,
    pub source: ResolutionSource,
    pub action: Action,
    #[serde(default)]
    pub tags: BTreeSet<ModuleId>,
    pub enqueued_at: Tick,
    pub state: ResolutionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_director: Option<ActorId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub resolution: ResolutionId,
    pub director: ActorId,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalRecord {
    pub resolution: ResolutionId,
    pub cited_constraint: ConstraintId,
    pub director: ActorId,
    pub tick: Tick,
    pub automatic: bool,
    /// Whether the citation named an active constraint at refusal time.
    pub valid: bool,
}

/// A state change caused by the foundation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundationEffect {
    pub resolution: Option<ResolutionId>,
    pub power: RemitPower,
    pub tick: Tick,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "breach", rename_all = "snake_case")]
pub enum BreachKind {
    ExecutionDelay { resolution: ResolutionId, pending_for: Tick },
    InvalidCitation { resolution: ResolutionId, constraint: ConstraintId },
    UnsourcedEffect { effect_index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreachFinding {
    pub kind: BreachKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub director: Option<ActorId>,
    pub tick: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal_proposal: Option<ProposalId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundationState {
    pub directors: Vec<Director>,
    pub remit: BTreeSet<RemitPower>,
    pub max_execution_delay: Tick,
    pub resolutions: Vec<Resolution>,
    /// Pending resolution ids in FIFO order.
    pub queue: Vec<ResolutionId>,
    pub executed: Vec<ExecutionRecord>,
    pub refusals: Vec<RefusalRecord>,
    pub effects: Vec<FoundationEffect>,
    pub breaches: Vec<BreachFinding>,
}

/// Outcome of asking a director to act on the queue head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "constraint", rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Executed,
    Refused(ConstraintId),
}

impl FoundationState {
    pub fn new(config: &FoundationConfig, now: Tick) -> Self {
        Self {
            directors: config
                .directors
                .iter()
                .map(|a| Director {
                    actor: a.clone(),
                    ratified_at: now,
                    status: DirectorStatus::Serving,
                })
                .collect(),
            remit: config.remit.clone(),
            max_execution_delay: config.max_execution_delay,
            resolutions: Vec::new(),
            queue: Vec::new(),
            executed: Vec::new(),
            refusals: Vec::new(),
            effects: Vec::new(),
            breaches: Vec::new(),
        }
    }

    pub fn serving(&self) -> impl Iterator<Item = &ActorId> {
        self.directors
            .iter()
            .filter(|d| d.status == DirectorStatus::Serving)
            .map(|d| &d.actor)
    }

    pub fn is_serving(&self, actor: &ActorId) -> bool {
        self.serving().any(|a| a == actor)
    }

    pub fn resolution(&self, id: ResolutionId) -> Option<&Resolution> {
        self.resolutions.get(id as usize)
    }

    fn duty_director(&self, id: ResolutionId) -> Option<ActorId> {
        let serving: Vec<_> = self.serving().cloned().collect();
        if serving.is_empty() {
            None
        } else {
            Some(serving[id as usize % serving.len()].clone())
        }
    }

    /// Re-point pending resolutions away from directors no longer serving.
    pub(crate) fn reassign_duties(&mut self) {
        let serving: BTreeSet<ActorId> = self.serving().cloned().collect();
        for rid in self.queue.clone() {
            let stale = self.resolutions[rid as usize]
                .assigned_director
                .as_ref()
                .is_none_or(|d| !serving.contains(d));
            if stale {
                self.resolutions[rid as usize].assigned_director = self.duty_director(rid);
            }
        }
    }

    fn has_finding(&self, pred: impl Fn(&BreachKind) -> bool) -> bool {
        self.breaches.iter().any(|b| pred(&b.kind))
    }
}

impl EngineState {
    fn foundation_ref(&self) -> EngineResult<&FoundationState> {
        self.foundation.as_ref().ok_or(EngineError::NoFoundation)
    }

    fn foundation_mut(&mut self) -> EngineResult<&mut FoundationState> {
        self.foundation.as_mut().ok_or(EngineError::NoFoundation)
    }

    /// Hand an executable foundation-bound proposal to the resolution queue.
    pub fn enqueue_resolution(&mut self, proposal: ProposalId) -> EngineResult<ResolutionId> {
        let p = self.governance.proposal(proposal)?;
        if p.state != ProposalState::Executable {
            return Err(EngineError::NotExecutable(proposal));
        }
        if !p.action.is_foundation_bound() {
            return Err(EngineError::NotFoundationBound(proposal));
        }
        let action = p.action.clone();
        let tags = p.tags.clone();
        let rid = self.push_resolution(ResolutionSource::Proposal(proposal), action, tags)?;
        let p = self.governance.proposal_mut(proposal)?;
        p.state = ProposalState::Enqueued;
        p.resolution = Some(rid);
        Ok(rid)
    }

    pub(crate) fn push_resolution(
        &mut self,
        source: ResolutionSource,
        action: Action,
        tags: BTreeSet<ModuleId>,
    ) -> EngineResult<ResolutionId> {
        let now = self.clock;
        let f = self.foundation_mut()?;
        let id = f.resolutions.len() as ResolutionId;
        let assigned_director = f.duty_director(id);
        f.resolutions.push(Resolution {
            id,
            source,
            action,
            tags,
            enqueued_at: now,
            state: ResolutionState::Pending,
            assigned_director,
        });
        f.queue.push(id);
        Ok(id)
    }

    /// First constraint that forbids executing the resolution, if any.
    pub fn forbidding_constraint(&self, res: &Resolution) -> Option<ConstraintId> {
        let f = self.foundation.as_ref()?;
        let ExecutionSite::Foundation(power) = res.action.execution_site() else {
            return Some(REMIT_CONSTRAINT.into());
        };
        if !f.remit.contains(&power) {
            return Some(REMIT_CONSTRAINT.into());
        }
        let mut modules: BTreeSet<&ModuleId> = res.tags.iter().collect();
        if let Action::TreasuryTransfer {
            to: Payee::External {
                module: Some(m), ..
            },
            ..
        } = &res.action
        {
            modules.insert(m);
        }
        let is_transfer = matches!(res.action, Action::TreasuryTransfer { .. });
        for m in modules {
            let Some(module) = self.jurisdictions.get(m).filter(|m| m.is_admitted()) else {
                continue;
            };
            for c in &module.spec.constraints {
                if is_transfer && matches!(c.flag, ConstraintFlag::TransferRestricted) {
                    return Some(c.id.clone());
                }
            }
        }
        if let Action::TreasuryTransfer { amount, .. } = &res.action {
            if *amount > self.treasury.balance {
                return Some(TREASURY_CONSTRAINT.into());
            }
        }
        None
    }

    fn head_check(&self, director: &ActorId, resolution: ResolutionId) -> EngineResult<()> {
        let f = self.foundation_ref()?;
        if !f.is_serving(director) {
            return Err(EngineError::NotADirector(director.clone()));
        }
        if f.queue.first() != Some(&resolution) {
            return Err(EngineError::NotQueueHead(resolution));
        }
        Ok(())
    }

    /// Execute the queue head, or refuse it citing the forbidding constraint.
    pub fn execute_resolution(&mut self, resolution: ResolutionId, director: &ActorId) -> EngineResult<ExecutionOutcome> {
        self.head_check(director, resolution)?;
        let now = self.clock;
        let res = self.foundation_ref()?.resolutions[resolution as usize].clone();
        if let Some(constraint) = self.forbidding_constraint(&res) {
            self.record_refusal(resolution, director, constraint.clone(), true, true)?;
            return Ok(ExecutionOutcome::Refused(constraint));
        }
        let ExecutionSite::Foundation(power) = res.action.execution_site() else {
            unreachable!("non-foundation actions are refused as outside the remit");
        };
        let description = match &res.action {
            Action::TreasuryTransfer { to, amount } => {
                self.treasury.debit(*amount)?;
                self.treasury.total_supply -= amount;
                let name = match to {
                    Payee::External { name, .. } => name.clone(),
                    Payee::Member(a) => a.to_string(),
                };
                format!("paid {amount} to {name}")
            }
            Action::Contract { counterparty, .. } => format!("contract executed with {counterparty}"),
            Action::License { licensee, asset, .. } => format!("licensed {asset} to {licensee}"),
            Action::ComplianceFiling { module, .. } => {
                self.compliance.last_report.insert(module.clone(), now);
                format!("compliance filing for {module}")
            }
            other => unreachable!("{:?} has no foundation execution", other.kind()),
        };
        let f = self.foundation_mut()?;
        f.queue.remove(0);
        f.resolutions[resolution as usize].state = ResolutionState::Executed;
        f.executed.push(ExecutionRecord {
            resolution,
            director: director.clone(),
            tick: now,
        });
        f.effects.push(FoundationEffect {
            resolution: Some(resolution),
            power,
            tick: now,
            description,
        });
        Ok(ExecutionOutcome::Executed)
    }

    /// Manual refusal. Accepted as a terminal outcome, but a citation that does
    /// not name an active constraint is a breach of code-deference.
    pub fn refuse_resolution(
        &mut self,
        resolution: ResolutionId,
        director: &ActorId,
        constraint: &ConstraintId,
    ) -> EngineResult<()> {
        self.head_check(director, resolution)?;
        let valid = active_constraint(&self.jurisdictions, constraint).is_some();
        self.record_refusal(resolution, director, constraint.clone(), false, valid)
    }

    fn record_refusal(
        &mut self,
        resolution: ResolutionId,
        director: &ActorId,
        constraint: ConstraintId,
        automatic: bool,
        valid: bool,
    ) -> EngineResult<()> {
        let now = self.clock;
        let f = self.foundation_mut()?;
        f.queue.remove(0);
        f.resolutions[resolution as usize].state = ResolutionState::Refused;
        f.refusals.push(RefusalRecord {
            resolution,
            cited_constraint: constraint,
            director: director.clone(),
            tick: now,
            automatic,
            valid,
        });
        Ok(())
    }

    /// Scan for breaches of code-deference; each new finding opens a Major
    /// DirectorRemove proposal against the responsible director.
    pub fn detect_breach(&mut self) -> Vec<BreachFinding> {
        let Some(f) = self.foundation.as_ref() else {
            return Vec::new();
        };
        let now = self.clock;
        let mut found: Vec<(BreachKind, Option<ActorId>)> = Vec::new();
        for rid in &f.queue {
            let r = &f.resolutions[*rid as usize];
            let pending_for = now - r.enqueued_at;
            if pending_for > f.max_execution_delay
                && !f.has_finding(|k| matches!(k, BreachKind::ExecutionDelay { resolution, .. } if resolution == rid))
            {
                found.push((
                    BreachKind::ExecutionDelay {
                        resolution: *rid,
                        pending_for,
                    },
                    r.assigned_director.clone(),
                ));
            }
        }
        for rec in f.refusals.iter().filter(|r| !r.valid) {
            if !f.has_finding(|k| matches!(k, BreachKind::InvalidCitation { resolution, .. } if *resolution == rec.resolution))
            {
                found.push((
                    BreachKind::InvalidCitation {
                        resolution: rec.resolution,
                        constraint: rec.cited_constraint.clone(),
                    },
                    Some(rec.director.clone()),
                ));
            }
        }
        for (i, e) in f.effects.iter().enumerate() {
            let sourced = e
                .resolution
                .and_then(|rid| f.resolution(rid))
                .is_some_and(|r| r.state == ResolutionState::Executed);
            if !sourced && !f.has_finding(|k| matches!(k, BreachKind::UnsourcedEffect { effect_index } if *effect_index == i)) {
                found.push((BreachKind::UnsourcedEffect { effect_index: i }, None));
            }
        }

        let mut findings = Vec::new();
        for (kind, director) in found {
            let removal_proposal = director.as_ref().and_then(|d| self.raise_removal(d, &kind));
            let finding = BreachFinding {
                kind,
                director,
                tick: now,
                removal_proposal,
            };
            self.foundation.as_mut().unwrap().breaches.push(finding.clone());
            findings.push(finding);
        }
        findings
    }

    fn raise_removal(&mut self, director: &ActorId, kind: &BreachKind) -> Option<ProposalId> {
        if !self.foundation.as_ref()?.is_serving(director) {
            return None;
        }
        // Reuse an in-flight removal for the same director.
        let existing = self.governance.proposals.values().find(|p| {
            p.state.is_in_flight()
                && matches!(&p.action, Action::DirectorRemove { actor, .. } if actor == director)
        });
        if let Some(p) = existing {
            return Some(p.id);
        }
        let cause = match kind {
            BreachKind::ExecutionDelay { resolution, pending_for } => {
                format!("resolution {resolution} pending for {pending_for} ticks")
            }
            BreachKind::InvalidCitation { resolution, constraint } => {
                format!("refused resolution {resolution} citing inactive constraint {constraint}")
            }
            BreachKind::UnsourcedEffect { effect_index } => format!("unsourced foundation effect {effect_index}"),
        };
        let now = self.clock;
        Some(self.open_proposal(
            ActorId::engine(),
            ProposalKind::Major,
            Action::DirectorRemove {
                actor: director.clone(),
                cause: format!("breach of code-deference: {cause}"),
            },
            BTreeSet::new(),
            ProposalOrigin::Engine {
                reason: "breach finding".to_string(),
            },
            now,
        ))
    }

    /// Resolutions neither executed nor refused, and without a breach finding.
    pub fn silently_pending(&self) -> Vec<ResolutionId> {
        let Some(f) = self.foundation.as_ref() else {
            return Vec::new();
        };
        f.queue
            .iter()
            .copied()
            .filter(|rid| !f.has_finding(|k| matches!(k, BreachKind::ExecutionDelay { resolution, .. } if resolution == rid)))
            .collect()
    }

    pub(crate) fn elect_director(&mut self, actor: &ActorId) -> EngineResult<()> {
        self.require_active(actor)?;
        let now = self.clock;
        let f = self.foundation_mut()?;
        if f.is_serving(actor) {
            return Err(EngineError::invalid(format!("{actor} already serves as director")));
        }
        f.directors.push(Director {
            actor: actor.clone(),
            ratified_at: now,
            status: DirectorStatus::Serving,
        });
        f.reassign_duties();
        Ok(())
    }

    pub(crate) fn remove_director(&mut self, actor: &ActorId) -> EngineResult<()> {
        let f = self.foundation_mut()?;
        if !f.is_serving(actor) {
            return Err(EngineError::NotADirector(actor.clone()));
        }
        if !f.queue.is_empty() && f.serving().count() == 1 {
            return Err(EngineError::invalid(
                "removing the last director would leave pending resolutions without a board",
            ));
        }
        for d in f.directors.iter_mut().filter(|d| &d.actor == actor) {
            d.status = DirectorStatus::Removed;
        }
        f.reassign_duties();
        Ok(())
    }
}
