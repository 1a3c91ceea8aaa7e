//! Engine events and their state transitions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{Action, TaskResolution};
use crate::canonical::Digest;
use crate::error::{EngineError, EngineResult};
use crate::governance::{ProposalKind, VoteChoice};
use crate::oracle::OracleValue;
use crate::scenario::Expectation;
use crate::state::{EngineState, GenesisConfig, Onboarding};
use crate::types::{
    ActorId, Amount, CommitteeId, ConstraintId, ModuleId, ProposalId, ProviderId, ResolutionId, RoleId, TaskId,
    Topic, WorkstreamId,
};

/// Topic prefix for compliance attestations; the suffix is a module id.
pub const COMPLIANCE_TOPIC_PREFIX: &str = "compliance/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Genesis {
        name: String,
        config: Box<GenesisConfig>,
        #[serde(default)]
        expectations: Vec<Expectation>,
    },
    AdvanceTime {
        ticks: u64,
    },
    /// Direct onboarding by the configured initiator.
    RegisterMember {
        by: ActorId,
        actor: ActorId,
        #[serde(default)]
        roles: BTreeSet<RoleId>,
    },
    GrantRole {
        by: ActorId,
        actor: ActorId,
        role: RoleId,
    },
    ExitMember {
        actor: ActorId,
    },
    SubmitProposal {
        proposer: ActorId,
        kind: ProposalKind,
        action: Action,
        #[serde(default)]
        tags: BTreeSet<ModuleId>,
    },
    CastVote {
        voter: ActorId,
        proposal: ProposalId,
        choice: VoteChoice,
    },
    Delegate {
        delegator: ActorId,
        delegate: ActorId,
        scope: BTreeSet<ProposalKind>,
    },
    RevokeDelegation {
        delegator: ActorId,
        scope: BTreeSet<ProposalKind>,
    },
    FileChallenge {
        challenger: ActorId,
        target: ProposalId,
    },
    CommitteeDecide {
        committee: CommitteeId,
        action: Action,
        approvals: BTreeSet<ActorId>,
        #[serde(default)]
        tags: BTreeSet<ModuleId>,
    },
    Stake {
        actor: ActorId,
        amount: Amount,
    },
    Unstake {
        actor: ActorId,
        amount: Amount,
    },
    Redeem {
        actor: ActorId,
        amount: Amount,
    },
    SubmitAttestation {
        provider: ProviderId,
        topic: Topic,
        round: u64,
        value: OracleValue,
        evidence_hash: Digest,
        /// Free-form context; sensitive keys are hashed before logging.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        metadata: BTreeMap<String, Value>,
    },
    ExecuteResolution {
        director: ActorId,
        resolution: ResolutionId,
    },
    RefuseResolution {
        director: ActorId,
        resolution: ResolutionId,
        constraint: ConstraintId,
    },
    AssignTask {
        by: ActorId,
        workstream: WorkstreamId,
        task: TaskId,
        assignee: ActorId,
    },
    EscalateTask {
        by: ActorId,
        workstream: WorkstreamId,
        task: TaskId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proposed: Option<TaskResolution>,
    },
    SignoffTask {
        steward: ActorId,
        workstream: WorkstreamId,
        task: TaskId,
    },
    CompleteTask {
        actor: ActorId,
        workstream: WorkstreamId,
        task: TaskId,
        evidence_hash: Digest,
    },
    /// An event the runner attempted that failed validation. Changes nothing.
    Rejected {
        event: Box<Event>,
        reason: String,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Genesis { .. } => "genesis",
            Event::AdvanceTime { .. } => "advance_time",
            Event::RegisterMember { .. } => "register_member",
            Event::GrantRole { .. } => "grant_role",
            Event::ExitMember { .. } => "exit_member",
            Event::SubmitProposal { .. } => "submit_proposal",
            Event::CastVote { .. } => "cast_vote",
            Event::Delegate { .. } => "delegate",
            Event::RevokeDelegation { .. } => "revoke_delegation",
            Event::FileChallenge { .. } => "file_challenge",
            Event::CommitteeDecide { .. } => "committee_decide",
            Event::Stake { .. } => "stake",
            Event::Unstake { .. } => "unstake",
            Event::Redeem { .. } => "redeem",
            Event::SubmitAttestation { .. } => "submit_attestation",
            Event::ExecuteResolution { .. } => "execute_resolution",
            Event::RefuseResolution { .. } => "refuse_resolution",
            Event::AssignTask { .. } => "assign_task",
            Event::EscalateTask { .. } => "escalate_task",
            Event::SignoffTask { .. } => "signoff_task",
            Event::CompleteTask { .. } => "complete_task",
            Event::Rejected { .. } => "rejected",
        }
    }

    /// Actors the event names directly, for reference checks.
    pub fn actors(&self) -> Vec<&ActorId> {
        let mut out = match self {
            Event::RegisterMember { by, .. } | Event::GrantRole { by, .. } => vec![by],
            Event::ExitMember { actor }
            | Event::Stake { actor, .. }
            | Event::Unstake { actor, .. }
            | Event::Redeem { actor, .. }
            | Event::CompleteTask { actor, .. } => vec![actor],
            Event::SubmitProposal { proposer, .. } => vec![proposer],
            Event::CastVote { voter, .. } => vec![voter],
            Event::Delegate { delegator, delegate, .. } => vec![delegator, delegate],
            Event::RevokeDelegation { delegator, .. } => vec![delegator],
            Event::FileChallenge { challenger, .. } => vec![challenger],
            Event::CommitteeDecide { approvals, .. } => approvals.iter().collect(),
            Event::ExecuteResolution { director, .. } | Event::RefuseResolution { director, .. } => vec![director],
            Event::AssignTask { by, assignee, .. } => vec![by, assignee],
            Event::EscalateTask { by, .. } => vec![by],
            Event::SignoffTask { steward, .. } => vec![steward],
            Event::Genesis { .. } | Event::AdvanceTime { .. } | Event::SubmitAttestation { .. } | Event::Rejected { .. } => {
                vec![]
            }
        };
        if let Event::GrantRole { actor, .. } = self {
            out.push(actor);
        }
        out
    }
}

impl EngineState {
    /// Apply one event. Callers must discard `self` on error.
    pub(crate) fn apply_event(&mut self, event: &Event) -> EngineResult<()> {
        if let Event::Rejected { event, reason } = event {
            let mut probe = self.clone();
            return match probe.apply_event(event) {
                Err(_) => Ok(()),
                Ok(()) => Err(EngineError::invalid(format!(
                    "event recorded as rejected ({reason}) now applies"
                ))),
            };
        }
        match event {
            Event::Genesis {
                name,
                config,
                expectations,
            } => self.apply_genesis(name, config, expectations)?,
            Event::AdvanceTime { ticks } => {
                for _ in 0..*ticks {
                    self.clock += 1;
                    self.on_tick()?;
                }
            }
            Event::RegisterMember { by, actor, roles } => self.register_member(actor, roles, Onboarding::Direct(by))?,
            Event::GrantRole { by, actor, role } => self.grant_role(actor, role, Some(by))?,
            Event::ExitMember { actor } => self.exit_member(actor)?,
            Event::SubmitProposal {
                proposer,
                kind,
                action,
                tags,
            } => {
                self.submit_proposal(proposer, *kind, action.clone(), tags.clone())?;
            }
            Event::CastVote { voter, proposal, choice } => {
                self.cast_vote(voter, *proposal, *choice)?;
            }
            Event::Delegate {
                delegator,
                delegate,
                scope,
            } => self.delegate(delegator, delegate, scope)?,
            Event::RevokeDelegation { delegator, scope } => self.revoke_delegation(delegator, scope)?,
            Event::FileChallenge { challenger, target } => {
                self.file_challenge(challenger, *target)?;
            }
            Event::CommitteeDecide {
                committee,
                action,
                approvals,
                tags,
            } => {
                self.committee_decide(committee, action.clone(), approvals, tags.clone())?;
            }
            Event::Stake { actor, amount } => self.stake(actor, *amount)?,
            Event::Unstake { actor, amount } => self.unstake(actor, *amount)?,
            Event::Redeem { actor, amount } => self.redeem(actor, *amount)?,
            Event::SubmitAttestation {
                provider,
                topic,
                round,
                value,
                evidence_hash,
                ..
            } => {
                let now = self.clock;
                self.oracle
                    .submit_attestation(provider, topic, *round, *value, *evidence_hash, now)?;
                if let Some(module) = topic.as_str().strip_prefix(COMPLIANCE_TOPIC_PREFIX) {
                    let module = ModuleId::from(module);
                    if self.jurisdictions.get(&module).is_some_and(|m| m.is_admitted()) {
                        self.compliance.last_report.insert(module, now);
                    }
                }
            }
            Event::ExecuteResolution { director, resolution } => {
                self.execute_resolution(*resolution, director)?;
            }
            Event::RefuseResolution {
                director,
                resolution,
                constraint,
            } => self.refuse_resolution(*resolution, director, constraint)?,
            Event::AssignTask {
                by,
                workstream,
                task,
                assignee,
            } => self.assign_task(by, workstream, task, assignee)?,
            Event::EscalateTask {
                by,
                workstream,
                task,
                proposed,
            } => {
                self.escalate_task(by, workstream, task, proposed.clone())?;
            }
            Event::SignoffTask {
                steward,
                workstream,
                task,
            } => self.signoff_task(steward, workstream, task)?,
            Event::CompleteTask {
                actor,
                workstream,
                task,
                evidence_hash,
            } => self.complete_task(actor, workstream, task, *evidence_hash)?,
            Event::Rejected { .. } => unreachable!(),
        }
        if !matches!(event, Event::AdvanceTime { .. }) {
            self.settle()?;
        }
        self.applied += 1;
        Ok(())
    }

    /// Scheduled work for one tick, in a fixed order.
    fn on_tick(&mut self) -> EngineResult<()> {
        let now = self.clock;
        self.vest_tick(now);
        self.oracle.rotate_operators(now);
        self.settle()?;
        self.detect_breach();
        self.reporting_check();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{from_canonical_bytes, to_canonical_bytes};

    #[test]
    fn events_round_trip_canonically() {
        let events = vec![
            Event::AdvanceTime { ticks: 5 },
            Event::CastVote {
                voter: "a".into(),
                proposal: 3,
                choice: VoteChoice::For,
            },
            Event::Rejected {
                event: Box::new(Event::Stake {
                    actor: "a".into(),
                    amount: 1,
                }),
                reason: "nope".into(),
            },
        ];
        for e in events {
            let bytes = to_canonical_bytes(&e);
            let back: Event = from_canonical_bytes(&bytes).unwrap();
            assert_eq!(back, e);
            assert_eq!(to_canonical_bytes(&back), bytes);
        }
    }

    #[test]
    fn advance_time_on_empty_state() {
        let mut s = EngineState::default();
        s.apply_event(&Event::AdvanceTime { ticks: 5 }).unwrap();
        assert_eq!(s.clock, 5);
    }
}
