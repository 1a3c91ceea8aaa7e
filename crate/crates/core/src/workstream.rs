//! Modular workstreams: role-gated assignment, escalation and
//! completion-triggered rewards.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::{Action, TaskResolution};
use crate::canonical::Digest;
use crate::error::{EngineError, EngineResult};
use crate::governance::{ProposalKind, ProposalOrigin};
use crate::oracle::{Aggregate, OracleValue};
use crate::state::EngineState;
use crate::token::{RewardKind, RewardSource};
use crate::types::{ActorId, Amount, ProposalId, RoleId, TaskId, Tick, Topic, WorkstreamId};

pub const MAX_ESCALATION: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    StewardSignoff,
    OracleTopic(Topic),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub spec_hash: Digest,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkstreamSpec {
    pub id: WorkstreamId,
    pub steward: ActorId,
    #[serde(default)]
    pub required_roles: BTreeSet<RoleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_rate: Option<Amount>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Assigned,
    Escalated { level: u8 },
    Done,
    Cancelled,
}

impl TaskState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskState::Done | TaskState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub spec_hash: Digest,
    pub verification: Verification,
    pub state: TaskState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignee: Option<ActorId>,
    #[serde(default)]
    pub signed_off: bool,
    #[serde(default)]
    pub escalations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_proposal: Option<ProposalId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_hash: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workstream {
    pub id: WorkstreamId,
    pub steward: ActorId,
    pub required_roles: BTreeSet<RoleId>,
    pub reward_rate: Amount,
    pub tasks: BTreeMap<TaskId, Task>,
}

impl Workstream {
    pub fn from_spec(spec: &WorkstreamSpec, default_rate: Amount) -> Self {
        Self {
            id: spec.id.clone(),
            steward: spec.steward.clone(),
            required_roles: spec.required_roles.clone(),
            reward_rate: spec.reward_rate.unwrap_or(default_rate),
            tasks: spec
                .tasks
                .iter()
                .map(|t| {
                    (
                        t.id.clone(),
                        Task {
                            id: t.id.clone(),
                            spec_hash: t.spec_hash,
                            verification: t.verification.clone(),
                            state: TaskState::Open,
                            assignee: None,
                            signed_off: false,
                            escalations: 0,
                            resolution_proposal: None,
                            evidence_hash: None,
                            completed_at: None,
                        },
                    )
                })
                .collect(),
        }
    }
}

fn task_key(ws: &WorkstreamId, task: &TaskId) -> String {
    format!("{ws}/{task}")
}

impl EngineState {
    pub(crate) fn create_workstream(&mut self, spec: &WorkstreamSpec) -> EngineResult<()> {
        if self.workstreams.contains_key(&spec.id) {
            return Err(EngineError::invalid(format!("workstream {} already exists", spec.id)));
        }
        self.require_active(&spec.steward)?;
        for r in &spec.required_roles {
            if !self.roles.contains(r) {
                return Err(EngineError::UnknownRole(r.to_string()));
            }
        }
        let mut ids = BTreeSet::new();
        if !spec.tasks.iter().all(|t| ids.insert(&t.id)) {
            return Err(EngineError::invalid("duplicate task id"));
        }
        let ws = Workstream::from_spec(spec, self.policy.contribution_reward_rate);
        self.workstreams.insert(spec.id.clone(), ws);
        Ok(())
    }

    fn task_mut(&mut self, ws: &WorkstreamId, task: &TaskId) -> EngineResult<&mut Task> {
        self.workstreams
            .get_mut(ws)
            .and_then(|w| w.tasks.get_mut(task))
            .ok_or_else(|| EngineError::UnknownTask(task_key(ws, task)))
    }

    fn workstream(&self, ws: &WorkstreamId) -> EngineResult<&Workstream> {
        self.workstreams
            .get(ws)
            .ok_or_else(|| EngineError::UnknownTask(ws.to_string()))
    }

    /// Assign a task. The steward assigns or reassigns after a first- or
    /// second-level escalation; members may also self-assign open tasks.
    pub fn assign_task(
        &mut self,
        by: &ActorId,
        ws_id: &WorkstreamId,
        task_id: &TaskId,
        assignee: &ActorId,
    ) -> EngineResult<()> {
        self.require_active(by)?;
        self.require_active(assignee)?;
        let ws = self.workstream(ws_id)?;
        let steward = ws.steward.clone();
        let required = ws.required_roles.clone();
        let task = ws
            .tasks
            .get(task_id)
            .ok_or_else(|| EngineError::UnknownTask(task_key(ws_id, task_id)))?;
        let reassignable = matches!(task.state, TaskState::Escalated { level } if level < MAX_ESCALATION);
        match task.state {
            TaskState::Open if by == &steward || by == assignee => {}
            TaskState::Open => {
                return Err(EngineError::Unauthorized(format!(
                    "{by} may not assign {task_id} to another member"
                )))
            }
            _ if reassignable && by == &steward => {}
            _ => return Err(EngineError::TaskNotOpen(task_key(ws_id, task_id))),
        }
        let roles = &self.members[assignee].roles;
        if let Some(missing) = required.iter().find(|r| !roles.contains(*r)) {
            return Err(EngineError::MissingRole(assignee.clone(), missing.to_string()));
        }
        let task = self.task_mut(ws_id, task_id)?;
        task.assignee = Some(assignee.clone());
        task.state = TaskState::Assigned;
        task.signed_off = false;
        Ok(())
    }

    /// Raise a task one escalation level. Reaching the top level opens an
    /// Ordinary proposal that decides between reassignment and cancellation.
    pub fn escalate_task(
        &mut self,
        by: &ActorId,
        ws_id: &WorkstreamId,
        task_id: &TaskId,
        proposed: Option<TaskResolution>,
    ) -> EngineResult<u8> {
        self.require_active(by)?;
        let steward = self.workstream(ws_id)?.steward.clone();
        let now = self.clock;
        let task = self.task_mut(ws_id, task_id)?;
        if by != &steward && task.assignee.as_ref() != Some(by) {
            return Err(EngineError::Unauthorized(format!(
                "{by} is neither steward nor assignee of {task_id}"
            )));
        }
        let level = match task.state {
            TaskState::Assigned => 1,
            TaskState::Escalated { level } if level < MAX_ESCALATION => level + 1,
            TaskState::Escalated { .. } => return Err(EngineError::MaxEscalation(task_key(ws_id, task_id))),
            _ => return Err(EngineError::TaskNotOpen(task_key(ws_id, task_id))),
        };
        task.state = TaskState::Escalated { level };
        task.escalations += 1;
        if level == MAX_ESCALATION {
            let action = Action::TaskResolve {
                workstream: ws_id.clone(),
                task: task_id.clone(),
                resolution: proposed.unwrap_or(TaskResolution::Cancel),
            };
            let id = self.open_proposal(
                ActorId::engine(),
                ProposalKind::Ordinary,
                action,
                Default::default(),
                ProposalOrigin::Engine {
                    reason: format!("task {} escalated to governance", task_key(ws_id, task_id)),
                },
                now,
            );
            self.task_mut(ws_id, task_id)?.resolution_proposal = Some(id);
        }
        Ok(level)
    }

    pub fn signoff_task(&mut self, steward: &ActorId, ws_id: &WorkstreamId, task_id: &TaskId) -> EngineResult<()> {
        if &self.workstream(ws_id)?.steward != steward {
            return Err(EngineError::Unauthorized(format!("{steward} is not the steward of {ws_id}")));
        }
        let task = self.task_mut(ws_id, task_id)?;
        if !matches!(task.state, TaskState::Assigned | TaskState::Escalated { .. }) {
            return Err(EngineError::TaskNotOpen(task_key(ws_id, task_id)));
        }
        task.signed_off = true;
        Ok(())
    }

    /// Mark a task done once verification holds, paying the workstream rate
    /// from the treasury to the assignee.
    pub fn complete_task(
        &mut self,
        actor: &ActorId,
        ws_id: &WorkstreamId,
        task_id: &TaskId,
        evidence_hash: Digest,
    ) -> EngineResult<()> {
        let now = self.clock;
        let rate = self.workstream(ws_id)?.reward_rate;
        let task = self
            .workstream(ws_id)?
            .tasks
            .get(task_id)
            .ok_or_else(|| EngineError::UnknownTask(task_key(ws_id, task_id)))?
            .clone();
        let in_progress = matches!(task.state, TaskState::Assigned)
            || matches!(task.state, TaskState::Escalated { level } if level < MAX_ESCALATION);
        if !in_progress {
            return Err(EngineError::TaskNotOpen(task_key(ws_id, task_id)));
        }
        let assignee = task.assignee.clone().expect("assigned tasks carry an assignee");
        if actor != &assignee {
            return Err(EngineError::Unauthorized(format!("{actor} is not the assignee of {task_id}")));
        }
        let verified = match &task.verification {
            Verification::StewardSignoff => task.signed_off,
            Verification::OracleTopic(topic) => matches!(
                self.oracle.latest_reading(topic, now),
                Aggregate::Reading(OracleValue::Bool(true)) | Aggregate::Overridden(OracleValue::Bool(true))
            ),
        };
        if !verified {
            return Err(EngineError::VerificationMissing(task_key(ws_id, task_id)));
        }
        self.distribute_reward(
            RewardKind::TaskReward,
            &assignee,
            rate,
            None,
            RewardSource::TaskCompletion {
                workstream: ws_id.clone(),
                task: task_id.clone(),
            },
        )?;
        let task = self.task_mut(ws_id, task_id)?;
        task.state = TaskState::Done;
        task.evidence_hash = Some(evidence_hash);
        task.completed_at = Some(now);
        Ok(())
    }

    /// Apply a governance decision on a top-level escalation.
    pub(crate) fn resolve_task(
        &mut self,
        ws_id: &WorkstreamId,
        task_id: &TaskId,
        resolution: &TaskResolution,
    ) -> EngineResult<()> {
        let required = self.workstream(ws_id)?.required_roles.clone();
        if let TaskResolution::Reassign(to) = resolution {
            self.require_active(to)?;
            let roles = &self.members[to].roles;
            if let Some(missing) = required.iter().find(|r| !roles.contains(*r)) {
                return Err(EngineError::MissingRole(to.clone(), missing.to_string()));
            }
        }
        let task = self.task_mut(ws_id, task_id)?;
        if task.state.is_terminal() {
            return Err(EngineError::TaskNotOpen(task_key(ws_id, task_id)));
        }
        match resolution {
            TaskResolution::Reassign(to) => {
                task.assignee = Some(to.clone());
                task.state = TaskState::Assigned;
                task.signed_off = false;
            }
            TaskResolution::Cancel => task.state = TaskState::Cancelled,
        }
        Ok(())
    }

    /// A top-level escalation whose governance proposal failed is cancelled.
    pub(crate) fn on_task_resolution_failed(&mut self, ws_id: &WorkstreamId, task_id: &TaskId) {
        if let Ok(task) = self.task_mut(ws_id, task_id) {
            if !task.state.is_terminal() {
                task.state = TaskState::Cancelled;
            }
        }
    }
}
