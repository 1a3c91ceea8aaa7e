use std::collections::BTreeSet;

use crate::action::{Action, ActionKind, ParamValue, Payee, RemitPower};
use crate::error::{EngineError, EngineResult};
use crate::oracle::Aggregate;
use crate::state::{EngineState, Onboarding};
use crate::token::{RewardKind, RewardRecord, RewardSource};
use crate::types::{ActorId, ProposalId, Ratio, Tick};

use super::{EffectOutcome, ProposalKind, ProposalOrigin, ProposalState, UpgradeRecord, Verdict};

impl EngineState {
    /// Move every proposal as far as the clock allows. Zero-length windows
    /// cascade within the same tick.
    pub(crate) fn settle(&mut self) -> EngineResult<()> {
        let now = self.clock;
        loop {
            let mut changed = false;
            let ids: Vec<ProposalId> = self.governance.proposals.keys().copied().collect();
            for id in ids {
                let before = self.governance.proposals[&id].state;
                self.advance_lifecycle(id, now)?;
                changed |= self.governance.proposals[&id].state != before;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// One lifecycle step for a proposal at `now`. Idempotent per tick.
    pub fn advance_lifecycle(&mut self, id: ProposalId, now: Tick) -> EngineResult<ProposalState> {
        let p = self.governance.proposal(id)?;
        let (state, since, opened_at) = (p.state, p.stage_since, p.opened_at);
        match state {
            ProposalState::Open if now >= opened_at + self.params.voting_window => {
                self.close_voting(id, now)?;
            }
            ProposalState::Timelocked if now >= since + self.params.timelock => {
                let p = self.governance.proposal_mut(id)?;
                p.state = ProposalState::Challengeable;
                p.stage_since = now;
            }
            ProposalState::Challengeable if now >= since + self.params.challenge_window => {
                if matches!(self.governance.proposals[&id].action, Action::Upgrade { .. }) {
                    let epoch = self.params.upgrade_epoch_of(now);
                    if self.governance.upgrade_executions.get(epoch) >= self.params.max_upgrades_per_epoch {
                        // Held until the next upgrade epoch.
                        return Ok(ProposalState::Challengeable);
                    }
                    self.governance.upgrade_executions.bump(epoch);
                }
                let p = self.governance.proposal_mut(id)?;
                p.state = ProposalState::Executable;
                p.executable_at = Some(now);
                self.dispatch_executable(id)?;
            }
            _ => {}
        }
        Ok(self.governance.proposals[&id].state)
    }

    fn dispatch_executable(&mut self, id: ProposalId) -> EngineResult<()> {
        if self.governance.proposals[&id].action.is_foundation_bound() {
            if self.foundation.is_some() {
                self.enqueue_resolution(id)?;
            }
            // Without a foundation the proposal stays Executable and unrouted.
            return Ok(());
        }
        let outcome = match self.run_effect(id) {
            Ok(()) => EffectOutcome::Applied,
            Err(e) => {
                if let Action::TaskResolve { workstream, task, .. } = &self.governance.proposals[&id].action {
                    let (ws, t) = (workstream.clone(), task.clone());
                    self.on_task_resolution_failed(&ws, &t);
                }
                EffectOutcome::Rejected(e.to_string())
            }
        };
        self.mark_executed(id, outcome);
        Ok(())
    }

    fn mark_executed(&mut self, id: ProposalId, outcome: EffectOutcome) {
        let now = self.clock;
        let p = self.governance.proposals.get_mut(&id).expect("known proposal");
        p.state = ProposalState::ExecutedOnChain;
        p.effect = Some(outcome);
        p.effect_at = Some(now);
    }

    /// Apply an executable proposal's on-chain action atomically.
    fn run_effect(&mut self, id: ProposalId) -> EngineResult<()> {
        let p = self.governance.proposal(id)?;
        if p.state != ProposalState::Executable {
            return Err(EngineError::Unauthorized(format!("proposal {id} is not executable")));
        }
        let action = p.action.clone();
        let mut scratch = self.clone();
        scratch.apply_action(id, &action)?;
        *self = scratch;
        Ok(())
    }

    fn apply_action(&mut self, id: ProposalId, action: &Action) -> EngineResult<()> {
        let now = self.clock;
        match action {
            Action::TreasuryTransfer {
                to: Payee::Member(actor),
                amount,
            } => {
                self.require_active(actor)?;
                self.treasury.debit(*amount)?;
                self.accounts.entry(actor.clone()).or_default().vested += amount;
                self.audit.rewards.push(RewardRecord {
                    kind: RewardKind::Grant,
                    to: actor.clone(),
                    amount: *amount,
                    source: RewardSource::Proposal(id),
                    tick: now,
                    vesting: false,
                });
            }
            Action::Grant {
                to,
                amount,
                kind,
                vesting,
            } => self.distribute_reward(*kind, to, *amount, *vesting, RewardSource::Proposal(id))?,
            Action::ParamChange { field, value } => self.apply_param_change(field, value)?,
            Action::DirectorElect { actor } => self.elect_director(actor)?,
            Action::DirectorRemove { actor, .. } => self.remove_director(actor)?,
            Action::ModuleAdmit { module } => self.install_module(module.clone())?,
            Action::ModuleExit { module_id } => self.retire_module(module_id)?,
            Action::OracleSetChange { providers } => self.oracle.apply_set_change(providers.clone(), now)?,
            Action::OracleOverride { topic, round, value } => {
                self.oracle.apply_override(id, topic.clone(), *round, *value, now);
            }
            Action::Upgrade { tag } => self.governance.upgrades.push(UpgradeRecord {
                proposal: id,
                tag: tag.clone(),
                tick: now,
            }),
            Action::Clawback { actor, amount, cause } => self.clawback(id, actor, *amount, cause)?,
            Action::RoleGrant { actor, role } => self.grant_role(actor, role, None)?,
            Action::CommitteeCharter { id: cid, members, mandate } => {
                self.charter_committee(&super::CommitteeSpec {
                    id: cid.clone(),
                    members: members.clone(),
                    mandate: mandate.clone(),
                })?
            }
            Action::WorkstreamCreate { spec } => self.create_workstream(spec)?,
            Action::MemberAdmit { actor, roles } => self.register_member(actor, roles, Onboarding::Proposal)?,
            Action::TaskResolve {
                workstream,
                task,
                resolution,
            } => self.resolve_task(workstream, task, resolution)?,
            Action::Challenge { .. }
            | Action::TreasuryTransfer {
                to: Payee::External { .. },
                ..
            }
            | Action::Contract { .. }
            | Action::License { .. }
            | Action::ComplianceFiling { .. } => {
                return Err(EngineError::invalid("action has no on-chain execution site"));
            }
        }
        Ok(())
    }

    /// Run an executable proposal's effect directly, requiring the expected
    /// action type and minimum kind. Without such a proposal: Unauthorized.
    fn execute_authorized(&mut self, id: ProposalId, expected: ActionKind, min_kind: ProposalKind) -> EngineResult<()> {
        let p = self
            .governance
            .proposals
            .get(&id)
            .ok_or_else(|| EngineError::Unauthorized(format!("no proposal {id}")))?;
        if p.state != ProposalState::Executable || p.action.kind() != expected || p.kind < min_kind {
            return Err(EngineError::Unauthorized(format!(
                "proposal {id} is not an executable {min_kind:?} {expected:?}"
            )));
        }
        self.run_effect(id)?;
        self.mark_executed(id, EffectOutcome::Applied);
        Ok(())
    }

    pub fn apply_oracle_set_change(&mut self, proposal: ProposalId) -> EngineResult<()> {
        self.execute_authorized(proposal, ActionKind::OracleSetChange, ProposalKind::Major)
    }

    pub fn apply_override(&mut self, proposal: ProposalId) -> EngineResult<Aggregate> {
        self.execute_authorized(proposal, ActionKind::OracleOverride, ProposalKind::Override)?;
        Ok(Aggregate::Overridden(
            self.oracle.overrides.last().expect("override just recorded").value,
        ))
    }

    pub fn execute_clawback(&mut self, proposal: ProposalId) -> EngineResult<()> {
        self.execute_authorized(proposal, ActionKind::Clawback, ProposalKind::Major)
    }

    pub fn admit_module(&mut self, proposal: ProposalId) -> EngineResult<()> {
        self.execute_authorized(proposal, ActionKind::ModuleAdmit, ProposalKind::Major)
    }

    pub fn exit_module(&mut self, proposal: ProposalId) -> EngineResult<()> {
        self.execute_authorized(proposal, ActionKind::ModuleExit, ProposalKind::Major)
    }

    pub fn file_challenge(&mut self, challenger: &ActorId, target: ProposalId) -> EngineResult<ProposalId> {
        self.require_active(challenger)?;
        if !self.params.challenges_enabled {
            return Err(EngineError::ChallengesDisabled);
        }
        let t = self.governance.proposal(target)?;
        if t.state != ProposalState::Challengeable {
            return Err(EngineError::NotChallengeable(target));
        }
        let tags = t.tags.clone();
        let now = self.clock;
        let cid = self.open_proposal(
            challenger.clone(),
            ProposalKind::Override,
            Action::Challenge { target },
            tags,
            ProposalOrigin::Challenge { target },
            now,
        );
        let t = self.governance.proposal_mut(target)?;
        t.state = ProposalState::Frozen;
        t.active_challenge = Some(cid);
        t.challenges.push(cid);
        Ok(cid)
    }

    /// A passed challenge withdraws its target; a failed one restarts the
    /// target's challenge window in full.
    pub(crate) fn settle_challenge(
        &mut self,
        challenge: ProposalId,
        target: ProposalId,
        verdict: Verdict,
        now: Tick,
    ) -> EngineResult<()> {
        {
            let c = self.governance.proposal_mut(challenge)?;
            c.state = match verdict {
                Verdict::Passed => ProposalState::Passed,
                Verdict::Failed => ProposalState::Failed,
            };
            if verdict == Verdict::Passed {
                c.effect = Some(EffectOutcome::Applied);
                c.effect_at = Some(now);
            }
        }
        let t = self.governance.proposal_mut(target)?;
        t.active_challenge = None;
        match verdict {
            Verdict::Passed => t.state = ProposalState::Withdrawn,
            Verdict::Failed => {
                t.state = ProposalState::Challengeable;
                t.stage_since = now;
            }
        }
        Ok(())
    }

    pub(crate) fn apply_param_change(&mut self, field: &str, value: &ParamValue) -> EngineResult<()> {
        let bad = || EngineError::invalid(format!("invalid value {value:?} for parameter {field}"));
        let ratio = || match value {
            ParamValue::Text(s) => s.parse::<Ratio>().map_err(|_| bad()),
            _ => Err(bad()),
        };
        let count = || match value {
            ParamValue::Count(n) => Ok(*n),
            _ => Err(bad()),
        };
        let count32 = || count().and_then(|n| u32::try_from(n).map_err(|_| bad()));
        let p = &mut self.params;
        match field {
            "quorum_ordinary" => p.quorum_ordinary = ratio()?,
            "quorum_major" => p.quorum_major = ratio()?,
            "quorum_override" => p.quorum_override = ratio()?,
            "majority_ordinary" => p.majority_ordinary = ratio()?,
            "supermajority_major" => p.supermajority_major = ratio()?,
            "supermajority_override" => p.supermajority_override = ratio()?,
            "voting_window" => p.voting_window = count()?,
            "timelock" => p.timelock = count()?,
            "challenge_window" => p.challenge_window = count()?,
            "upgrade_epoch" => p.upgrade_epoch = count()?,
            "max_upgrades_per_epoch" => p.max_upgrades_per_epoch = count32()?,
            "committee_rate_limit" => p.committee_rate_limit = count32()?,
            "treasury_ordinary_cap" => p.treasury_ordinary_cap = count()?,
            "challenges_enabled" => match value {
                ParamValue::Flag(b) => p.challenges_enabled = *b,
                _ => return Err(bad()),
            },
            "contribution_reward_rate" => self.policy.contribution_reward_rate = count()?,
            "max_grant" => self.policy.max_grant = Some(count()?),
            "stake_lockup" => self.policy.stake_lockup = count()?,
            "max_execution_delay" => {
                let n = count()?;
                self.foundation.as_mut().ok_or(EngineError::NoFoundation)?.max_execution_delay = n;
            }
            "remit" => {
                let ParamValue::List(items) = value else {
                    return Err(bad());
                };
                let remit: BTreeSet<RemitPower> = items
                    .iter()
                    .map(|s| RemitPower::parse(s).ok_or_else(bad))
                    .collect::<EngineResult<_>>()?;
                self.foundation.as_mut().ok_or(EngineError::NoFoundation)?.remit = remit;
            }
            other => return Err(EngineError::invalid(format!("unknown parameter {other}"))),
        }
        self.params.validate()
    }
}
