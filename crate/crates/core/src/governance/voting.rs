use std::collections::{BTreeMap, BTreeSet};

use crate::action::Action;
use crate::error::{EngineError, EngineResult};
use crate::jurisdiction::effective_vote_mode;
use crate::state::EngineState;
use crate::types::{ActorId, Amount, CommitteeId, ModuleId, ProposalId, Tick};

use super::{
    Ballot, Delegation, GovernanceParams, Proposal, ProposalKind, ProposalOrigin, ProposalState, Verdict,
    VoteChoice, VoteMode, VoteTally,
};

/// Quorum is inclusive; the For-share must be strictly above the threshold.
pub fn passes(
    for_power: u128,
    against_power: u128,
    abstain_power: u128,
    eligible: u128,
    kind: ProposalKind,
    params: &GovernanceParams,
) -> bool {
    let cast = for_power + against_power + abstain_power;
    let decisive = for_power + against_power;
    eligible > 0
        && decisive > 0
        && params.quorum(kind).le_share(cast, eligible)
        && params.threshold(kind).lt_share(for_power, decisive)
}

pub fn tally_verdict(tally: &VoteTally, kind: ProposalKind, params: &GovernanceParams) -> Verdict {
    if passes(
        tally.for_power as u128,
        tally.against_power as u128,
        tally.abstain_power as u128,
        tally.eligible_power as u128,
        kind,
        params,
    ) {
        Verdict::Passed
    } else {
        Verdict::Failed
    }
}

impl EngineState {
    /// A member's own power, excluding anything delegated to them.
    pub fn base_power(&self, actor: &ActorId, mode: VoteMode) -> Amount {
        if !self.is_active(actor) {
            return 0;
        }
        match mode {
            VoteMode::TokenWeighted => self.accounts.get(actor).map_or(0, |a| a.voting_balance()),
            VoteMode::OneMemberOneVote => 1,
        }
    }

    /// Own power plus the power of in-scope delegators (single hop).
    pub fn voting_power(&self, actor: &ActorId, kind: ProposalKind, mode: VoteMode) -> Amount {
        if !self.is_active(actor) {
            return 0;
        }
        let own = self.base_power(actor, mode);
        let delegated: Amount = self
            .governance
            .delegators_of(actor, kind)
            .map(|d| self.base_power(d, mode))
            .sum();
        own + delegated
    }

    /// Open a proposal without proposer checks. Power is snapshotted now.
    pub(crate) fn open_proposal(
        &mut self,
        proposer: ActorId,
        kind: ProposalKind,
        action: Action,
        tags: BTreeSet<ModuleId>,
        origin: ProposalOrigin,
        now: Tick,
    ) -> ProposalId {
        let mode = effective_vote_mode(&self.jurisdictions, &tags);
        let snapshot: BTreeMap<ActorId, Amount> = self
            .members
            .values()
            .filter(|m| m.is_active())
            .map(|m| (m.actor.clone(), self.base_power(&m.actor, mode)))
            .collect();
        let eligible = snapshot.values().sum();
        let id = self.governance.next_proposal;
        self.governance.next_proposal += 1;
        self.governance.proposals.insert(
            id,
            Proposal {
                id,
                kind,
                action,
                proposer,
                origin,
                opened_at: now,
                state: ProposalState::Open,
                tags,
                tally: Some(VoteTally {
                    for_power: 0,
                    against_power: 0,
                    abstain_power: 0,
                    eligible_power: eligible,
                    mode,
                }),
                snapshot,
                ballots: BTreeMap::new(),
                counted: BTreeSet::new(),
                closed_at: None,
                stage_since: now,
                executable_at: None,
                effect: None,
                effect_at: None,
                active_challenge: None,
                challenges: Vec::new(),
                resolution: None,
            },
        );
        id
    }

    pub(crate) fn validate_tags(&self, tags: &BTreeSet<ModuleId>) -> EngineResult<()> {
        for t in tags {
            if !self.jurisdictions.get(t).is_some_and(|m| m.is_admitted()) {
                return Err(EngineError::UnknownModule(t.clone()));
            }
        }
        Ok(())
    }

    pub fn submit_proposal(
        &mut self,
        proposer: &ActorId,
        kind: ProposalKind,
        action: Action,
        tags: BTreeSet<ModuleId>,
    ) -> EngineResult<ProposalId> {
        self.require_active(proposer)?;
        if matches!(action, Action::Challenge { .. } | Action::TaskResolve { .. }) {
            return Err(EngineError::invalid("this action is raised by the engine, not submitted"));
        }
        if !action.kind_allowed(kind, &self.params) {
            return Err(EngineError::KindMismatch(format!(
                "{:?} requires {:?}, submitted as {:?}",
                action.kind(),
                action.required_kind(&self.params),
                kind
            )));
        }
        self.validate_tags(&tags)?;
        self.precheck_action(&action)?;
        let now = self.clock;
        if matches!(action, Action::Upgrade { .. }) {
            let epoch = self.params.upgrade_epoch_of(now);
            if self.governance.upgrade_submissions.get(epoch) >= self.params.max_upgrades_per_epoch {
                return Err(EngineError::RateLimited("upgrade".into()));
            }
            self.governance.upgrade_submissions.bump(epoch);
        }
        Ok(self.open_proposal(proposer.clone(), kind, action, tags, ProposalOrigin::Member, now))
    }

    /// Static checks that do not depend on state at execution time.
    fn precheck_action(&self, action: &Action) -> EngineResult<()> {
        match action {
            Action::OracleSetChange { providers } => crate::oracle::validate_providers(providers),
            Action::ParamChange { field, value } => {
                let mut probe = self.clone();
                probe.apply_param_change(field, value)
            }
            Action::RoleGrant { role, .. } if !self.roles.contains(role) => {
                Err(EngineError::UnknownRole(role.to_string()))
            }
            Action::MemberAdmit { roles, .. } => match roles.iter().find(|r| !self.roles.contains(*r)) {
                Some(r) => Err(EngineError::UnknownRole(r.to_string())),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn cast_vote(&mut self, voter: &ActorId, id: ProposalId, choice: VoteChoice) -> EngineResult<VoteTally> {
        self.require_active(voter)?;
        let now = self.clock;
        let p = self.governance.proposal(id)?;
        if p.state != ProposalState::Open || now >= p.opened_at + self.params.voting_window {
            return Err(EngineError::NotOpen(id));
        }
        if self.governance.delegate_of(voter, p.kind).is_some() {
            return Err(EngineError::DelegatedAway(voter.clone()));
        }
        if p.counted.contains(voter) {
            return Err(EngineError::AlreadyVoted(voter.clone(), id));
        }
        let Some(own) = p.snapshot.get(voter).copied() else {
            return Err(EngineError::NotEligible(voter.clone(), id));
        };
        let carried: BTreeSet<ActorId> = self
            .governance
            .delegators_of(voter, p.kind)
            .filter(|d| p.snapshot.contains_key(*d) && !p.counted.contains(*d))
            .cloned()
            .collect();
        let power = own + carried.iter().map(|d| p.snapshot[d]).sum::<Amount>();

        let p = self.governance.proposal_mut(id)?;
        let tally = p.tally.as_mut().expect("open proposals carry a tally");
        match choice {
            VoteChoice::For => tally.for_power += power,
            VoteChoice::Against => tally.against_power += power,
            VoteChoice::Abstain => tally.abstain_power += power,
        }
        let out = tally.clone();
        p.counted.insert(voter.clone());
        p.counted.extend(carried.iter().cloned());
        p.ballots.insert(
            voter.clone(),
            Ballot {
                choice,
                power,
                carried,
                tick: now,
            },
        );
        Ok(out)
    }

    pub fn delegate(&mut self, delegator: &ActorId, delegate: &ActorId, scope: &BTreeSet<ProposalKind>) -> EngineResult<()> {
        if delegator == delegate {
            return Err(EngineError::SelfDelegation(delegator.clone()));
        }
        self.require_active(delegator)?;
        self.require_active(delegate)?;
        if scope.is_empty() {
            return Err(EngineError::invalid("delegation scope is empty"));
        }
        for kind in scope {
            if self.governance.delegate_of(delegate, *kind).is_some() {
                return Err(EngineError::ChainedDelegation(delegate.clone()));
            }
            if self.governance.delegators_of(delegator, *kind).next().is_some() {
                return Err(EngineError::ChainedDelegation(delegator.clone()));
            }
            if let Some(p) = self
                .governance
                .proposals
                .values()
                .find(|p| p.state == ProposalState::Open && p.kind == *kind && p.counted.contains(delegator))
            {
                return Err(EngineError::ConflictingVote(delegator.clone(), p.id));
            }
        }
        let now = self.clock;
        let entry = self.governance.delegations.entry(delegator.clone()).or_default();
        for kind in scope {
            entry.insert(
                *kind,
                Delegation {
                    delegate: delegate.clone(),
                    created_at: now,
                },
            );
        }
        Ok(())
    }

    pub fn revoke_delegation(&mut self, delegator: &ActorId, scope: &BTreeSet<ProposalKind>) -> EngineResult<()> {
        let Some(entry) = self.governance.delegations.get_mut(delegator) else {
            return Err(EngineError::invalid(format!("{delegator} has no delegations")));
        };
        for kind in scope {
            entry.remove(kind);
        }
        if entry.is_empty() {
            self.governance.delegations.remove(delegator);
        }
        Ok(())
    }

    /// Close the voting window and move the proposal on.
    pub fn close_voting(&mut self, id: ProposalId, now: Tick) -> EngineResult<Verdict> {
        let p = self.governance.proposal(id)?;
        if p.state != ProposalState::Open {
            return Err(EngineError::NotOpen(id));
        }
        if now < p.opened_at + self.params.voting_window {
            return Err(EngineError::WindowNotElapsed(id));
        }
        let tally = p.tally.clone().expect("open proposals carry a tally");
        let verdict = tally_verdict(&tally, p.kind, &self.params);
        let action = p.action.clone();
        {
            let p = self.governance.proposal_mut(id)?;
            p.closed_at = Some(now);
            p.stage_since = now;
        }
        match (&action, verdict) {
            (Action::Challenge { target }, _) => {
                let target = *target;
                self.settle_challenge(id, target, verdict, now)?;
            }
            (_, Verdict::Passed) => self.governance.proposal_mut(id)?.state = ProposalState::Timelocked,
            (Action::TaskResolve { workstream, task, .. }, Verdict::Failed) => {
                self.governance.proposal_mut(id)?.state = ProposalState::Failed;
                let (ws, t) = (workstream.clone(), task.clone());
                self.on_task_resolution_failed(&ws, &t);
            }
            (_, Verdict::Failed) => self.governance.proposal_mut(id)?.state = ProposalState::Failed,
        }
        Ok(verdict)
    }

    /// Committee decision within mandate: skips voting and enters the timelock.
    pub fn committee_decide(
        &mut self,
        committee: &CommitteeId,
        action: Action,
        approvals: &BTreeSet<ActorId>,
        tags: BTreeSet<ModuleId>,
    ) -> EngineResult<ProposalId> {
        let now = self.clock;
        let epoch = self.params.upgrade_epoch_of(now);
        let c = self
            .governance
            .committees
            .get(committee)
            .ok_or_else(|| EngineError::UnknownCommittee(committee.to_string()))?;
        if action.is_override_eligible() || matches!(action, Action::TaskResolve { .. }) {
            return Err(EngineError::OutsideMandate(format!("{:?}", action.kind())));
        }
        c.mandate_allows(&action).map_err(EngineError::OutsideMandate)?;
        let decisions = if c.epoch == epoch { c.decisions_this_epoch } else { 0 };
        if decisions >= self.params.committee_rate_limit {
            return Err(EngineError::RateLimited(format!("committee {committee}")));
        }
        let valid: BTreeSet<ActorId> = approvals
            .iter()
            .filter(|a| c.members.contains(*a) && self.is_active(a))
            .cloned()
            .collect();
        if valid.len() * 2 <= c.members.len() {
            return Err(EngineError::InsufficientCommitteeApproval {
                got: valid.len(),
                members: c.members.len(),
            });
        }
        self.validate_tags(&tags)?;
        self.precheck_action(&action)?;
        if matches!(action, Action::Upgrade { .. }) {
            if self.governance.upgrade_submissions.get(epoch) >= self.params.max_upgrades_per_epoch {
                return Err(EngineError::RateLimited("upgrade".into()));
            }
            self.governance.upgrade_submissions.bump(epoch);
        }
        let kind = action.required_kind(&self.params);
        let proposer = valid.iter().next().cloned().expect("majority is non-empty");
        let id = self.open_proposal(
            proposer,
            kind,
            action,
            tags,
            ProposalOrigin::Committee {
                committee: committee.clone(),
                approvals: valid,
            },
            now,
        );
        let p = self.governance.proposal_mut(id)?;
        p.state = ProposalState::Timelocked;
        p.tally = None;
        p.snapshot.clear();
        p.closed_at = Some(now);
        let c = self.governance.committees.get_mut(committee).unwrap();
        if c.epoch != epoch {
            c.epoch = epoch;
            c.decisions_this_epoch = 0;
        }
        c.decisions_this_epoch += 1;
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GovernanceParams {
        GovernanceParams::default()
    }

    // Threshold arithmetic restated with floating point on small integers
    // where the float comparisons are exact.
    fn oracle(f: u64, a: u64, ab: u64, eligible: u64, quorum: f64, threshold: f64) -> bool {
        let cast = (f + a + ab) as f64;
        let decisive = (f + a) as f64;
        eligible > 0 && decisive > 0.0 && cast / eligible as f64 >= quorum && f as f64 / decisive > threshold
    }

    #[test]
    fn quorum_failure() {
        assert!(!passes(40, 0, 0, 100, ProposalKind::Major, &params()));
        assert_eq!(
            passes(40, 0, 0, 100, ProposalKind::Major, &params()),
            oracle(40, 0, 0, 100, 0.5, 2.0 / 3.0)
        );
    }

    #[test]
    fn exact_threshold_tie_fails() {
        assert!(!passes(40, 20, 0, 100, ProposalKind::Major, &params()));
        assert!(passes(41, 19, 0, 100, ProposalKind::Major, &params()));
    }

    #[test]
    fn oracle_agreement_grid() {
        let p = params();
        for f in 0..=12u64 {
            for a in 0..=12u64 {
                for ab in 0..=4u64 {
                    let eligible = 24;
                    if f + a + ab > eligible {
                        continue;
                    }
                    // 1/2 and 3/4 thresholds, 2/5 quorum avoid float ties on these grids
                    assert_eq!(
                        passes(f as u128, a as u128, ab as u128, eligible as u128, ProposalKind::Ordinary, &p),
                        oracle(f, a, ab, eligible, 0.4, 0.5),
                        "{f} {a} {ab}"
                    );
                    assert_eq!(
                        passes(f as u128, a as u128, ab as u128, eligible as u128, ProposalKind::Override, &p),
                        oracle(f, a, ab, eligible, 0.6, 0.75),
                        "{f} {a} {ab}"
                    );
                }
            }
        }
    }

    #[test]
    fn no_votes_fails() {
        assert!(!passes(0, 0, 0, 100, ProposalKind::Ordinary, &params()));
        assert!(!passes(0, 0, 50, 100, ProposalKind::Ordinary, &params()));
        assert!(!passes(0, 0, 0, 0, ProposalKind::Ordinary, &params()));
    }
}
