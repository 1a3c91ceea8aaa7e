//! Proposal lifecycle, voting, delegation, committees and rate limits.

mod lifecycle;
mod voting;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::{Action, MandateEntry};
use crate::error::{EngineError, EngineResult};
use crate::types::{ActorId, Amount, CommitteeId, ModuleId, ProposalId, Ratio, Tick};

pub use voting::{passes, tally_verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    Ordinary,
    Major,
    Override,
}

impl ProposalKind {
    pub const ALL: [ProposalKind; 3] = [ProposalKind::Ordinary, ProposalKind::Major, ProposalKind::Override];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    TokenWeighted,
    OneMemberOneVote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteChoice {
    For,
    Against,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GovernanceParams {
    pub quorum_ordinary: Ratio,
    pub quorum_major: Ratio,
    pub quorum_override: Ratio,
    pub majority_ordinary: Ratio,
    pub supermajority_major: Ratio,
    pub supermajority_override: Ratio,
    pub voting_window: Tick,
    pub timelock: Tick,
    pub challenge_window: Tick,
    pub upgrade_epoch: Tick,
    pub max_upgrades_per_epoch: u32,
    pub committee_rate_limit: u32,
    pub treasury_ordinary_cap: Amount,
    /// Whether members may file challenges during the challenge window.
    pub challenges_enabled: bool,
}

impl Default for GovernanceParams {
    fn default() -> Self {
        Self {
            quorum_ordinary: Ratio::new(2, 5),
            quorum_major: Ratio::new(1, 2),
            quorum_override: Ratio::new(3, 5),
            majority_ordinary: Ratio::new(1, 2),
            supermajority_major: Ratio::new(2, 3),
            supermajority_override: Ratio::new(3, 4),
            voting_window: 20,
            timelock: 10,
            challenge_window: 10,
            upgrade_epoch: 100,
            max_upgrades_per_epoch: 1,
            committee_rate_limit: 3,
            treasury_ordinary_cap: 100,
            challenges_enabled: true,
        }
    }
}

impl GovernanceParams {
    pub fn quorum(&self, kind: ProposalKind) -> Ratio {
        match kind {
            ProposalKind::Ordinary => self.quorum_ordinary,
            ProposalKind::Major => self.quorum_major,
            ProposalKind::Override => self.quorum_override,
        }
    }

    pub fn threshold(&self, kind: ProposalKind) -> Ratio {
        match kind {
            ProposalKind::Ordinary => self.majority_ordinary,
            ProposalKind::Major => self.supermajority_major,
            ProposalKind::Override => self.supermajority_override,
        }
    }

    pub fn upgrade_epoch_of(&self, now: Tick) -> u64 {
        now.checked_div(self.upgrade_epoch).unwrap_or(0)
    }

    pub fn validate(&self) -> EngineResult<()> {
        let quorums = [self.quorum_ordinary, self.quorum_major, self.quorum_override];
        for q in quorums {
            if !q.is_valid() || q.num == 0 || q.cmp_ratio(&Ratio::ONE).is_gt() {
                return Err(EngineError::invalid(format!("quorum {q} must be in (0, 1]")));
            }
        }
        let thresholds = [self.majority_ordinary, self.supermajority_major, self.supermajority_override];
        for t in thresholds {
            if !t.is_valid() || t.cmp_ratio(&Ratio::HALF).is_lt() || t.cmp_ratio(&Ratio::ONE).is_gt() {
                return Err(EngineError::invalid(format!("threshold {t} must be in [1/2, 1]")));
            }
        }
        if self.supermajority_override.cmp_ratio(&self.supermajority_major).is_lt()
            || self.supermajority_major.cmp_ratio(&self.majority_ordinary).is_lt()
        {
            return Err(EngineError::invalid(
                "thresholds must satisfy override >= major >= ordinary",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalState {
    Open,
    Passed,
    Failed,
    Timelocked,
    Challengeable,
    Frozen,
    Executable,
    ExecutedOnChain,
    Enqueued,
    Withdrawn,
}

impl ProposalState {
    /// Still moving through the lifecycle on its own as time advances.
    pub fn is_in_flight(&self) -> bool {
        matches!(
            self,
            ProposalState::Open | ProposalState::Timelocked | ProposalState::Challengeable | ProposalState::Frozen
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub for_power: Amount,
    pub against_power: Amount,
    pub abstain_power: Amount,
    pub eligible_power: Amount,
    pub mode: VoteMode,
}

impl VoteTally {
    pub fn cast(&self) -> Amount {
        self.for_power + self.against_power + self.abstain_power
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub choice: VoteChoice,
    pub power: Amount,
    /// Delegators whose power was carried by this ballot.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub carried: BTreeSet<ActorId>,
    pub tick: Tick,
}

/// How a proposal came to exist; part of its citation chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum ProposalOrigin {
    Member,
    Committee {
        committee: CommitteeId,
        approvals: BTreeSet<ActorId>,
    },
    /// Raised by the engine (breach removal, escalation, compliance).
    Engine { reason: String },
    Challenge { target: ProposalId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail", rename_all = "snake_case")]
pub enum EffectOutcome {
    Applied,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: ProposalId,
    pub kind: ProposalKind,
    pub action: Action,
    pub proposer: ActorId,
    pub origin: ProposalOrigin,
    pub opened_at: Tick,
    pub state: ProposalState,
    #[serde(default)]
    pub tags: BTreeSet<ModuleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<VoteTally>,
    /// Member powers frozen at the open tick.
    #[serde(default)]
    pub snapshot: BTreeMap<ActorId, Amount>,
    #[serde(default)]
    pub ballots: BTreeMap<ActorId, Ballot>,
    /// Every member whose power has entered the tally, directly or carried.
    #[serde(default)]
    pub counted: BTreeSet<ActorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Tick>,
    /// Tick at which the current timelock or challenge stage started.
    #[serde(default)]
    pub stage_since: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executable_at: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<EffectOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_at: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_challenge: Option<ProposalId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub challenges: Vec<ProposalId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delegation {
    pub delegate: ActorId,
    pub created_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub id: CommitteeId,
    pub members: BTreeSet<ActorId>,
    pub mandate: Vec<MandateEntry>,
    pub epoch: u64,
    pub decisions_this_epoch: u32,
}

impl Committee {
    pub fn mandate_allows(&self, action: &Action) -> Result<(), String> {
        let entry = self
            .mandate
            .iter()
            .find(|m| m.action == action.kind())
            .ok_or_else(|| format!("{:?} not in mandate of {}", action.kind(), self.id))?;
        match (entry.cap, action.amount()) {
            (Some(cap), Some(amount)) if amount > cap => {
                Err(format!("amount {amount} exceeds mandate cap {cap}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeSpec {
    pub id: CommitteeId,
    pub members: BTreeSet<ActorId>,
    pub mandate: Vec<MandateEntry>,
}

/// Count of events inside the current epoch; resets when the epoch changes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochCounter {
    pub epoch: u64,
    pub count: u32,
}

impl EpochCounter {
    pub fn get(&self, epoch: u64) -> u32 {
        if self.epoch == epoch {
            self.count
        } else {
            0
        }
    }

    pub fn bump(&mut self, epoch: u64) {
        if self.epoch != epoch {
            self.epoch = epoch;
            self.count = 0;
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceState {
    pub proposals: BTreeMap<ProposalId, Proposal>,
    pub next_proposal: ProposalId,
    /// delegator -> kind -> delegation
    pub delegations: BTreeMap<ActorId, BTreeMap<ProposalKind, Delegation>>,
    pub committees: BTreeMap<CommitteeId, Committee>,
    pub upgrade_submissions: EpochCounter,
    pub upgrade_executions: EpochCounter,
    pub upgrades: Vec<UpgradeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpgradeRecord {
    pub proposal: ProposalId,
    pub tag: String,
    pub tick: Tick,
}

impl GovernanceState {
    pub fn delegate_of(&self, delegator: &ActorId, kind: ProposalKind) -> Option<&ActorId> {
        self.delegations
            .get(delegator)
            .and_then(|m| m.get(&kind))
            .map(|d| &d.delegate)
    }

    /// Delegators routing `kind` power to `delegate`.
    pub fn delegators_of<'a>(
        &'a self,
        delegate: &'a ActorId,
        kind: ProposalKind,
    ) -> impl Iterator<Item = &'a ActorId> + 'a {
        self.delegations
            .iter()
            .filter(move |(_, m)| m.get(&kind).is_some_and(|d| &d.delegate == delegate))
            .map(|(a, _)| a)
    }

    pub fn proposal(&self, id: ProposalId) -> EngineResult<&Proposal> {
        self.proposals.get(&id).ok_or(EngineError::UnknownProposal(id))
    }

    pub fn proposal_mut(&mut self, id: ProposalId) -> EngineResult<&mut Proposal> {
        self.proposals.get_mut(&id).ok_or(EngineError::UnknownProposal(id))
    }
}
