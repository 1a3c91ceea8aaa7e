//! Composite engine state across the governance, foundation and
//! jurisdiction layers. Only [`crate::engine::Engine::append`] mutates it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{digest_of, Digest};
use crate::error::{EngineError, EngineResult};
use crate::foundation::{FoundationConfig, FoundationState};
use crate::governance::{Committee, CommitteeSpec, GovernanceParams, GovernanceState};
use crate::jurisdiction::{JurisdictionModule, ModuleRegistry, ModuleSpec, ModuleStatus};
use crate::metrics::ScoringThresholds;
use crate::oracle::{validate_providers, OracleConfig, OracleState};
use crate::scenario::Expectation;
use crate::token::{ClawbackRecord, RewardRecord, TokenAccount, TokenPolicy, Treasury, VestingSchedule};
use crate::types::{ActorId, Amount, ModuleId, RoleId, Tick, WorkstreamId};
use crate::workstream::{Workstream, WorkstreamSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberStatus {
    Active,
    Exited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub actor: ActorId,
    pub roles: BTreeSet<RoleId>,
    pub status: MemberStatus,
    pub joined_at: Tick,
}

impl Member {
    pub fn is_active(&self) -> bool {
        self.status == MemberStatus::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub actor: ActorId,
    #[serde(default)]
    pub roles: BTreeSet<RoleId>,
}

/// Everything a scenario establishes before its first scripted event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenesisConfig {
    #[serde(default)]
    pub params: GovernanceParams,
    #[serde(default)]
    pub policy: TokenPolicy,
    #[serde(default)]
    pub roles: BTreeSet<RoleId>,
    #[serde(default)]
    pub members: Vec<MemberSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foundation: Option<FoundationConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub modules: Vec<ModuleSpec>,
    #[serde(default)]
    pub committees: Vec<CommitteeSpec>,
    #[serde(default)]
    pub workstreams: Vec<WorkstreamSpec>,
    /// Actor allowed to onboard members and grant roles without a vote.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiator: Option<ActorId>,
    #[serde(default)]
    pub scoring: ScoringThresholds,
}

/// Actions taken by an initiator outside the proposal flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectAction {
    pub by: ActorId,
    pub tick: Tick,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnRecord {
    pub actor: ActorId,
    pub amount: Amount,
    pub tick: Tick,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub rewards: Vec<RewardRecord>,
    pub clawbacks: Vec<ClawbackRecord>,
    pub direct_actions: Vec<DirectAction>,
    pub redemptions: Vec<BurnRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceFinding {
    pub module: ModuleId,
    pub tick: Tick,
    pub due_since: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceState {
    /// Last tick a compliance report was recorded for each module.
    pub last_report: BTreeMap<ModuleId, Tick>,
    pub findings: Vec<ComplianceFinding>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub expectations: Vec<Expectation>,
    pub scoring: ScoringThresholds,
    pub policy_published: Option<TokenPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub clock: Tick,
    /// Count of successfully applied events.
    pub applied: u64,
    pub meta: ScenarioMeta,
    pub roles: BTreeSet<RoleId>,
    pub members: BTreeMap<ActorId, Member>,
    pub accounts: BTreeMap<ActorId, TokenAccount>,
    pub treasury: Treasury,
    pub policy: TokenPolicy,
    pub params: GovernanceParams,
    pub initiator: Option<ActorId>,
    pub governance: GovernanceState,
    pub oracle: OracleState,
    pub foundation: Option<FoundationState>,
    pub jurisdictions: ModuleRegistry,
    pub compliance: ComplianceState,
    pub workstreams: BTreeMap<WorkstreamId, Workstream>,
    pub audit: AuditTrail,
}

impl Default for EngineState {
    fn default() -> Self {
        Self {
            clock: 0,
            applied: 0,
            meta: ScenarioMeta::default(),
            roles: BTreeSet::new(),
            members: BTreeMap::new(),
            accounts: BTreeMap::new(),
            treasury: Treasury::default(),
            policy: TokenPolicy::default(),
            params: GovernanceParams::default(),
            initiator: None,
            governance: GovernanceState::default(),
            oracle: OracleState::new(OracleConfig::default()),
            foundation: None,
            jurisdictions: ModuleRegistry::new(),
            compliance: ComplianceState::default(),
            workstreams: BTreeMap::new(),
            audit: AuditTrail::default(),
        }
    }
}

impl EngineState {
    /// SHA-256 of the canonical encoding of the whole state.
    pub fn digest(&self) -> Digest {
        digest_of(self)
    }

    pub fn require_active(&self, actor: &ActorId) -> EngineResult<&Member> {
        self.members
            .get(actor)
            .filter(|m| m.is_active())
            .ok_or_else(|| EngineError::NotAMember(actor.clone()))
    }

    pub fn is_active(&self, actor: &ActorId) -> bool {
        self.members.get(actor).is_some_and(Member::is_active)
    }

    pub fn account(&self, actor: &ActorId) -> TokenAccount {
        self.accounts.get(actor).cloned().unwrap_or_default()
    }

    /// Sum of every tranche across accounts plus the treasury.
    pub fn circulating_plus_treasury(&self) -> u128 {
        self.treasury.balance as u128 + self.accounts.values().map(|a| a.total() as u128).sum::<u128>()
    }

    /// `total_supply == treasury + Σ tranches` and per-account schedule consistency.
    pub fn conservation_holds(&self) -> bool {
        self.treasury.total_supply as u128 == self.circulating_plus_treasury()
            && self.accounts.values().all(TokenAccount::is_consistent)
    }

    pub(crate) fn apply_genesis(
        &mut self,
        name: &str,
        config: &GenesisConfig,
        expectations: &[Expectation],
    ) -> EngineResult<()> {
        if self.applied > 0 {
            return Err(EngineError::invalid("genesis must be the first event"));
        }
        config.params.validate()?;
        let now = self.clock;
        self.meta = ScenarioMeta {
            name: name.to_string(),
            expectations: expectations.to_vec(),
            scoring: config.scoring.clone(),
            policy_published: Some(config.policy.clone()),
        };
        self.params = config.params.clone();
        self.policy = config.policy.clone();
        self.roles = config.roles.clone();
        for m in &config.members {
            self.register_member(&m.actor, &m.roles, Onboarding::Genesis)?;
        }
        if let Some(initiator) = &config.initiator {
            self.require_active(initiator)?;
            self.initiator = Some(initiator.clone());
        }

        let mut supply: u128 = config.policy.treasury as u128;
        self.treasury.balance = config.policy.treasury;
        for alloc in &config.policy.genesis_allocations {
            self.require_active(&alloc.actor)?;
            let acct = self.accounts.entry(alloc.actor.clone()).or_default();
            acct.vested += alloc.vested;
            acct.locked += alloc.locked;
            acct.lockup_until = acct.lockup_until.max(alloc.lockup_until);
            supply += alloc.vested as u128 + alloc.locked as u128;
            if let Some(s) = &alloc.schedule {
                acct.add_schedule(VestingSchedule::new(s.total, s.start, s.cliff, s.duration));
                supply += s.total as u128;
            }
        }
        self.treasury.total_supply =
            Amount::try_from(supply).map_err(|_| EngineError::invalid("total supply overflows"))?;

        if let Some(fc) = &config.foundation {
            for d in &fc.directors {
                self.require_active(d)?;
            }
            self.foundation = Some(FoundationState::new(fc, now));
        }

        if !config.oracle.providers.is_empty() {
            validate_providers(&config.oracle.providers)?;
        }
        self.oracle = OracleState::new(config.oracle.clone());
        self.oracle.rotate_operators(now);

        for spec in &config.modules {
            self.install_module(spec.clone())?;
        }
        for c in &config.committees {
            self.charter_committee(c)?;
        }
        for ws in &config.workstreams {
            self.create_workstream(ws)?;
        }
        // Vesting that is already due at the genesis tick.
        for acct in self.accounts.values_mut() {
            acct.vest(now);
        }
        Ok(())
    }

    pub(crate) fn install_module(&mut self, spec: ModuleSpec) -> EngineResult<()> {
        if self.jurisdictions.get(&spec.id).is_some_and(JurisdictionModule::is_admitted) {
            return Err(EngineError::DuplicateModule(spec.id.clone()));
        }
        let existing: BTreeSet<_> = self
            .jurisdictions
            .values()
            .filter(|m| m.is_admitted())
            .flat_map(|m| m.spec.constraints.iter().map(|c| c.id.clone()))
            .collect();
        let mut seen = BTreeSet::new();
        for c in &spec.constraints {
            if existing.contains(&c.id) || !seen.insert(c.id.clone()) {
                return Err(EngineError::invalid(format!("duplicate constraint id {}", c.id)));
            }
        }
        let now = self.clock;
        self.compliance.last_report.insert(spec.id.clone(), now);
        self.jurisdictions.insert(
            spec.id.clone(),
            JurisdictionModule {
                spec,
                admitted_at: now,
                status: ModuleStatus::Admitted,
                exited_at: None,
            },
        );
        Ok(())
    }

    pub(crate) fn charter_committee(&mut self, spec: &CommitteeSpec) -> EngineResult<()> {
        if spec.members.is_empty() {
            return Err(EngineError::invalid("committee needs at least one member"));
        }
        for m in &spec.members {
            self.require_active(m)?;
        }
        let epoch = self.params.upgrade_epoch_of(self.clock);
        self.governance.committees.insert(
            spec.id.clone(),
            Committee {
                id: spec.id.clone(),
                members: spec.members.clone(),
                mandate: spec.mandate.clone(),
                epoch,
                decisions_this_epoch: 0,
            },
        );
        Ok(())
    }
}

/// Who is onboarding a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Onboarding<'a> {
    Genesis,
    /// Executed MemberAdmit proposal.
    Proposal,
    /// Direct call by an actor; allowed only for the configured initiator.
    Direct(&'a ActorId),
}

impl EngineState {
    pub fn register_member(
        &mut self,
        actor: &ActorId,
        roles: &BTreeSet<RoleId>,
        how: Onboarding<'_>,
    ) -> EngineResult<()> {
        if actor.as_str().is_empty() || actor == &ActorId::engine() {
            return Err(EngineError::invalid("actor id must be non-empty and not reserved"));
        }
        if let Onboarding::Direct(by) = how {
            if self.initiator.as_ref() != Some(by) {
                return Err(EngineError::UnauthorizedOnboarding(actor.clone()));
            }
        }
        if self.is_active(actor) {
            return Err(EngineError::DuplicateMember(actor.clone()));
        }
        if let Some(r) = roles.iter().find(|r| !self.roles.contains(*r)) {
            return Err(EngineError::UnknownRole(r.to_string()));
        }
        let now = self.clock;
        self.members.insert(
            actor.clone(),
            Member {
                actor: actor.clone(),
                roles: roles.clone(),
                status: crate::state::MemberStatus::Active,
                joined_at: now,
            },
        );
        self.accounts.entry(actor.clone()).or_default();
        if let Onboarding::Direct(by) = how {
            self.audit.direct_actions.push(DirectAction {
                by: by.clone(),
                tick: now,
                description: format!("onboarded {actor}"),
            });
        }
        Ok(())
    }

    pub fn grant_role(&mut self, actor: &ActorId, role: &RoleId, by: Option<&ActorId>) -> EngineResult<()> {
        if let Some(by) = by {
            if self.initiator.as_ref() != Some(by) {
                return Err(EngineError::Unauthorized(format!("{by} may not grant roles directly")));
            }
        }
        if !self.roles.contains(role) {
            return Err(EngineError::UnknownRole(role.to_string()));
        }
        self.require_active(actor)?;
        self.members.get_mut(actor).unwrap().roles.insert(role.clone());
        if let Some(by) = by {
            let now = self.clock;
            self.audit.direct_actions.push(DirectAction {
                by: by.clone(),
                tick: now,
                description: format!("granted role {role} to {actor}"),
            });
        }
        Ok(())
    }

    pub fn exit_member(&mut self, actor: &ActorId) -> EngineResult<()> {
        self.require_active(actor)?;
        if self.foundation.as_ref().is_some_and(|f| f.is_serving(actor)) {
            return Err(EngineError::invalid("a serving director must be removed before exiting"));
        }
        self.members.get_mut(actor).unwrap().status = MemberStatus::Exited;
        self.governance.delegations.remove(actor);
        for m in self.governance.delegations.values_mut() {
            m.retain(|_, d| &d.delegate != actor);
        }
        self.governance.delegations.retain(|_, m| !m.is_empty());
        Ok(())
    }
}
