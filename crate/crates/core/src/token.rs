//! Token policy: tranches, vesting, staking, clawbacks, rewards and treasury.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::action::GrantVesting;
use crate::error::{EngineError, EngineResult};
use crate::state::{BurnRecord, EngineState};
use crate::types::{ActorId, Amount, ProposalId, RoleId, TaskId, Tick, WorkstreamId};

/// Linear vesting with a cliff. `released` only ever grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VestingSchedule {
    pub total: Amount,
    pub start: Tick,
    pub cliff: Tick,
    pub duration: Tick,
    #[serde(default)]
    pub released: Amount,
}

impl VestingSchedule {
    pub fn new(total: Amount, start: Tick, cliff: Tick, duration: Tick) -> Self {
        Self {
            total,
            start,
            cliff,
            duration,
            released: 0,
        }
    }

    /// Cumulative amount releasable at `now`, rounded down.
    pub fn releasable_at(&self, now: Tick) -> Amount {
        if now < self.start.saturating_add(self.cliff) {
            return 0;
        }
        let elapsed = now - self.start;
        if self.duration == 0 || elapsed >= self.duration {
            return self.total;
        }
        (self.total as u128 * elapsed as u128 / self.duration as u128) as Amount
    }

    pub fn remaining(&self) -> Amount {
        self.total - self.released
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAccount {
    pub vested: Amount,
    /// Staked or lockup-bound; counts toward voting power.
    pub locked: Amount,
    pub unvested: Amount,
    #[serde(default)]
    pub schedules: Vec<VestingSchedule>,
    #[serde(default)]
    pub lockup_until: Tick,
}

impl TokenAccount {
    pub fn voting_balance(&self) -> Amount {
        self.vested + self.locked
    }

    pub fn total(&self) -> Amount {
        self.vested + self.locked + self.unvested
    }

    pub fn add_schedule(&mut self, schedule: VestingSchedule) {
        self.unvested += schedule.remaining();
        self.schedules.push(schedule);
    }

    /// Release everything vested by `now`. Idempotent at a fixed tick.
    pub fn vest(&mut self, now: Tick) -> Amount {
        let mut moved = 0;
        for s in &mut self.schedules {
            let delta = s.releasable_at(now).min(s.total).saturating_sub(s.released);
            s.released += delta;
            moved += delta;
        }
        self.unvested -= moved;
        self.vested += moved;
        moved
    }

    /// Reclaim unvested tokens, newest schedule first. Vested tokens are never touched.
    pub fn clawback(&mut self, amount: Amount) -> EngineResult<()> {
        if amount > self.unvested {
            return Err(EngineError::ExceedsUnvested {
                requested: amount,
                unvested: self.unvested,
            });
        }
        let mut left = amount;
        for s in self.schedules.iter_mut().rev() {
            if left == 0 {
                break;
            }
            let take = s.remaining().min(left);
            s.total -= take;
            left -= take;
        }
        debug_assert_eq!(left, 0);
        self.unvested -= amount;
        Ok(())
    }

    pub fn stake(&mut self, amount: Amount, lockup_until: Tick) -> EngineResult<()> {
        if amount == 0 {
            return Ok(());
        }
        if self.vested < amount {
            return Err(EngineError::InsufficientVested {
                requested: amount,
                vested: self.vested,
            });
        }
        self.vested -= amount;
        self.locked += amount;
        self.lockup_until = self.lockup_until.max(lockup_until);
        Ok(())
    }

    pub fn unstake(&mut self, amount: Amount, now: Tick) -> EngineResult<()> {
        if amount == 0 {
            return Ok(());
        }
        if now < self.lockup_until {
            return Err(EngineError::LockupActive(self.lockup_until));
        }
        if self.locked < amount {
            return Err(EngineError::InsufficientLocked {
                requested: amount,
                locked: self.locked,
            });
        }
        self.locked -= amount;
        self.vested += amount;
        Ok(())
    }

    /// `unvested` must equal the sum of schedule remainders.
    pub fn is_consistent(&self) -> bool {
        self.schedules.iter().map(VestingSchedule::remaining).sum::<Amount>() == self.unvested
            && self.schedules.iter().all(|s| s.released <= s.total)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treasury {
    pub balance: Amount,
    pub total_supply: Amount,
}

impl Treasury {
    pub fn debit(&mut self, amount: Amount) -> EngineResult<()> {
        if self.balance < amount {
            return Err(EngineError::InsufficientTreasury {
                requested: amount,
                balance: self.balance,
            });
        }
        self.balance -= amount;
        Ok(())
    }
}

/// Schedule terms for a genesis allocation, in absolute ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub total: Amount,
    #[serde(default)]
    pub start: Tick,
    #[serde(default)]
    pub cliff: Tick,
    pub duration: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub actor: ActorId,
    #[serde(default)]
    pub vested: Amount,
    #[serde(default)]
    pub locked: Amount,
    #[serde(default)]
    pub lockup_until: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
}

/// Published token policy. Part of the scenario config and echoed into the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPolicy {
    #[serde(default)]
    pub treasury: Amount,
    #[serde(default)]
    pub genesis_allocations: Vec<Allocation>,
    /// Default reward per completed task for workstreams without their own rate.
    #[serde(default = "default_reward_rate")]
    pub contribution_reward_rate: Amount,
    /// Largest single Grant; `None` means uncapped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grant: Option<Amount>,
    /// Airdrop eligibility: members holding any of these roles (empty = all active members).
    #[serde(default)]
    pub airdrop_roles: BTreeSet<RoleId>,
    /// Lockup applied by each stake, in ticks.
    #[serde(default)]
    pub stake_lockup: Tick,
}

fn default_reward_rate() -> Amount {
    10
}

impl Default for TokenPolicy {
    fn default() -> Self {
        Self {
            treasury: 0,
            genesis_allocations: Vec::new(),
            contribution_reward_rate: default_reward_rate(),
            max_grant: None,
            airdrop_roles: BTreeSet::new(),
            stake_lockup: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Staking,
    Grant,
    Airdrop,
    TaskReward,
}

/// What authorized a treasury outflow to a member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    Proposal(ProposalId),
    TaskCompletion {
        workstream: WorkstreamId,
        task: TaskId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub kind: RewardKind,
    pub to: ActorId,
    pub amount: Amount,
    pub source: RewardSource,
    pub tick: Tick,
    pub vesting: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClawbackRecord {
    pub proposal: ProposalId,
    pub actor: ActorId,
    pub amount: Amount,
    pub cause: String,
    pub unvested_before: Amount,
    pub vested_before: Amount,
    pub vested_after: Amount,
    pub tick: Tick,
}

impl EngineState {
    /// Release vested tokens on every account at `now`.
    pub fn vest_tick(&mut self, now: Tick) {
        for acct in self.accounts.values_mut() {
            acct.vest(now);
        }
    }

    /// Pay a member from the treasury, immediately or on a vesting schedule.
    pub fn distribute_reward(
        &mut self,
        kind: RewardKind,
        to: &ActorId,
        amount: Amount,
        vesting: Option<GrantVesting>,
        source: RewardSource,
    ) -> EngineResult<()> {
        let member = self
            .members
            .get(to)
            .filter(|m| m.is_active())
            .ok_or_else(|| EngineError::Unauthorized(format!("{to} is not an active member")))?;
        if kind == RewardKind::Airdrop
            && !self.policy.airdrop_roles.is_empty()
            && member.roles.is_disjoint(&self.policy.airdrop_roles)
        {
            return Err(EngineError::Unauthorized(format!("{to} is not eligible for airdrops")));
        }
        if kind == RewardKind::Grant {
            if let Some(cap) = self.policy.max_grant {
                if amount > cap {
                    return Err(EngineError::Unauthorized(format!("grant {amount} exceeds policy cap {cap}")));
                }
            }
        }
        self.treasury.debit(amount)?;
        let now = self.clock;
        let acct = self.accounts.entry(to.clone()).or_default();
        match vesting {
            Some(v) => acct.add_schedule(VestingSchedule::new(amount, now, v.cliff, v.duration)),
            None => acct.vested += amount,
        }
        acct.vest(now);
        self.audit.rewards.push(RewardRecord {
            kind,
            to: to.clone(),
            amount,
            source,
            tick: now,
            vesting: vesting.is_some(),
        });
        Ok(())
    }

    pub(crate) fn clawback(&mut self, proposal: ProposalId, actor: &ActorId, amount: Amount, cause: &str) -> EngineResult<()> {
        let now = self.clock;
        let acct = self
            .accounts
            .get_mut(actor)
            .ok_or_else(|| EngineError::NotAMember(actor.clone()))?;
        let (unvested_before, vested_before) = (acct.unvested, acct.vested);
        acct.clawback(amount)?;
        let vested_after = acct.vested;
        self.treasury.balance += amount;
        self.audit.clawbacks.push(ClawbackRecord {
            proposal,
            actor: actor.clone(),
            amount,
            cause: cause.to_string(),
            unvested_before,
            vested_before,
            vested_after,
            tick: now,
        });
        Ok(())
    }

    pub fn stake(&mut self, actor: &ActorId, amount: Amount) -> EngineResult<()> {
        self.require_active(actor)?;
        let until = self.clock + self.policy.stake_lockup;
        self.accounts.entry(actor.clone()).or_default().stake(amount, until)
    }

    pub fn unstake(&mut self, actor: &ActorId, amount: Amount) -> EngineResult<()> {
        self.require_active(actor)?;
        let now = self.clock;
        self.accounts.entry(actor.clone()).or_default().unstake(amount, now)
    }

    /// Burn vested tokens at par; total supply falls by the same amount.
    pub fn redeem(&mut self, actor: &ActorId, amount: Amount) -> EngineResult<()> {
        self.require_active(actor)?;
        let now = self.clock;
        let acct = self.accounts.entry(actor.clone()).or_default();
        if acct.vested < amount {
            return Err(EngineError::InsufficientVested {
                requested: amount,
                vested: acct.vested,
            });
        }
        acct.vested -= amount;
        self.treasury.total_supply -= amount;
        self.audit.redemptions.push(BurnRecord {
            actor: actor.clone(),
            amount,
            tick: now,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // floor(total * min(1, elapsed/duration)) after the cliff, by hand.
    fn linear_oracle(total: u64, cliff: u64, duration: u64, elapsed: u64) -> u64 {
        if elapsed < cliff {
            0
        } else if elapsed >= duration {
            total
        } else {
            let mut acc = 0u64;
            // repeated addition avoids sharing the multiply/divide path
            for _ in 0..elapsed {
                acc += total;
            }
            acc / duration
        }
    }

    #[test]
    fn vesting_before_cliff_releases_nothing() {
        let s = VestingSchedule::new(100, 0, 10, 100);
        assert_eq!(s.releasable_at(9), 0);
    }

    #[test]
    fn vesting_linear_midpoint() {
        let s = VestingSchedule::new(100, 7, 10, 100);
        assert_eq!(s.releasable_at(57), linear_oracle(100, 10, 100, 50));
        assert_eq!(s.releasable_at(57), 50);
    }

    #[test]
    fn vesting_completion_releases_everything() {
        let mut acct = TokenAccount::default();
        acct.add_schedule(VestingSchedule::new(100, 0, 10, 100));
        assert_eq!(acct.unvested, 100);
        acct.vest(100);
        assert_eq!(acct.vested, 100);
        assert_eq!(acct.unvested, 0);
        acct.vest(500);
        assert_eq!(acct.vested, 100);
    }

    #[test]
    fn vesting_rounds_down_and_matches_oracle() {
        let s = VestingSchedule::new(7, 0, 0, 3);
        for t in 0..5 {
            assert_eq!(s.releasable_at(t), linear_oracle(7, 0, 3, t), "t={t}");
        }
    }

    #[test]
    fn vest_is_idempotent_at_fixed_tick() {
        let mut a = TokenAccount::default();
        a.add_schedule(VestingSchedule::new(90, 0, 0, 9));
        a.vest(4);
        let snapshot = a.clone();
        a.vest(4);
        assert_eq!(a, snapshot);
    }

    #[test]
    fn clawback_conserves_and_respects_bound() {
        let mut a = TokenAccount {
            vested: 5,
            ..Default::default()
        };
        a.add_schedule(VestingSchedule::new(50, 0, 10, 100));
        a.clawback(30).unwrap();
        assert_eq!(a.unvested, 20);
        assert_eq!(a.vested, 5);
        assert!(a.is_consistent());
        assert_eq!(
            a.clawback(60),
            Err(EngineError::ExceedsUnvested {
                requested: 60,
                unvested: 20
            })
        );
        a.clawback(0).unwrap();
        assert_eq!(a.unvested, 20);
    }

    #[test]
    fn clawback_after_partial_release_keeps_released_amount() {
        let mut a = TokenAccount::default();
        a.add_schedule(VestingSchedule::new(100, 0, 0, 100));
        a.vest(40);
        assert_eq!((a.vested, a.unvested), (40, 60));
        a.clawback(60).unwrap();
        assert_eq!(a.unvested, 0);
        a.vest(100);
        assert_eq!(a.vested, 40);
        assert!(a.is_consistent());
    }

    #[test]
    fn stake_moves_tranches() {
        let mut a = TokenAccount {
            vested: 50,
            ..Default::default()
        };
        a.stake(20, 0).unwrap();
        assert_eq!((a.vested, a.locked), (30, 20));
        a.stake(0, 0).unwrap();
        assert_eq!((a.vested, a.locked), (30, 20));
        assert!(matches!(
            a.stake(31, 0),
            Err(EngineError::InsufficientVested { .. })
        ));
    }

    #[test]
    fn unstake_blocked_during_lockup() {
        let mut a = TokenAccount {
            vested: 50,
            ..Default::default()
        };
        a.stake(20, 15).unwrap();
        assert_eq!(a.unstake(10, 14), Err(EngineError::LockupActive(15)));
        a.unstake(20, 15).unwrap();
        assert_eq!((a.vested, a.locked), (50, 0));
    }

    #[test]
    fn treasury_debit_bound() {
        let mut t = Treasury {
            balance: 10,
            total_supply: 10,
        };
        assert!(matches!(
            t.debit(40),
            Err(EngineError::InsufficientTreasury { .. })
        ));
        t.debit(10).unwrap();
        assert_eq!(t.balance, 0);
    }
}
