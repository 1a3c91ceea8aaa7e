//! Multi-provider attestation intake, aggregation and operator rotation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::error::{EngineError, EngineResult};
use crate::types::{ProposalId, ProviderId, Ratio, Tick, Topic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleValue {
    Bool(bool),
    Num(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: ProviderId,
    #[serde(default = "one")]
    pub weight: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(default)]
    pub providers: Vec<ProviderSpec>,
    /// Defaults to `min(3, providers)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_active: Option<usize>,
    #[serde(default = "default_m_min")]
    pub m_min: usize,
    #[serde(default = "default_bool_threshold")]
    pub bool_threshold: Ratio,
    #[serde(default = "default_rotation_epoch")]
    pub rotation_epoch: Tick,
    /// Ticks after a round's first attestation during which it accepts submissions.
    #[serde(default = "default_round_window")]
    pub round_window: Tick,
}

fn default_m_min() -> usize {
    2
}
fn default_bool_threshold() -> Ratio {
    Ratio::HALF
}
fn default_rotation_epoch() -> Tick {
    50
}
fn default_round_window() -> Tick {
    5
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            providers: Vec::new(),
            n_active: None,
            m_min: default_m_min(),
            bool_threshold: default_bool_threshold(),
            rotation_epoch: default_rotation_epoch(),
            round_window: default_round_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestation {
    pub provider: ProviderId,
    pub value: OracleValue,
    pub evidence_hash: Digest,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub opened_at: Tick,
    pub attestations: Vec<Attestation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub proposal: ProposalId,
    pub topic: Topic,
    pub round: Option<u64>,
    pub value: OracleValue,
    pub tick: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "value", rename_all = "snake_case")]
pub enum Aggregate {
    Reading(OracleValue),
    Overridden(OracleValue),
    Insufficient,
    Open,
}

impl Aggregate {
    pub fn value(&self) -> Option<OracleValue> {
        match self {
            Aggregate::Reading(v) | Aggregate::Overridden(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleState {
    pub config: OracleConfig,
    pub providers: Vec<ProviderSpec>,
    pub active_set: Vec<ProviderId>,
    /// Epoch index at which the current provider list's rotation starts.
    pub rotation_origin: u64,
    pub rounds: BTreeMap<Topic, BTreeMap<u64, Round>>,
    pub overrides: Vec<OverrideRecord>,
}

impl OracleState {
    pub fn new(config: OracleConfig) -> Self {
        let providers = config.providers.clone();
        let mut s = Self {
            config,
            providers,
            active_set: Vec::new(),
            rotation_origin: 0,
            rounds: BTreeMap::new(),
            overrides: Vec::new(),
        };
        s.active_set = s.active_group(0);
        s
    }

    pub fn n_active(&self) -> usize {
        let n = self.config.n_active.unwrap_or(3);
        n.min(self.providers.len())
    }

    pub fn epoch_of(&self, now: Tick) -> u64 {
        now.checked_div(self.config.rotation_epoch).unwrap_or(0)
    }

    /// Round-robin group for the given epoch index relative to the rotation origin.
    pub fn active_group(&self, group: u64) -> Vec<ProviderId> {
        rotation_group(&self.providers, self.n_active(), group)
    }

    /// Recompute the active set for `now`. Called every tick; a no-op off-boundary.
    pub fn rotate_operators(&mut self, now: Tick) {
        let epoch = self.epoch_of(now);
        let group = epoch.saturating_sub(self.rotation_origin);
        self.active_set = self.active_group(group);
    }

    pub fn weight_of(&self, provider: &ProviderId) -> Option<u64> {
        self.providers
            .iter()
            .find(|p| &p.id == provider)
            .map(|p| p.weight)
    }

    pub fn submit_attestation(
        &mut self,
        provider: &ProviderId,
        topic: &Topic,
        round: u64,
        value: OracleValue,
        evidence_hash: Digest,
        now: Tick,
    ) -> EngineResult<()> {
        if !self.active_set.contains(provider) {
            return Err(EngineError::InactiveProvider(provider.to_string()));
        }
        let window = self.config.round_window;
        let r = self
            .rounds
            .entry(topic.clone())
            .or_default()
            .entry(round)
            .or_insert_with(|| Round {
                opened_at: now,
                attestations: Vec::new(),
            });
        if now >= r.opened_at + window && !r.attestations.is_empty() {
            return Err(EngineError::RoundClosed);
        }
        if r.attestations.iter().any(|a| &a.provider == provider) {
            return Err(EngineError::DuplicateAttestation(provider.to_string()));
        }
        if let Some(first) = r.attestations.first() {
            if std::mem::discriminant(&first.value) != std::mem::discriminant(&value) {
                return Err(EngineError::invalid(format!(
                    "attestation type mismatch on topic {topic}"
                )));
            }
        }
        r.attestations.push(Attestation {
            provider: provider.clone(),
            value,
            evidence_hash,
            tick: now,
        });
        Ok(())
    }

    fn override_for(&self, topic: &Topic, round: Option<u64>) -> Option<&OverrideRecord> {
        self.overrides
            .iter()
            .rev()
            .find(|o| &o.topic == topic && o.round == round)
    }

    /// Aggregate reading for a round, honoring overrides.
    pub fn aggregate(&self, topic: &Topic, round: u64, now: Tick) -> Aggregate {
        if let Some(o) = self.override_for(topic, Some(round)) {
            return Aggregate::Overridden(o.value);
        }
        let Some(r) = self.rounds.get(topic).and_then(|rs| rs.get(&round)) else {
            return Aggregate::Insufficient;
        };
        if now < r.opened_at + self.config.round_window {
            return Aggregate::Open;
        }
        let weighted: Vec<(OracleValue, u64)> = r
            .attestations
            .iter()
            .map(|a| (a.value, self.weight_of(&a.provider).unwrap_or(1)))
            .collect();
        aggregate_values(&weighted, self.config.m_min, self.config.bool_threshold)
    }

    /// Most recent decided reading for a topic: the latest closed round, or a
    /// standalone override issued after it.
    pub fn latest_reading(&self, topic: &Topic, now: Tick) -> Aggregate {
        let latest_round = self.rounds.get(topic).and_then(|rs| {
            rs.iter()
                .rev()
                .map(|(id, _)| (*id, self.aggregate(topic, *id, now)))
                .find(|(_, a)| !matches!(a, Aggregate::Open))
        });
        let standalone = self.override_for(topic, None);
        match (latest_round, standalone) {
            (Some((id, agg)), Some(o)) => {
                let round_tick = self.rounds[topic][&id].opened_at;
                if o.tick >= round_tick {
                    Aggregate::Overridden(o.value)
                } else {
                    agg
                }
            }
            (Some((_, agg)), None) => agg,
            (None, Some(o)) => Aggregate::Overridden(o.value),
            (None, None) => Aggregate::Insufficient,
        }
    }

    /// Replace the provider list; rotation restarts at the next epoch boundary.
    pub fn apply_set_change(&mut self, providers: Vec<ProviderSpec>, now: Tick) -> EngineResult<()> {
        validate_providers(&providers)?;
        self.providers = providers;
        self.rotation_origin = self.epoch_of(now) + 1;
        self.active_set = self.active_group(0);
        Ok(())
    }

    pub fn apply_override(
        &mut self,
        proposal: ProposalId,
        topic: Topic,
        round: Option<u64>,
        value: OracleValue,
        now: Tick,
    ) -> Aggregate {
        self.overrides.push(OverrideRecord {
            proposal,
            topic,
            round,
            value,
            tick: now,
        });
        Aggregate::Overridden(value)
    }
}

pub fn validate_providers(providers: &[ProviderSpec]) -> EngineResult<()> {
    if providers.is_empty() {
        return Err(EngineError::invalid("oracle provider set must be non-empty"));
    }
    if providers.iter().any(|p| p.weight == 0) {
        return Err(EngineError::invalid("oracle provider weights must be positive"));
    }
    let mut ids: Vec<_> = providers.iter().map(|p| &p.id).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != providers.len() {
        return Err(EngineError::invalid("duplicate oracle provider"));
    }
    Ok(())
}

/// Group `g` of a round-robin rotation of `n_active` slots over `providers`.
pub fn rotation_group(providers: &[ProviderSpec], n_active: usize, group: u64) -> Vec<ProviderId> {
    let len = providers.len();
    if len == 0 || n_active == 0 {
        return Vec::new();
    }
    let start = (group as u128 * n_active as u128 % len as u128) as usize;
    (0..n_active.min(len))
        .map(|i| providers[(start + i) % len].id.clone())
        .collect()
}

/// Smallest value whose cumulative weight reaches half of the total weight.
pub fn weighted_median(values: &[(i64, u64)]) -> Option<i64> {
    let total: u128 = values.iter().map(|(_, w)| *w as u128).sum();
    if total == 0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut cum = 0u128;
    for (v, w) in sorted {
        cum += w as u128;
        if cum * 2 >= total {
            return Some(v);
        }
    }
    unreachable!("cumulative weight reaches the total")
}

pub fn aggregate_values(values: &[(OracleValue, u64)], m_min: usize, bool_threshold: Ratio) -> Aggregate {
    if values.is_empty() || values.len() < m_min {
        return Aggregate::Insufficient;
    }
    match values[0].0 {
        OracleValue::Num(_) => {
            let nums: Vec<(i64, u64)> = values
                .iter()
                .filter_map(|(v, w)| match v {
                    OracleValue::Num(n) => Some((*n, *w)),
                    OracleValue::Bool(_) => None,
                })
                .collect();
            weighted_median(&nums)
                .map(|m| Aggregate::Reading(OracleValue::Num(m)))
                .unwrap_or(Aggregate::Insufficient)
        }
        OracleValue::Bool(_) => {
            let total: u128 = values.iter().map(|(_, w)| *w as u128).sum();
            let yes: u128 = values
                .iter()
                .filter(|(v, _)| matches!(v, OracleValue::Bool(true)))
                .map(|(_, w)| *w as u128)
                .sum();
            Aggregate::Reading(OracleValue::Bool(bool_threshold.le_share(yes, total)))
        }
    }
}
