#![allow(dead_code)]

pub mod gen;

use hc_core::canonical::Digest;
use hc_core::governance::ProposalState;
use hc_core::state::GenesisConfig;
use hc_core::types::ProposalId;
use hc_core::{Engine, EngineResult, Event};
use serde_json::{json, Value};

pub fn ev(v: Value) -> Event {
    serde_json::from_value(v.clone()).unwrap_or_else(|e| panic!("bad event {v}: {e}"))
}

pub fn config(v: Value) -> GenesisConfig {
    serde_json::from_value(v).expect("config parses")
}

pub fn genesis(cfg: Value) -> Engine {
    let mut e = Engine::new();
    e.append(Event::Genesis {
        name: "test".into(),
        config: Box::new(config(cfg)),
        expectations: vec![],
    })
    .expect("genesis applies");
    e
}

/// Members `m0..m{n-1}` with the given vested balances and a treasury.
pub fn members_config(balances: &[u64], treasury: u64) -> Value {
    let members: Vec<Value> = (0..balances.len())
        .map(|i| json!({"actor": format!("m{i}"), "roles": []}))
        .collect();
    let allocs: Vec<Value> = balances
        .iter()
        .enumerate()
        .map(|(i, b)| json!({"actor": format!("m{i}"), "vested": b}))
        .collect();
    json!({
        "members": members,
        "policy": {"treasury": treasury, "genesis_allocations": allocs},
    })
}

pub fn apply(e: &mut Engine, v: Value) -> EngineResult<()> {
    e.append(ev(v)).map(|_| ())
}

pub fn advance(e: &mut Engine, ticks: u64) {
    e.append(Event::AdvanceTime { ticks }).expect("time advances");
}

pub fn advance_to(e: &mut Engine, tick: u64) {
    let now = e.state().clock;
    if tick > now {
        advance(e, tick - now);
    }
}

pub fn last_proposal(e: &Engine) -> ProposalId {
    *e.state().governance.proposals.keys().next_back().expect("a proposal exists")
}

pub fn state_of(e: &Engine, id: ProposalId) -> ProposalState {
    e.state().governance.proposals[&id].state
}

pub fn submit_proposal(e: &mut Engine, proposer: &str, kind: &str, action: Value) -> EngineResult<ProposalId> {
    submit_tagged(e, proposer, kind, action, &[])
}

pub fn submit_tagged(
    e: &mut Engine,
    proposer: &str,
    kind: &str,
    action: Value,
    tags: &[&str],
) -> EngineResult<ProposalId> {
    apply(
        e,
        json!({"type": "submit_proposal", "proposer": proposer, "kind": kind, "action": action, "tags": tags}),
    )?;
    Ok(last_proposal(e))
}

pub fn vote(e: &mut Engine, voter: &str, proposal: ProposalId, choice: &str) -> EngineResult<()> {
    apply(e, json!({"type": "cast_vote", "voter": voter, "proposal": proposal, "choice": choice}))
}

/// Submit, have every listed voter vote For, and close the voting window.
pub fn pass(e: &mut Engine, proposer: &str, kind: &str, action: Value, voters: &[&str]) -> ProposalId {
    let id = submit_proposal(e, proposer, kind, action).expect("proposal accepted");
    for v in voters {
        vote(e, v, id, "for").expect("vote accepted");
    }
    let window = e.state().params.voting_window;
    advance(e, window);
    id
}

/// Advance until the proposal leaves the in-flight states.
pub fn settle(e: &mut Engine, id: ProposalId) {
    for _ in 0..1000 {
        if !state_of(e, id).is_in_flight() {
            return;
        }
        advance(e, 1);
    }
    panic!("proposal {id} never settled");
}

pub fn digest_hex(tag: &str) -> String {
    Digest::of(tag.as_bytes()).to_hex()
}
