//! Seeded random genesis configs and event streams for property and
//! acceptance tests. Events are drawn against the live state so that a fair
//! share of them is valid; the rest exercise the rejection path.

use hc_core::{EngineState, Event};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

use super::{digest_hex, ev};

pub const TASKS: [&str; 4] = ["t0", "t1", "t2", "t3"];
pub const PROVIDERS: [&str; 3] = ["P", "Q", "R"];

pub fn actor(i: usize) -> String {
    format!("m{i}")
}

/// Members m0..m{n-1}; the first two are directors, even members are builders.
pub fn random_config(rng: &mut impl Rng, n: usize) -> Value {
    let n = n.max(2);
    let members: Vec<Value> = (0..n)
        .map(|i| {
            let roles: Vec<&str> = if i % 2 == 0 { vec!["builder"] } else { vec![] };
            json!({"actor": actor(i), "roles": roles})
        })
        .collect();
    let allocs: Vec<Value> = (0..n)
        .map(|i| {
            let mut a = json!({"actor": actor(i), "vested": rng.random_range(1..200u64)});
            if rng.random_bool(0.3) {
                let total = rng.random_range(1..100u64);
                a["schedule"] = json!({"total": total, "cliff": rng.random_range(0..20u64), "duration": rng.random_range(20..200u64)});
            }
            a
        })
        .collect();
    let tasks: Vec<Value> = TASKS
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let verification = if i % 2 == 0 { json!("steward_signoff") } else { json!({"oracle_topic": format!("qa/{t}")}) };
            json!({"id": t, "spec_hash": digest_hex(t), "verification": verification})
        })
        .collect();
    json!({
        "roles": ["builder"],
        "members": members,
        "policy": {"treasury": rng.random_range(0..2000u64), "genesis_allocations": allocs, "stake_lockup": 3},
        "foundation": {"directors": [actor(0), actor(1)]},
        "oracle": {"providers": PROVIDERS.iter().map(|p| json!({"id": p})).collect::<Vec<_>>(), "m_min": 2},
        "modules": [
            {"id": "X", "name": "x", "constraints": [{"id": "x-tr", "flag": "TRANSFER_RESTRICTED"}]},
            {"id": "T", "name": "t", "constraints": [{"id": "t-tvp", "flag": "TOKEN_VOTING_PROHIBITED"}]}
        ],
        "workstreams": [{"id": "w", "steward": actor(0), "required_roles": ["builder"], "reward_rate": 5, "tasks": tasks}]
    })
}

fn random_action(rng: &mut impl Rng, n: usize) -> (Value, &'static str) {
    let who = actor(rng.random_range(0..n));
    match rng.random_range(0..8) {
        0 => (json!({"type": "grant", "to": who, "amount": rng.random_range(0..150u64)}), "ordinary"),
        1 => (
            json!({"type": "treasury_transfer", "to": {"member": who}, "amount": rng.random_range(0..150u64)}),
            "ordinary",
        ),
        2 => {
            let module = if rng.random_bool(0.5) { Some("X") } else { None };
            (
                json!({"type": "treasury_transfer", "to": {"external": {"name": "vendor", "module": module}}, "amount": rng.random_range(0..80u64)}),
                "ordinary",
            )
        }
        3 => (
            json!({"type": "param_change", "field": "timelock", "value": rng.random_range(0..15u64)}),
            "major",
        ),
        4 => (
            json!({"type": "clawback", "actor": who, "amount": rng.random_range(0..40u64), "cause": "audit"}),
            "major",
        ),
        5 => (
            json!({"type": "member_admit", "actor": format!("new{}", rng.random_range(0..5)), "roles": []}),
            "ordinary",
        ),
        6 => (json!({"type": "contract", "counterparty": "buyer"}), "ordinary"),
        _ => (
            json!({"type": "oracle_override", "topic": "price", "value": rng.random_range(0..100i64)}),
            "override",
        ),
    }
}

pub fn random_event(rng: &mut impl Rng, n: usize, state: &EngineState) -> Event {
    let who = actor(rng.random_range(0..n));
    let proposals = state.governance.proposals.len() as u64;
    let pick_proposal = |rng: &mut dyn rand::RngCore| {
        if proposals == 0 {
            0
        } else {
            rng.random_range(0..proposals + 1)
        }
    };
    let task = *TASKS.choose(rng).unwrap();
    let v = match rng.random_range(0..20) {
        0..=3 => json!({"type": "advance_time", "ticks": rng.random_range(1..15u64)}),
        4 | 5 => {
            let (action, kind) = random_action(rng, n);
            let tags: Vec<&str> = if rng.random_bool(0.2) { vec!["T"] } else { vec![] };
            json!({"type": "submit_proposal", "proposer": who, "kind": kind, "action": action, "tags": tags})
        }
        6..=8 => {
            let choice = *["for", "for", "against", "abstain"].choose(rng).unwrap();
            json!({"type": "cast_vote", "voter": who, "proposal": pick_proposal(rng), "choice": choice})
        }
        9 => json!({"type": "delegate", "delegator": who, "delegate": actor(rng.random_range(0..n)), "scope": ["ordinary"]}),
        10 => json!({"type": "revoke_delegation", "delegator": who, "scope": ["ordinary"]}),
        11 => json!({"type": "file_challenge", "challenger": who, "target": pick_proposal(rng)}),
        12 => {
            let ty = *["stake", "unstake", "redeem"].choose(rng).unwrap();
            json!({"type": ty, "actor": who, "amount": rng.random_range(0..30u64)})
        }
        13 => {
            let provider = *PROVIDERS.choose(rng).unwrap();
            let (topic, value) = if rng.random_bool(0.5) {
                ("price".to_string(), json!(rng.random_range(0..100i64)))
            } else {
                (format!("qa/{task}"), json!(rng.random_bool(0.7)))
            };
            json!({
                "type": "submit_attestation", "provider": provider, "topic": topic,
                "round": state.clock / 5, "value": value, "evidence_hash": digest_hex(provider)
            })
        }
        14 | 15 => {
            let director = actor(rng.random_range(0..2));
            let head = state.foundation.as_ref().and_then(|f| f.queue.first().copied()).unwrap_or(0);
            if rng.random_bool(0.8) {
                json!({"type": "execute_resolution", "director": director, "resolution": head})
            } else {
                let constraint = *["x-tr", "t-tvp", "gone"].choose(rng).unwrap();
                json!({"type": "refuse_resolution", "director": director, "resolution": head, "constraint": constraint})
            }
        }
        16 => {
            let by = if rng.random_bool(0.5) { actor(0) } else { who.clone() };
            json!({"type": "assign_task", "by": by, "workstream": "w", "task": task, "assignee": who})
        }
        17 => json!({"type": "escalate_task", "by": who, "workstream": "w", "task": task}),
        18 => json!({"type": "signoff_task", "steward": actor(0), "workstream": "w", "task": task}),
        _ => json!({"type": "complete_task", "actor": who, "workstream": "w", "task": task, "evidence_hash": digest_hex(task)}),
    };
    ev(v)
}

/// Genesis plus `len` submitted events, with an optional per-event check.
pub fn random_run(
    rng: &mut impl Rng,
    n: usize,
    len: usize,
    mut each: impl FnMut(&hc_core::Engine),
) -> hc_core::Engine {
    let mut e = super::genesis(random_config(rng, n));
    for _ in 0..len {
        let event = random_event(rng, n, e.state());
        let _ = e.submit(event);
        each(&e);
    }
    e
}

/// Seed for randomized generators: `HC_SEED` if set, else a fixed default.
pub fn seed() -> u64 {
    std::env::var("HC_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x4843_5345_4544)
}
