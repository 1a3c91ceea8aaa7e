mod common;

use common::*;
use hc_core::action::{Action, TaskResolution};
use hc_core::governance::{ProposalKind, ProposalOrigin, ProposalState};
use hc_core::token::{RewardKind, RewardSource};
use hc_core::workstream::{TaskState, MAX_ESCALATION};
use hc_core::{Engine, EngineError, EngineResult};
use serde_json::json;

const RATE: u64 = 15;

fn ws_engine() -> Engine {
    genesis(json!({
        "roles": ["builder"],
        "members": [
            {"actor": "steward"},
            {"actor": "ada", "roles": ["builder"]},
            {"actor": "bo", "roles": ["builder"]},
            {"actor": "cy"}
        ],
        "policy": {
            "treasury": 1000,
            "genesis_allocations": [
                {"actor": "steward", "vested": 40},
                {"actor": "ada", "vested": 20},
                {"actor": "bo", "vested": 20},
                {"actor": "cy", "vested": 20}
            ]
        },
        "oracle": {"providers": [{"id": "P"}, {"id": "Q"}], "n_active": 2, "m_min": 2},
        "workstreams": [{
            "id": "build",
            "steward": "steward",
            "required_roles": ["builder"],
            "reward_rate": RATE,
            "tasks": [
                {"id": "t1", "spec_hash": digest_hex("t1"), "verification": "steward_signoff"},
                {"id": "t2", "spec_hash": digest_hex("t2"), "verification": {"oracle_topic": "qa/t2"}}
            ]
        }]
    }))
}

fn assign(e: &mut Engine, by: &str, task: &str, to: &str) -> EngineResult<()> {
    apply(e, json!({"type": "assign_task", "by": by, "workstream": "build", "task": task, "assignee": to}))
}

fn escalate(e: &mut Engine, by: &str, task: &str, proposed: Option<&str>) -> EngineResult<()> {
    let proposed = proposed.map(|a| json!({"reassign": a}));
    apply(
        e,
        json!({"type": "escalate_task", "by": by, "workstream": "build", "task": task, "proposed": proposed}),
    )
}

fn signoff(e: &mut Engine, task: &str) -> EngineResult<()> {
    apply(e, json!({"type": "signoff_task", "steward": "steward", "workstream": "build", "task": task}))
}

fn complete(e: &mut Engine, actor: &str, task: &str) -> EngineResult<()> {
    apply(
        e,
        json!({"type": "complete_task", "actor": actor, "workstream": "build", "task": task, "evidence_hash": digest_hex("done")}),
    )
}

fn task_state(e: &Engine, task: &str) -> TaskState {
    e.state().workstreams[&"build".into()].tasks[&task.into()].state
}

#[test]
fn assignment_rules() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    assert_eq!(task_state(&e, "t1"), TaskState::Assigned);
    assert_eq!(
        e.state().workstreams[&"build".into()].tasks[&"t1".into()].assignee,
        Some("ada".into())
    );
    assert_eq!(
        assign(&mut e, "steward", "t2", "cy"),
        Err(EngineError::MissingRole("cy".into(), "builder".into()))
    );
    assert_eq!(assign(&mut e, "steward", "t1", "bo"), Err(EngineError::TaskNotOpen("build/t1".into())));
    assert!(matches!(assign(&mut e, "ada", "t2", "bo"), Err(EngineError::Unauthorized(_))));
    assign(&mut e, "bo", "t2", "bo").unwrap();
}

#[test]
fn escalation_reaches_governance_at_top_level() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    let before = e.state().governance.proposals.len();
    for level in 1..MAX_ESCALATION {
        escalate(&mut e, "ada", "t1", None).unwrap();
        assert_eq!(task_state(&e, "t1"), TaskState::Escalated { level });
        assert_eq!(e.state().governance.proposals.len(), before);
    }
    escalate(&mut e, "steward", "t1", Some("bo")).unwrap();
    assert_eq!(task_state(&e, "t1"), TaskState::Escalated { level: MAX_ESCALATION });
    let task = &e.state().workstreams[&"build".into()].tasks[&"t1".into()];
    let pid = task.resolution_proposal.unwrap();
    let p = &e.state().governance.proposals[&pid];
    assert_eq!(p.kind, ProposalKind::Ordinary);
    assert!(matches!(p.origin, ProposalOrigin::Engine { .. }));
    assert!(matches!(
        &p.action,
        Action::TaskResolve { resolution: TaskResolution::Reassign(to), .. } if to.as_str() == "bo"
    ));
    assert_eq!(escalate(&mut e, "steward", "t1", None), Err(EngineError::MaxEscalation("build/t1".into())));
    assert_eq!(assign(&mut e, "steward", "t1", "bo"), Err(EngineError::TaskNotOpen("build/t1".into())));

    for v in ["steward", "ada", "bo"] {
        vote(&mut e, v, pid, "for").unwrap();
    }
    settle(&mut e, pid);
    assert_eq!(state_of(&e, pid), ProposalState::ExecutedOnChain);
    assert_eq!(task_state(&e, "t1"), TaskState::Assigned);
    assert_eq!(
        e.state().workstreams[&"build".into()].tasks[&"t1".into()].assignee,
        Some("bo".into())
    );
}

#[test]
fn steward_may_reassign_below_top_level() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    escalate(&mut e, "ada", "t1", None).unwrap();
    assert!(assign(&mut e, "ada", "t1", "ada").is_err());
    assign(&mut e, "steward", "t1", "bo").unwrap();
    assert_eq!(task_state(&e, "t1"), TaskState::Assigned);
}

#[test]
fn signoff_completes_and_pays() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    assert_eq!(complete(&mut e, "ada", "t1"), Err(EngineError::VerificationMissing("build/t1".into())));
    assert!(matches!(
        apply(&mut e, json!({"type": "signoff_task", "steward": "ada", "workstream": "build", "task": "t1"})),
        Err(EngineError::Unauthorized(_))
    ));
    signoff(&mut e, "t1").unwrap();
    assert!(matches!(complete(&mut e, "bo", "t1"), Err(EngineError::Unauthorized(_))));
    let before = e.state().account(&"ada".into()).vested;
    let treasury = e.state().treasury.balance;
    complete(&mut e, "ada", "t1").unwrap();
    let s = e.state();
    assert_eq!(task_state(&e, "t1"), TaskState::Done);
    assert_eq!(s.account(&"ada".into()).vested, before + RATE);
    assert_eq!(s.treasury.balance, treasury - RATE);
    let r = s.audit.rewards.last().unwrap();
    assert_eq!((r.kind, r.amount), (RewardKind::TaskReward, RATE));
    assert!(s.conservation_holds());
}

#[test]
fn oracle_verified_task_needs_true_reading() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t2", "bo").unwrap();
    let attest = |e: &mut Engine, p: &str, round: u64, v: bool| {
        apply(
            e,
            json!({"type": "submit_attestation", "provider": p, "topic": "qa/t2", "round": round, "value": v, "evidence_hash": digest_hex(p)}),
        )
        .unwrap()
    };
    attest(&mut e, "P", 1, false);
    attest(&mut e, "Q", 1, false);
    let w = e.state().oracle.config.round_window;
    advance(&mut e, w);
    assert_eq!(complete(&mut e, "bo", "t2"), Err(EngineError::VerificationMissing("build/t2".into())));
    attest(&mut e, "P", 2, true);
    attest(&mut e, "Q", 2, true);
    advance(&mut e, w);
    complete(&mut e, "bo", "t2").unwrap();
    assert_eq!(task_state(&e, "t2"), TaskState::Done);
}

#[test]
fn double_completion_pays_once() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    signoff(&mut e, "t1").unwrap();
    complete(&mut e, "ada", "t1").unwrap();
    let after_first = e.state().account(&"ada".into());
    assert_eq!(complete(&mut e, "ada", "t1"), Err(EngineError::TaskNotOpen("build/t1".into())));
    assert!(e.submit(ev(json!({"type": "complete_task", "actor": "ada", "workstream": "build", "task": "t1", "evidence_hash": digest_hex("again")}))).is_err());
    assert_eq!(e.state().account(&"ada".into()), after_first);
    assert_eq!(e.state().audit.rewards.len(), 1);
}

#[test]
fn rewards_and_completions_are_in_bijection() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    signoff(&mut e, "t1").unwrap();
    complete(&mut e, "ada", "t1").unwrap();
    assign(&mut e, "bo", "t2", "bo").unwrap();
    escalate(&mut e, "bo", "t2", None).unwrap();
    let s = e.state();
    let done: Vec<(String, String)> = s
        .workstreams
        .values()
        .flat_map(|w| w.tasks.values().filter(|t| t.state == TaskState::Done).map(move |t| (w.id.to_string(), t.id.to_string())))
        .collect();
    let paid: Vec<(String, String)> = s
        .audit
        .rewards
        .iter()
        .filter_map(|r| match &r.source {
            RewardSource::TaskCompletion { workstream, task } if r.kind == RewardKind::TaskReward => {
                Some((workstream.to_string(), task.to_string()))
            }
            _ => None,
        })
        .collect();
    assert_eq!(done, paid);
}

#[test]
fn top_escalation_without_proposal_cancels() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    for _ in 0..MAX_ESCALATION {
        escalate(&mut e, "steward", "t1", None).unwrap();
    }
    let pid = e.state().workstreams[&"build".into()].tasks[&"t1".into()].resolution_proposal.unwrap();
    vote(&mut e, "steward", pid, "for").unwrap();
    settle(&mut e, pid);
    assert_eq!(task_state(&e, "t1"), TaskState::Cancelled);
}

#[test]
fn rejected_top_escalation_cancels_task() {
    let mut e = ws_engine();
    assign(&mut e, "steward", "t1", "ada").unwrap();
    for _ in 0..MAX_ESCALATION - 1 {
        escalate(&mut e, "steward", "t1", None).unwrap();
    }
    escalate(&mut e, "steward", "t1", Some("bo")).unwrap();
    let pid = e.state().workstreams[&"build".into()].tasks[&"t1".into()].resolution_proposal.unwrap();
    for v in ["steward", "ada", "bo", "cy"] {
        vote(&mut e, v, pid, "against").unwrap();
    }
    settle(&mut e, pid);
    assert_eq!(state_of(&e, pid), ProposalState::Failed);
    assert_eq!(task_state(&e, "t1"), TaskState::Cancelled);
    assert!(e.state().audit.rewards.is_empty());
}
