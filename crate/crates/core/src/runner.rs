//! Deterministic scenario runner.

use thiserror::Error;

use crate::engine::Engine;
use crate::event::Event;
use crate::governance::ProposalState;
use crate::report::{build_report, Report};
use crate::scenario::Scenario;
use crate::state::EngineState;
use crate::types::{ActorId, ResolutionId, Tick};

/// Upper bound on drain steps after the script ends.
pub const DRAIN_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("fatal config: {0}")]
    FatalConfig(String),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub engine: Engine,
    pub report: Report,
}

/// Apply genesis and the script, then drain: execute queued resolutions and
/// advance time until no proposal is in flight.
pub fn run(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let mut engine = Engine::new();
    engine
        .append(Event::Genesis {
            name: scenario.name.clone(),
            config: Box::new(scenario.config.clone()),
            expectations: scenario.expectations.clone(),
        })
        .map_err(|e| RunError::FatalConfig(e.to_string()))?;
    for entry in &scenario.script {
        let clock = engine.state().clock;
        if entry.at > clock {
            advance(&mut engine, entry.at - clock);
        }
        // Rejections are logged; the run continues.
        let _ = engine.submit(entry.event.clone());
    }
    drain(&mut engine);
    let report = build_report(&engine).map_err(|e| RunError::FatalConfig(e.to_string()))?;
    Ok(RunOutput { engine, report })
}

fn advance(engine: &mut Engine, ticks: Tick) {
    let _ = engine.submit(Event::AdvanceTime { ticks });
}

pub fn drain(engine: &mut Engine) {
    for _ in 0..DRAIN_LIMIT {
        if let Some((resolution, director)) = next_duty(engine.state()) {
            if engine
                .submit(Event::ExecuteResolution { director, resolution })
                .is_err()
            {
                return;
            }
            continue;
        }
        let Some(deadline) = next_deadline(engine.state()) else {
            return;
        };
        let clock = engine.state().clock;
        advance(engine, deadline.saturating_sub(clock).max(1));
    }
}

/// Queue head and the director on duty for it.
fn next_duty(state: &EngineState) -> Option<(ResolutionId, ActorId)> {
    let f = state.foundation.as_ref()?;
    let rid = *f.queue.first()?;
    let director = f.resolutions[rid as usize]
        .assigned_director
        .clone()
        .filter(|d| f.is_serving(d))
        .or_else(|| f.serving().next().cloned())?;
    Some((rid, director))
}

/// Earliest tick at which some in-flight proposal can move.
fn next_deadline(state: &EngineState) -> Option<Tick> {
    let p = &state.params;
    let now = state.clock;
    state
        .governance
        .proposals
        .values()
        .filter(|x| x.state.is_in_flight())
        .filter_map(|x| match x.state {
            ProposalState::Open => Some(x.opened_at + p.voting_window),
            ProposalState::Timelocked => Some(x.stage_since + p.timelock),
            ProposalState::Challengeable => {
                let due = x.stage_since + p.challenge_window;
                // Held upgrades wait for the next epoch.
                Some(if due > now {
                    due
                } else {
                    (p.upgrade_epoch_of(now) + 1) * p.upgrade_epoch.max(1)
                })
            }
            _ => None,
        })
        .min()
}
