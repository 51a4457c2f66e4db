//! Scripted conversations with expected per-turn outcomes, used to check the
//! runtime against hand-traced behaviour.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{MockBackend, MockEntry, Purpose};
use crate::compiler::GuardrailProgram;
use crate::runtime::{ActionKind, ConversationState, Runtime, RuntimeOptions, TurnResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Fixture flow name (`taxi` for `taxi.chief.json`).
    pub flow: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
    #[serde(default)]
    pub options: RuntimeOptions,
    pub turns: Vec<ScenarioTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTurn {
    pub user: String,
    /// Backend replies for this turn; all of them must be used.
    #[serde(default)]
    pub script: Vec<MockEntry>,
    pub expect: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub action: String,
    pub kind: ActionKind,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<BTreeMap<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpers: Option<BTreeMap<String, Value>>,
    /// Number of backend calls per purpose; unlisted purposes must be zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<BTreeMap<Purpose, usize>>,
}

#[derive(Debug, Clone)]
pub struct TurnOutcome {
    pub result: Option<TurnResult>,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub turns: Vec<TurnOutcome>,
    pub final_state: ConversationState,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.turns.iter().all(|t| t.mismatches.is_empty())
    }

    pub fn failures(&self) -> Vec<String> {
        self.turns
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.mismatches.iter().map(move |m| format!("{} turn {}: {m}", self.name, i + 1)))
            .collect()
    }
}

pub fn run_scenario(program: &GuardrailProgram, scenario: &Scenario) -> ScenarioReport {
    let runtime = Runtime::new(program.clone()).with_options(scenario.options);
    let mut state = runtime.initial_state();
    if let Some(p) = &scenario.preamble {
        state = state.with_preamble(p.clone());
    }
    let mut turns = Vec::new();
    for turn in &scenario.turns {
        let backend = MockBackend::from_entries(turn.script.iter().cloned());
        let before = state.history.len();
        let mut mismatches = Vec::new();
        let result = match runtime.run_turn(&state, &turn.user, &backend) {
            Ok((result, next)) => {
                check_turn(&turn.expect, &result, &next, &backend, &mut mismatches);
                if next.history.len() != before + 2 {
                    mismatches.push(format!("history grew by {}", next.history.len() - before));
                }
                state = next;
                Some(result)
            }
            Err(e) => {
                mismatches.push(format!("turn failed: {e}"));
                None
            }
        };
        let unused = backend.unused();
        if !unused.is_empty() {
            mismatches.push(format!("{} scripted replies were not used", unused.len()));
        }
        turns.push(TurnOutcome { result, mismatches });
    }
    ScenarioReport {
        name: scenario.name.clone(),
        turns,
        final_state: state,
    }
}

fn check_turn(
    expect: &Expectation,
    result: &TurnResult,
    state: &ConversationState,
    backend: &MockBackend,
    out: &mut Vec<String>,
) {
    let mut diff = |what: &str, want: String, got: String| {
        if want != got {
            out.push(format!("{what}: expected {want}, got {got}"));
        }
    };
    diff("action", expect.action.clone(), result.action.clone());
    diff("kind", format!("{:?}", expect.kind), format!("{:?}", result.kind));
    diff("utterance", expect.utterance.clone(), result.utterance.clone());
    if let Some(slots) = &expect.slots {
        diff("slots", Value::from_iter(slots.clone()).to_string(), Value::from_iter(state.slots.clone()).to_string());
    }
    if let Some(helpers) = &expect.helpers {
        diff(
            "helpers",
            Value::from_iter(helpers.clone()).to_string(),
            Value::from_iter(state.helpers.clone()).to_string(),
        );
    }
    let calls = backend.calls();
    if let Some(expected) = &expect.calls {
        for p in Purpose::ALL {
            let want = expected.get(&p).copied().unwrap_or(0);
            let got = calls.iter().filter(|c| c.purpose == p).count();
            diff(&format!("{p} calls"), want.to_string(), got.to_string());
        }
    }

    let dst_or_nap = calls
        .iter()
        .filter(|c| !matches!(c.purpose, Purpose::Intent))
        .count();
    if result.kind == ActionKind::Global && dst_or_nap > 0 {
        out.push(format!("global action turn made {dst_or_nap} non-intent backend calls"));
    }
    let fell_back = result.trace.iter().any(|s| s.point == "fallback");
    if fell_back != result.is_fallback() {
        out.push("fallback ran without the tree yielding nothing, or vice versa".into());
    }
    if result.kind != ActionKind::Global && result.trace.is_empty() {
        out.push("empty trace".into());
    }
}
