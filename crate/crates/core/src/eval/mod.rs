//! Offline evaluation against recorded wizard conversations.
//!
//! Each turn runs the program on the recorded user message, is scored
//! against the wizard's labelled action and reply, and then the state is
//! pulled back onto the recorded conversation: the history gets the wizard's
//! reply and helper variables take the values implied by the wizard's
//! position in the flow.

mod metrics;
mod report;
mod wizard;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use metrics::{action_scores, bleu4, jga, normalize_value, tokenize, values_match, ActionScores, BleuStats, Smoothing};
pub use report::{EvalSummary, StateErrorRate};
pub use wizard::{approx_wizard_state, approx_wizard_states, condition_polarity, WizardError, EXECUTED, FILLED};

use crate::backend::Backend;
use crate::chief::ChiefGraph;
use crate::compiler::{GuardrailProgram, VarKind};
use crate::runtime::{ActionKind, Runtime, RuntimeOptions, Speaker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDialogue {
    pub id: String,
    #[serde(default)]
    pub task: String,
    pub turns: Vec<GroundTruthTurn>,
    /// Wizard action label to node id, global action or fallback action.
    /// `null` marks a label with no counterpart in the flow. Labels that
    /// already name a node or action need no entry.
    #[serde(default)]
    pub mapping: BTreeMap<String, Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTurn {
    pub user: String,
    pub wizard: String,
    pub action: String,
    /// Gold slot values after this turn, when annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum GoldTarget {
    Node(String),
    Global(String),
    Fallback(String),
    Unmapped(String),
}

impl GoldTarget {
    /// The label predictions are compared with.
    pub fn label(&self) -> String {
        match self {
            GoldTarget::Node(n) | GoldTarget::Global(n) | GoldTarget::Fallback(n) => n.clone(),
            GoldTarget::Unmapped(l) => format!("unmapped:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dialogue {dialogue}: action label `{label}` is neither mapped nor marked unmapped")]
    UnknownLabel { dialogue: String, label: String },
    #[error("dialogue {dialogue}: label `{label}` maps to `{target}`, which is not in the flow")]
    BadMapping { dialogue: String, label: String, target: String },
}

/// Reads one dialogue per non-blank line.
pub fn load_dialogues(jsonl: &str) -> Result<Vec<GroundTruthDialogue>, DatasetError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn dialogues_to_jsonl(dialogues: &[GroundTruthDialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&serde_json::to_string(d).expect("dialogues serialize"));
        out.push('\n');
    }
    out
}

fn classify(program: &GuardrailProgram, name: &str) -> Option<GoldTarget> {
    if program.check(name).is_some() {
        Some(GoldTarget::Node(name.into()))
    } else if program.intent_table.iter().any(|i| i.name == name) {
        Some(GoldTarget::Global(name.into()))
    } else if program.fallback_policy.actions.iter().any(|a| a.name == name) {
        Some(GoldTarget::Fallback(name.into()))
    } else {
        None
    }
}

pub fn resolve_label(
    program: &GuardrailProgram,
    dialogue: &GroundTruthDialogue,
    label: &str,
) -> Result<GoldTarget, DatasetError> {
    match dialogue.mapping.get(label) {
        Some(None) => Ok(GoldTarget::Unmapped(label.into())),
        Some(Some(target)) => classify(program, target).ok_or_else(|| DatasetError::BadMapping {
            dialogue: dialogue.id.clone(),
            label: label.into(),
            target: target.clone(),
        }),
        None => classify(program, label).ok_or_else(|| DatasetError::UnknownLabel {
            dialogue: dialogue.id.clone(),
            label: label.into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Also overwrite slots with the gold belief state after each turn.
    pub oracle_state: bool,
    pub smoothing: Smoothing,
    pub runtime: RuntimeOptions,
    /// Dialogues evaluated at once; `None` uses every core.
    pub parallelism: Option<usize>,
}

/// One program variable compared with its approximated wizard value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCheck {
    pub variable: String,
    /// `request`, `external_action` or `inform`.
    pub node_kind: String,
    pub predicted: Value,
    pub expected: Value,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub dialogue: String,
    pub turn: usize,
    pub user: String,
    pub gold_label: String,
    pub gold: GoldTarget,
    pub predicted_action: Option<String>,
    pub predicted_kind: Option<ActionKind>,
    pub predicted_utterance: String,
    pub reference_utterance: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub predicted_slots: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_slots: Option<BTreeMap<String, Value>>,
    /// External-action nodes run during the turn.
    pub api_calls: Vec<String>,
    pub api_calls_correct: usize,
    pub state_checks: Vec<StateCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub turns: Vec<TurnRecord>,
    pub summary: EvalSummary,
}

fn node_kind_of(var: &str) -> &'static str {
    match VarKind::of_helper(var) {
        None => "request",
        Some(VarKind::Action) => "external_action",
        Some(_) => "inform",
    }
}

/// Whether a program value agrees with an approximated wizard value.
fn approx_matches(predicted: &Value, expected: &Value) -> bool {
    let unset = |v: &Value| v.is_null() || *v == Value::Bool(false);
    match expected {
        Value::Null | Value::Bool(false) => unset(predicted),
        Value::String(s) if s == EXECUTED || s == FILLED => !unset(predicted),
        other => values_match(predicted, other),
    }
}

/// The approximated state once the wizard's own action at `target` has run:
/// its message was given or its call made. A confirmation question leaves
/// the answer open.
fn after_action(graph: &ChiefGraph, target: &str, mut state: BTreeMap<String, Value>) -> BTreeMap<String, Value> {
    if let Some(node) = graph.node(target) {
        for var in node.helper_variables() {
            match VarKind::of_helper(&var) {
                Some(VarKind::Inform) => state.insert(var, Value::Bool(true)),
                Some(VarKind::Action) => state.insert(var, Value::String(EXECUTED.into())),
                _ => None,
            };
        }
    }
    state
}

/// Validates every label up front so a bad dataset fails before any backend call.
fn resolve_all(program: &GuardrailProgram, dialogues: &[GroundTruthDialogue]) -> Result<Vec<Vec<GoldTarget>>, DatasetError> {
    dialogues
        .iter()
        .map(|d| d.turns.iter().map(|t| resolve_label(program, d, &t.action)).collect())
        .collect()
}

pub fn evaluate(
    program: &GuardrailProgram,
    graph: &ChiefGraph,
    dialogues: &[GroundTruthDialogue],
    backend: &dyn Backend,
    options: EvalOptions,
) -> Result<EvalReport, DatasetError> {
    let targets = resolve_all(program, dialogues)?;
    let runtime = Runtime::new(program.clone()).with_options(options.runtime);
    let jobs: Vec<(&GroundTruthDialogue, &Vec<GoldTarget>)> = dialogues.iter().zip(&targets).collect();
    let per_dialogue = crate::par::map_with_threads(&jobs, options.parallelism, |(d, t)| {
        evaluate_dialogue(&runtime, graph, d, t, backend, options)
    });
    let turns: Vec<TurnRecord> = per_dialogue.into_iter().flatten().collect();
    let summary = EvalSummary::from_turns(&turns, options.smoothing);
    Ok(EvalReport { turns, summary })
}

/// Per node kind, how often the program's variables disagree with the
/// approximated wizard state.
pub fn state_error_report(
    program: &GuardrailProgram,
    graph: &ChiefGraph,
    dialogues: &[GroundTruthDialogue],
    backend: &dyn Backend,
) -> Result<BTreeMap<String, StateErrorRate>, DatasetError> {
    Ok(evaluate(program, graph, dialogues, backend, EvalOptions::default())?.summary.state_errors)
}

fn evaluate_dialogue(
    runtime: &Runtime,
    graph: &ChiefGraph,
    dialogue: &GroundTruthDialogue,
    targets: &[GoldTarget],
    backend: &dyn Backend,
    options: EvalOptions,
) -> Vec<TurnRecord> {
    let mut state = runtime.initial_state();
    if let Some(p) = &dialogue.preamble {
        state = state.with_preamble(p.clone());
    }
    let mut records = Vec::with_capacity(dialogue.turns.len());
    for (i, (turn, gold)) in dialogue.turns.iter().zip(targets).enumerate() {
        let (mut next, predicted, error) = match runtime.run_turn(&state, &turn.user, backend) {
            Ok((result, next)) => (next, Some(result), None),
            Err(e) => {
                let mut next = state.clone();
                next.push(Speaker::User, turn.user.clone());
                next.push(Speaker::Bot, String::new());
                (next, None, Some(e.to_string()))
            }
        };

        let api_calls: Vec<String> = predicted
            .iter()
            .flat_map(|r| r.state_delta.iter())
            .filter(|(var, d)| var.starts_with("action_") && !d.new.is_null())
            .filter_map(|(var, _)| graph.variable_node(var).map(str::to_string))
            .collect();

        let approx = match gold {
            GoldTarget::Node(node) => match approx_wizard_states(graph, node) {
                Ok(before) => after_action(graph, node, before),
                Err(e) => {
                    tracing::warn!(dialogue = %dialogue.id, node, error = %e, "no wizard state");
                    BTreeMap::new()
                }
            },
            _ => BTreeMap::new(),
        };
        let api_calls_correct = api_calls
            .iter()
            .filter(|node| approx.get(&format!("action_{node}")) == Some(&Value::String(EXECUTED.into())))
            .count();
        let state_checks: Vec<StateCheck> = approx
            .iter()
            // A user may volunteer a slot before the wizard asks for it.
            .filter(|(var, expected)| !(expected.is_null() && VarKind::of_helper(var).is_none()))
            .map(|(var, expected)| {
                let predicted = next.get(var);
                StateCheck {
                    variable: var.clone(),
                    node_kind: node_kind_of(var).into(),
                    ok: approx_matches(&predicted, expected),
                    predicted,
                    expected: expected.clone(),
                }
            })
            .collect();

        let gold_label = gold.label();
        let predicted_action = predicted.as_ref().map(|r| r.action.clone());
        records.push(TurnRecord {
            dialogue: dialogue.id.clone(),
            turn: i + 1,
            user: turn.user.clone(),
            gold_label: turn.action.clone(),
            correct: predicted_action.as_deref() == Some(gold_label.as_str()),
            gold: gold.clone(),
            predicted_kind: predicted.as_ref().map(|r| r.kind),
            predicted_utterance: predicted.as_ref().map(|r| r.utterance.clone()).unwrap_or_default(),
            predicted_action,
            reference_utterance: turn.wizard.clone(),
            error,
            predicted_slots: next.slots.clone(),
            gold_slots: turn.belief.clone(),
            api_calls,
            api_calls_correct,
            state_checks,
        });

        // Back onto the recorded conversation.
        if let Some(last) = next.history.last_mut() {
            last.text = turn.wizard.clone();
        }
        // Values that already agree are kept, so real action results survive.
        for (var, value) in &approx {
            if let Some(kind) = VarKind::of_helper(var) {
                if !approx_matches(&next.get(var), value) {
                    let v = if value.is_null() { kind.reset_value() } else { value.clone() };
                    next.set(var, v);
                }
            }
        }
        if options.oracle_state {
            if let Some(belief) = &turn.belief {
                let slots: Vec<String> = next.slots.keys().cloned().collect();
                for slot in slots {
                    next.set(&slot, belief.get(&slot).cloned().unwrap_or(Value::Null));
                }
            }
        }
        state = next;
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn approximate_value_matching() {
        assert!(approx_matches(&json!(false), &Value::Null));
        assert!(approx_matches(&Value::Null, &json!(false)));
        assert!(approx_matches(&json!("REF-1"), &json!(EXECUTED)));
        assert!(!approx_matches(&Value::Null, &json!(EXECUTED)));
        assert!(approx_matches(&json!(true), &json!(true)));
        assert!(!approx_matches(&json!(false), &json!(true)));
        assert!(approx_matches(&json!("yes"), &json!("yes")));
        assert!(!approx_matches(&json!("other"), &json!("yes")));
    }

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"id":"d1","task":"taxi","turns":[{"user":"hi","wizard":"Hello!","action":"hello"}]}

{"id":"d2","turns":[],"mapping":{"ask":"n1","chitchat":null}}
"#;
        let ds = load_dialogues(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[1].mapping["chitchat"], None);
        assert_eq!(load_dialogues(&dialogues_to_jsonl(&ds)).unwrap(), ds);
        assert!(matches!(load_dialogues("{}\n"), Err(DatasetError::Parse { line: 1, .. })));
    }
}
