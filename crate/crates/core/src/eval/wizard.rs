//! Reconstructs the program state implied by a labelled wizard action: the
//! first depth-first path from the start node to the action's node marks
//! which nodes have already run.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::backend::normalize_utterance;
use crate::chief::{dfs_path, ChiefError, ChiefGraph, Edge};
use crate::compiler::VarKind;

/// Stand-in value for an `action_<id>` helper of an external action on the path.
pub const EXECUTED: &str = "<executed>";
/// Stand-in value for a slot asked for before the target node.
pub const FILLED: &str = "<filled>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WizardError {
    #[error("action label `{0}` has no node mapping")]
    UnmappedAction(String),
    #[error("no path from the start node to {0}")]
    NoPath(String),
    #[error("`{0}` is not a variable of the flow")]
    UnknownVariable(String),
    #[error(transparent)]
    Graph(#[from] ChiefError),
}

/// `yes` for conditions describing agreement, `no` for refusal, else `None`.
pub fn condition_polarity(condition: &str) -> Option<&'static str> {
    const NEGATIVE: &[&str] = &[
        "no", "not", "nope", "decline", "declines", "declined", "reject", "rejects", "refuse", "refuses", "deny",
        "denies", "cancel", "cancels", "disagree", "disagrees", "doesn", "don", "never",
    ];
    const POSITIVE: &[&str] = &[
        "yes", "confirm", "confirms", "confirmed", "accept", "accepts", "agree", "agrees", "approve", "approves",
        "ok", "okay",
    ];
    let text = normalize_utterance(&condition.replace('\'', " "));
    let words: Vec<&str> = text.split(' ').collect();
    if words.iter().any(|w| NEGATIVE.contains(w)) {
        Some("no")
    } else if words.iter().any(|w| POSITIVE.contains(w)) {
        Some("yes")
    } else {
        None
    }
}

/// Edges of the first depth-first path from the start node to `target`.
fn path_to<'g>(graph: &'g ChiefGraph, target: &str) -> Result<Vec<&'g Edge>, WizardError> {
    let start = graph.start().ok_or_else(|| WizardError::NoPath(target.to_string()))?;
    dfs_path(graph, start, target)?.ok_or_else(|| WizardError::NoPath(target.to_string()))
}

fn value_on_path(graph: &ChiefGraph, path: &[&Edge], target: &str, variable: &str) -> Result<Value, WizardError> {
    let node = graph
        .variable_node(variable)
        .ok_or_else(|| WizardError::UnknownVariable(variable.to_string()))?;
    let kind = VarKind::of_helper(variable).unwrap_or(VarKind::Slot);
    if node == target {
        return Ok(match kind {
            VarKind::Inform | VarKind::Answered => Value::Bool(false),
            VarKind::Action | VarKind::Slot => Value::Null,
        });
    }
    let Some(leaving) = path.iter().find(|e| e.source == node) else {
        return Ok(Value::Null);
    };
    Ok(match kind {
        VarKind::Slot => Value::String(FILLED.into()),
        VarKind::Action => Value::String(EXECUTED.into()),
        VarKind::Inform => Value::Bool(true),
        VarKind::Answered => leaving
            .condition
            .as_deref()
            .and_then(condition_polarity)
            .map_or(Value::Null, |p| Value::String(p.into())),
    })
}

/// Approximate value of one variable when the wizard is at `target`.
pub fn approx_wizard_state(graph: &ChiefGraph, target: &str, variable: &str) -> Result<Value, WizardError> {
    let path = path_to(graph, target)?;
    value_on_path(graph, &path, target, variable)
}

/// Approximate values of every variable of the flow.
pub fn approx_wizard_states(graph: &ChiefGraph, target: &str) -> Result<BTreeMap<String, Value>, WizardError> {
    let path = path_to(graph, target)?;
    graph
        .variables()
        .into_iter()
        .map(|v| value_on_path(graph, &path, target, &v).map(|x| (v, x)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chief::parse_chief;

    const TAXI: &str = include_str!("../../fixtures/flows/taxi.chief.json");

    #[test]
    fn polarity() {
        assert_eq!(condition_polarity("user confirms the booking"), Some("yes"));
        assert_eq!(condition_polarity("user declines the booking"), Some("no"));
        assert_eq!(condition_polarity("the user does not confirm"), Some("no"));
        assert_eq!(condition_polarity("user doesn't want it"), Some("no"));
        assert_eq!(condition_polarity("the city is in Europe"), None);
    }

    #[test]
    fn start_target_gives_nulls() {
        let g = parse_chief(TAXI).unwrap();
        let s = approx_wizard_states(&g, "n1").unwrap();
        assert!(s.values().all(Value::is_null));
    }

    #[test]
    fn errors() {
        let g = parse_chief(TAXI).unwrap();
        assert!(matches!(approx_wizard_state(&g, "n3", "nope"), Err(WizardError::UnknownVariable(_))));
        assert!(matches!(approx_wizard_state(&g, "n9", "time"), Err(WizardError::Graph(_))));
    }
}
