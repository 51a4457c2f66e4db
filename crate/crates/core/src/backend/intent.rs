use super::{Backend, BackendError, BackendRequest, Purpose};
use crate::compiler::IntentEntry;

/// Lowercase, punctuation to spaces, collapsed whitespace.
pub fn normalize_utterance(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect::<String>()
        .replace('\'', "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn triggers(intent: &IntentEntry) -> Vec<String> {
    if intent.examples.is_empty() {
        vec![normalize_utterance(&intent.name.replace('_', " "))]
    } else {
        intent.examples.iter().map(|e| normalize_utterance(e)).collect()
    }
}

/// Global-action detection: exact match on normalized trigger examples,
/// then a single classification call restricted to the intent names.
pub fn detect_intent(
    utterance: &str,
    intents: &[IntentEntry],
    backend: &dyn Backend,
    preamble: Option<&str>,
) -> Result<Option<String>, BackendError> {
    if intents.is_empty() {
        return Ok(None);
    }
    let normalized = normalize_utterance(utterance);
    if let Some(hit) = intents.iter().find(|i| triggers(i).contains(&normalized)) {
        return Ok(Some(hit.name.clone()));
    }

    let mut listing = String::new();
    for i in intents {
        let examples: Vec<String> = i.examples.iter().map(|e| format!("\"{e}\"")).collect();
        listing.push_str(&format!("- {}: {}\n", i.name, examples.join(", ")));
    }
    let system = crate::runtime::system_message(
        preamble,
        "You label user messages with the global intent they express, if any.",
    );
    let user = format!(
        "Intents and example messages:\n{listing}\nUser message: \"{utterance}\"\n\nAnswer with exactly one intent name from the list, or none if the message does not express any of them."
    );
    let reply = backend.complete(&BackendRequest::new(Purpose::Intent, system, user))?;
    let answer = normalize_utterance(&reply).replace(' ', "_");
    Ok(intents
        .iter()
        .find(|i| i.name.to_lowercase() == answer)
        .map(|i| i.name.clone()))
}
