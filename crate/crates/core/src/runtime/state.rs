use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compiler::{GuardrailProgram, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub history: Vec<Message>,
    pub slots: BTreeMap<String, Value>,
    pub helpers: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_preamble: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub old: Value,
    pub new: Value,
}

impl ConversationState {
    /// Fresh state with every declared variable at its initial value.
    pub fn new(program: &GuardrailProgram) -> Self {
        let mut slots = BTreeMap::new();
        let mut helpers = BTreeMap::new();
        for v in &program.init_block {
            match v.kind {
                VarKind::Slot => slots.insert(v.var.clone(), v.initial.clone()),
                _ => helpers.insert(v.var.clone(), v.initial.clone()),
            };
        }
        ConversationState {
            history: Vec::new(),
            slots,
            helpers,
            context_preamble: None,
        }
    }

    pub fn with_preamble(mut self, preamble: impl Into<String>) -> Self {
        self.context_preamble = Some(preamble.into());
        self
    }

    pub fn get(&self, var: &str) -> Value {
        self.slots
            .get(var)
            .or_else(|| self.helpers.get(var))
            .cloned()
            .unwrap_or(Value::Null)
    }

    /// Sets a declared variable and returns the previous value.
    pub fn set(&mut self, var: &str, value: Value) -> Option<Value> {
        if let Some(v) = self.slots.get_mut(var) {
            return Some(std::mem::replace(v, value));
        }
        self.helpers.get_mut(var).map(|v| std::mem::replace(v, value))
    }

    pub fn turns(&self) -> usize {
        self.history.len() / 2
    }

    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.history.push(Message {
            speaker,
            text: text.into(),
        });
    }

    /// History as `User:` / `Assistant:` lines.
    pub fn transcript_text(&self) -> String {
        self.history.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("\n")
    }

    /// Re-applies a recorded turn without calling any backend.
    pub fn apply(&mut self, user: &str, utterance: &str, delta: &BTreeMap<String, Delta>) {
        self.push(Speaker::User, user);
        for (var, d) in delta {
            self.set(var, d.new.clone());
        }
        self.push(Speaker::Bot, utterance);
    }

    /// Variables whose values differ from `before`, keyed by name.
    pub fn diff(before: &ConversationState, after: &ConversationState) -> BTreeMap<String, Delta> {
        let mut out = BTreeMap::new();
        for (map_a, map_b) in [(&before.slots, &after.slots), (&before.helpers, &after.helpers)] {
            for (k, new) in map_b {
                let old = map_a.get(k).cloned().unwrap_or(Value::Null);
                if old != *new {
                    out.insert(k.clone(), Delta { old, new: new.clone() });
                }
            }
        }
        out
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = match self.speaker {
            Speaker::User => "User",
            Speaker::Bot => "Assistant",
        };
        write!(f, "{who}: {}", self.text)
    }
}
