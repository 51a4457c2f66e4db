//! Turn-by-turn interpreter for guardrail programs.
//!
//! A turn runs: append the user message, global-intent check (a hit ends the
//! turn), state tracking over every slot with invalidation, confirmation
//! answer extraction, the decision-tree walk, helper updates at the chosen
//! node, and a model-chosen fallback when the walk yields nothing.

mod actions;
mod state;
mod value;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use actions::{reference_number, ActionArgs, ActionRegistry, ExternalActionError};
pub use state::{ConversationState, Delta, Message, Speaker};
pub use value::{display_value, postprocess_value};

use crate::backend::{detect_intent, normalize_utterance, Backend, BackendError, BackendRequest, Purpose};
use crate::compiler::{confirm_instruction, BranchTarget, DecisionNode, DstEntry, GuardrailProgram, NodeAction, VarKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeOptions {
    /// Only query slots that are still empty. Off by default: every slot is
    /// re-extracted each turn so corrections are picked up.
    pub skip_unchanged_dst: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// A flow node chosen by the decision tree.
    Node,
    Global,
    /// A fallback action chosen by the model.
    Fallback,
    /// A flow node chosen by the model after the tree yielded nothing.
    LlmGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub point: String,
    pub predicate: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    /// Node id, global action name or fallback action name.
    pub action: String,
    pub kind: ActionKind,
    pub utterance: String,
    pub state_delta: BTreeMap<String, Delta>,
    pub trace: Vec<TraceStep>,
}

impl TurnResult {
    pub fn is_fallback(&self) -> bool {
        matches!(self.kind, ActionKind::Fallback | ActionKind::LlmGenerated)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnErrorKind {
    #[error("user utterance is empty")]
    EmptyUtterance,
    #[error(transparent)]
    Backend(BackendError),
    #[error(transparent)]
    ExternalAction(ExternalActionError),
}

/// A failed turn with the trace recorded up to the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind}")]
pub struct TurnError {
    pub kind: TurnErrorKind,
    pub trace: Vec<TraceStep>,
}

impl From<BackendError> for TurnErrorKind {
    fn from(e: BackendError) -> Self {
        TurnErrorKind::Backend(e)
    }
}

impl From<ExternalActionError> for TurnErrorKind {
    fn from(e: ExternalActionError) -> Self {
        TurnErrorKind::ExternalAction(e)
    }
}

/// System prompt with the optional context preamble in front.
pub fn system_message(preamble: Option<&str>, body: &str) -> String {
    match preamble.map(str::trim).filter(|p| !p.is_empty()) {
        Some(p) => format!("{p}\n\n{body}"),
        None => body.to_string(),
    }
}

/// Extraction prompt: a fixed system message, then one user message holding
/// the whole conversation followed by the instruction.
pub fn value_request(preamble: Option<&str>, transcript: &str, instruction: &str) -> BackendRequest {
    let system = system_message(
        preamble,
        "You read a conversation between a user and an assistant and follow an instruction about it. Reply with the requested value only.",
    );
    let user = format!("Conversation so far:\n{transcript}\n\nInstruction: {instruction}");
    BackendRequest::new(Purpose::ValueFromInstruction, system, user)
}

fn humanize(slot: &str) -> String {
    slot.replace('_', " ")
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Reads a yes/no style reply.
fn parse_bool(reply: &str) -> Option<bool> {
    let n = normalize_utterance(reply);
    match n.split(' ').next().unwrap_or_default() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// Maps a confirmation reply to `yes`, `no` or `other`.
pub fn normalize_answer(reply: &str) -> &'static str {
    let v = postprocess_value(reply);
    let text = match &v {
        Value::Bool(true) => "yes".to_string(),
        Value::Bool(false) => "no".to_string(),
        other => normalize_utterance(&display_value(other)),
    };
    match text.split(' ').next().unwrap_or_default() {
        "yes" | "y" | "yeah" | "yep" | "sure" | "true" | "confirm" | "confirmed" => "yes",
        "no" | "n" | "nope" | "false" => "no",
        _ => "other",
    }
}

pub struct Runtime {
    program: Arc<GuardrailProgram>,
    registry: Arc<ActionRegistry>,
    options: RuntimeOptions,
}

impl Runtime {
    /// Runtime with the stub action registry.
    pub fn new(program: impl Into<Arc<GuardrailProgram>>) -> Self {
        Runtime {
            program: program.into(),
            registry: Arc::new(ActionRegistry::with_stubs()),
            options: RuntimeOptions::default(),
        }
    }

    pub fn with_registry(mut self, registry: impl Into<Arc<ActionRegistry>>) -> Self {
        self.registry = registry.into();
        self
    }

    pub fn with_options(mut self, options: RuntimeOptions) -> Self {
        self.options = options;
        self
    }

    pub fn program(&self) -> &GuardrailProgram {
        &self.program
    }

    pub fn options(&self) -> RuntimeOptions {
        self.options
    }

    pub fn initial_state(&self) -> ConversationState {
        ConversationState::new(&self.program)
    }

    pub fn run_turn(
        &self,
        state: &ConversationState,
        utterance: &str,
        backend: &dyn Backend,
    ) -> Result<(TurnResult, ConversationState), TurnError> {
        let mut turn = Turn {
            rt: self,
            backend,
            state: state.clone(),
            trace: Vec::new(),
        };
        match turn.run(utterance) {
            Ok((action, kind, text)) => {
                turn.state.push(Speaker::Bot, text.clone());
                let result = TurnResult {
                    action,
                    kind,
                    utterance: text,
                    state_delta: ConversationState::diff(state, &turn.state),
                    trace: turn.trace,
                };
                Ok((result, turn.state))
            }
            Err(kind) => Err(TurnError { kind, trace: turn.trace }),
        }
    }

    /// Extracts one slot and applies invalidation when its value changes.
    pub fn dst_update(
        &self,
        state: &mut ConversationState,
        entry: &DstEntry,
        backend: &dyn Backend,
    ) -> Result<(Value, bool), BackendError> {
        let reply = backend.complete(&self.value_request(state, &entry.instruction).tagged(&entry.slot))?;
        let value = postprocess_value(&reply);
        let old = state.get(&entry.slot);
        let changed = value != old;
        if changed {
            state.set(&entry.slot, value.clone());
            for var in &entry.invalidates {
                let reset = VarKind::of_helper(var).map_or(Value::Null, VarKind::reset_value);
                state.set(var, reset);
            }
        }
        Ok((value, changed))
    }

    fn value_request(&self, state: &ConversationState, instruction: &str) -> BackendRequest {
        value_request(state.context_preamble.as_deref(), &state.transcript_text(), instruction)
    }

    /// Decision-tree walk. Runs external actions it passes through; returns
    /// the user-facing node it stops at, if any.
    pub fn nap(
        &self,
        state: &mut ConversationState,
        backend: &dyn Backend,
    ) -> Result<(Option<String>, Vec<TraceStep>), TurnErrorKind> {
        let mut turn = Turn {
            rt: self,
            backend,
            state: state.clone(),
            trace: Vec::new(),
        };
        let hit = turn.walk(&self.program.nap_tree.root, &mut HashSet::new())?;
        *state = turn.state;
        Ok((hit, turn.trace))
    }

    /// Asks the model to pick among fallback actions and user-facing nodes.
    /// Returns the chosen name; unknown replies map to the default action.
    pub fn generative_fallback(
        &self,
        state: &ConversationState,
        backend: &dyn Backend,
    ) -> Result<(String, String), BackendError> {
        let policy = &self.program.fallback_policy;
        let mut options = String::new();
        for a in &policy.actions {
            options.push_str(&format!("- {}: reply \"{}\"\n", a.name, a.response));
        }
        for id in &policy.node_inventory {
            if let Some(d) = self.program.check(id) {
                options.push_str(&format!("- {id}: {}\n", describe_action(&d.action)));
            }
        }
        let mut summary = String::new();
        for (k, v) in state.slots.iter().chain(state.helpers.iter()) {
            summary.push_str(&format!("{k} = {}\n", display_value(v)));
        }
        let system = system_message(
            state.context_preamble.as_deref(),
            "You pick the assistant's next action when the scripted flow has no step for the user's last message.",
        );
        let user = format!(
            "Conversation so far:\n{}\n\nCurrent state:\n{summary}\nAvailable actions:\n{options}\nAnswer with the name of one action only.",
            state.transcript_text()
        );
        let reply = backend.complete(&BackendRequest::new(Purpose::FallbackChoice, system, user))?;
        let names: Vec<&str> = policy
            .actions
            .iter()
            .map(|a| a.name.as_str())
            .chain(policy.node_inventory.iter().map(String::as_str))
            .collect();
        let cleaned: String = reply
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '_' || c == '-' { c } else { ' ' })
            .collect();
        let chosen = cleaned
            .split_whitespace()
            .find_map(|w| names.iter().find(|n| n.eq_ignore_ascii_case(w)))
            .map(|n| n.to_string())
            .unwrap_or_else(|| policy.default_action.clone());
        Ok((chosen, reply))
    }

    /// Calls the node's function with the bound slot values and stores the
    /// result in its `action_<id>` helper.
    pub fn run_external_action(
        &self,
        action: &NodeAction,
        state: &mut ConversationState,
    ) -> Result<Value, ExternalActionError> {
        let NodeAction::ExternalAction {
            function,
            parameters,
            result_var,
            ..
        } = action
        else {
            panic!("run_external_action called with a {} action", action.kind_name());
        };
        let args: ActionArgs = parameters
            .iter()
            .map(|p| (p.clone(), state.get(p)))
            .filter(|(_, v)| !v.is_null())
            .collect();
        let result = self.registry.call(function, &args)?;
        state.set(result_var, result.clone());
        Ok(result)
    }
}

fn describe_action(action: &NodeAction) -> String {
    match action {
        NodeAction::Request { required, any_of, .. } => {
            let mut slots = required.clone();
            slots.extend(any_of.iter().flatten().cloned());
            format!("ask the user for {}", slots.join(", "))
        }
        NodeAction::Inform {
            template,
            confirm_question,
            ..
        } => match confirm_question {
            Some(q) => format!("say \"{template} {q}\""),
            None => format!("say \"{template}\""),
        },
        NodeAction::ExternalAction { function, .. } => format!("call {function}"),
    }
}

/// Convenience wrapper using the stub action registry.
pub fn run_turn(
    program: &GuardrailProgram,
    state: &ConversationState,
    utterance: &str,
    backend: &dyn Backend,
) -> Result<(TurnResult, ConversationState), TurnError> {
    Runtime::new(program.clone()).run_turn(state, utterance, backend)
}

struct Turn<'r> {
    rt: &'r Runtime,
    backend: &'r dyn Backend,
    state: ConversationState,
    trace: Vec<TraceStep>,
}

impl Turn<'_> {
    fn note(&mut self, point: impl Into<String>, predicate: impl Into<String>, outcome: impl Into<String>) {
        self.trace.push(TraceStep {
            point: point.into(),
            predicate: predicate.into(),
            outcome: outcome.into(),
        });
    }

    fn preamble(&self) -> Option<&str> {
        self.state.context_preamble.as_deref()
    }

    fn run(&mut self, utterance: &str) -> Result<(String, ActionKind, String), TurnErrorKind> {
        if utterance.trim().is_empty() {
            return Err(TurnErrorKind::EmptyUtterance);
        }
        let program = Arc::clone(&self.rt.program);
        self.state.push(Speaker::User, utterance);

        let intent = detect_intent(utterance, &program.intent_table, self.backend, self.preamble())?;
        self.note("intent", "global intent", intent.as_deref().unwrap_or("none"));
        if let Some(name) = intent {
            let entry = program.intent_table.iter().find(|i| i.name == name).expect("detected intent exists");
            let text = self.render(&entry.response);
            return Ok((name, ActionKind::Global, text));
        }

        for entry in &program.dst_table {
            let point = format!("dst:{}", entry.slot);
            if self.rt.options.skip_unchanged_dst && !self.state.get(&entry.slot).is_null() {
                self.note(point, &entry.slot, "skipped");
                continue;
            }
            let (value, changed) = self.rt.dst_update(&mut self.state, entry, self.backend)?;
            let outcome = if changed {
                format!("{} (changed)", value)
            } else {
                value.to_string()
            };
            self.note(point, &entry.slot, outcome);
        }

        self.extract_answers()?;

        if let Some(node) = self.walk(&program.nap_tree.root, &mut HashSet::new())? {
            let text = self.perform(&node);
            return Ok((node, ActionKind::Node, text));
        }

        let (choice, raw) = self.rt.generative_fallback(&self.state, self.backend)?;
        self.note("fallback", raw.trim(), &choice);
        if program.fallback_policy.node_inventory.contains(&choice) {
            let text = self.perform(&choice);
            return Ok((choice, ActionKind::LlmGenerated, text));
        }
        let response = program
            .fallback_policy
            .actions
            .iter()
            .find(|a| a.name == choice)
            .map(|a| a.response.clone())
            .unwrap_or_default();
        let text = self.render(&response);
        Ok((choice, ActionKind::Fallback, text))
    }

    fn extract_answers(&mut self) -> Result<(), TurnErrorKind> {
        let program = Arc::clone(&self.rt.program);
        for d in program.checks() {
            let NodeAction::Inform {
                confirm_question: Some(question),
                inform_var,
                answered_var: Some(answered),
                ..
            } = &d.action
            else {
                continue;
            };
            let pending = self.state.get(inform_var) == Value::Bool(true)
                && !matches!(self.state.get(answered).as_str(), Some("yes" | "no"));
            if !pending {
                continue;
            }
            let instruction = confirm_instruction(question);
            let request = self.rt.value_request(&self.state, &instruction).tagged(answered.clone());
            let raw = self.backend.complete(&request)?;
            let answer = normalize_answer(&raw);
            self.state.set(answered, Value::String(answer.into()));
            self.note(format!("answer:{answered}"), raw.trim(), answer);
        }
        Ok(())
    }

    fn nld(&mut self, text: &str, tag: &str) -> Result<bool, BackendError> {
        let system = system_message(
            self.preamble(),
            "You judge conditions about a conversation between a user and an assistant. Reply with True or False only.",
        );
        let user = format!(
            "Conversation so far:\n{}\n\nCondition: {text}\nDoes the condition hold?",
            self.state.transcript_text()
        );
        let reply = self
            .backend
            .complete(&BackendRequest::new(Purpose::BooleanNld, system, user).tagged(tag))?;
        let value = parse_bool(&reply);
        let outcome = match value {
            Some(b) => b.to_string(),
            None => format!("false (unreadable reply {:?})", reply.trim()),
        };
        self.note(format!("nld:{tag}"), text, outcome);
        Ok(value.unwrap_or(false))
    }

    fn walk(&mut self, d: &DecisionNode, visited: &mut HashSet<String>) -> Result<Option<String>, TurnErrorKind> {
        if !visited.insert(d.node.clone()) {
            self.note(format!("walk:{}", d.node), "revisit", "stop");
            return Ok(None);
        }
        let guard_hit = {
            let snapshot = self.state.clone();
            let lookup = |v: &str| snapshot.get(v);
            let node = d.node.clone();
            let mut nld = |text: &str| self.nld(text, &node);
            d.guard.evaluate(&lookup, &mut nld)?
        };
        self.note(format!("guard:{}", d.node), d.guard.to_string(), guard_hit.to_string());
        if guard_hit {
            match &d.action {
                NodeAction::ExternalAction { function, .. } => {
                    let result = self.rt.run_external_action(&d.action, &mut self.state)?;
                    self.note(format!("action:{}", d.node), function, display_value(&result));
                }
                _ => return Ok(Some(d.node.clone())),
            }
        }

        let mut chosen = None;
        for b in &d.branches {
            let Some(condition) = &b.condition else { continue };
            let tag = format!("{}->{}", d.node, b.target.node_id());
            if self.nld(condition, &tag)? {
                chosen = Some(b);
                break;
            }
        }
        if chosen.is_none() {
            chosen = d.branches.iter().find(|b| b.condition.is_none());
            if let Some(b) = chosen {
                self.note(format!("branch:{}->{}", d.node, b.target.node_id()), "default", "taken");
            }
        }
        let Some(branch) = chosen else {
            return Ok(None);
        };
        match &branch.target {
            BranchTarget::Inline(child) => self.walk(child, visited),
            BranchTarget::Jump(id) => {
                let program = Arc::clone(&self.rt.program);
                match program.check(id) {
                    Some(target) => self.walk(target, visited),
                    None => Ok(None),
                }
            }
        }
    }

    /// Produces the utterance for a user-facing node and updates its helpers.
    fn perform(&mut self, node: &str) -> String {
        let program = Arc::clone(&self.rt.program);
        let Some(d) = program.check(node) else {
            return String::new();
        };
        match &d.action {
            NodeAction::Request { required, any_of, .. } => {
                let text = self.request_text(required, any_of);
                self.note(format!("respond:{node}"), "request", &text);
                text
            }
            NodeAction::Inform {
                template,
                confirm_question,
                inform_var,
                ..
            } => {
                let mut text = self.render(template);
                if let Some(q) = confirm_question {
                    text.push(' ');
                    text.push_str(q);
                }
                self.state.set(inform_var, Value::Bool(true));
                self.note(format!("helper:{inform_var}"), "set on execution", "true");
                text
            }
            NodeAction::ExternalAction { .. } => String::new(),
        }
    }

    fn request_text(&self, required: &[String], any_of: &[Vec<String>]) -> String {
        let missing = |s: &String| self.state.get(s).is_null();
        let mut items: Vec<String> = required
            .iter()
            .filter(|s| missing(s))
            .map(|s| format!("the {}", humanize(s)))
            .collect();
        for group in any_of {
            if group.iter().all(missing) {
                let names: Vec<String> = group.iter().map(|s| format!("the {}", humanize(s))).collect();
                items.push(format!("either {}", names.join(" or ")));
            }
        }
        if items.is_empty() {
            let all: Vec<String> = required
                .iter()
                .chain(any_of.iter().flatten())
                .map(|s| format!("the {}", humanize(s)))
                .collect();
            return format!("Could you please confirm {}?", join_and(&all));
        }
        format!("Could you please tell me {}?", join_and(&items))
    }

    /// Fills `[name]` placeholders from slots and external-action results.
    fn render(&mut self, template: &str) -> String {
        let mut out = String::new();
        let mut rest = template;
        while let Some(open) = rest.find('[') {
            let Some(len) = rest[open..].find(']') else { break };
            let name = &rest[open + 1..open + len];
            out.push_str(&rest[..open]);
            match self.placeholder(name) {
                Some(v) => out.push_str(&display_value(&v)),
                None => {
                    out.push_str(&rest[open..=open + len]);
                    self.note("template", format!("[{name}]"), "no value");
                }
            }
            rest = &rest[open + len + 1..];
        }
        out.push_str(rest);
        out
    }

    fn placeholder(&self, name: &str) -> Option<Value> {
        if self.rt.program.dst_entry(name).is_some() {
            return Some(self.state.get(name)).filter(|v| !v.is_null());
        }
        for d in self.rt.program.checks() {
            if let NodeAction::ExternalAction {
                returns: Some(r),
                result_var,
                ..
            } = &d.action
            {
                if r == name {
                    let v = self.state.get(result_var);
                    let v = match &v {
                        Value::Object(m) if m.contains_key(name) => m[name].clone(),
                        _ => v,
                    };
                    if !v.is_null() {
                        return Some(v);
                    }
                }
            }
        }
        Some(self.state.get(name)).filter(|v| !v.is_null())
    }
}
