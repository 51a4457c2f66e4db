use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chief::ValueType;

/// Compiled guardrail program. Serializes to canonical JSON (`.ir.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailProgram {
    pub init_block: Vec<VarInit>,
    pub dst_table: Vec<DstEntry>,
    pub intent_table: Vec<IntentEntry>,
    pub nap_tree: NapTree,
    pub helper_rules: BTreeMap<String, HelperRule>,
    pub fallback_policy: FallbackPolicy,
    /// SHA-256 of the canonical flow document, hex encoded.
    pub source_graph_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Slot,
    Action,
    Inform,
    Answered,
}

impl VarKind {
    /// Value a variable of this kind holds before its node runs, and after
    /// it is invalidated.
    pub fn reset_value(self) -> Value {
        match self {
            VarKind::Slot | VarKind::Action => Value::Null,
            VarKind::Inform | VarKind::Answered => Value::Bool(false),
        }
    }

    pub fn of_helper(name: &str) -> Option<VarKind> {
        if name.starts_with("action_") {
            Some(VarKind::Action)
        } else if name.starts_with("inform_") {
            Some(VarKind::Inform)
        } else if name.starts_with("answered_") {
            Some(VarKind::Answered)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarInit {
    pub var: String,
    pub kind: VarKind,
    pub initial: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DstEntry {
    pub slot: String,
    /// Request node declaring the slot.
    pub node: String,
    pub instruction: String,
    /// Helper variables reset when this slot's value changes.
    pub invalidates: BTreeSet<String>,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEntry {
    pub name: String,
    pub examples: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NapTree {
    pub root: DecisionNode,
    /// Checks for nodes the start node cannot reach. Never visited by the
    /// walk, kept so every node has exactly one check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detached: Vec<DecisionNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub node: String,
    /// True when the conversation is "at" this node and its action should run.
    pub guard: Predicate,
    pub action: NodeAction,
    /// Conditioned branches in document order, then the default branch.
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub target: BranchTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTarget {
    Inline(Box<DecisionNode>),
    /// Reference to a node whose check is placed elsewhere in the tree
    /// (merge points and cycles).
    Jump(String),
}

impl BranchTarget {
    pub fn node_id(&self) -> &str {
        match self {
            BranchTarget::Inline(d) => &d.node,
            BranchTarget::Jump(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeAction {
    Request {
        /// Slots that must all be filled.
        required: Vec<String>,
        /// Groups where one filled slot suffices.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        any_of: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rule: Option<String>,
    },
    ExternalAction {
        function: String,
        parameters: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        returns: Option<String>,
        result_var: String,
    },
    Inform {
        template: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confirm_question: Option<String>,
        inform_var: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answered_var: Option<String>,
    },
}

impl NodeAction {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NodeAction::Request { .. } => "request",
            NodeAction::ExternalAction { .. } => "external_action",
            NodeAction::Inform { .. } => "inform",
        }
    }
}

/// Boolean condition over conversation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    IsNull { var: String },
    /// Holds unless the variable is exactly `true`.
    IsNotTrue { var: String },
    /// Holds unless the variable is a string equal to one of `values`.
    NotIn { var: String, values: Vec<String> },
    All { of: Vec<Predicate> },
    Any { of: Vec<Predicate> },
    Not { pred: Box<Predicate> },
    /// Natural-language condition decided by the language model at runtime.
    Nld { text: String },
}

impl Predicate {
    pub fn is_null(var: impl Into<String>) -> Self {
        Predicate::IsNull { var: var.into() }
    }

    pub fn is_not_true(var: impl Into<String>) -> Self {
        Predicate::IsNotTrue { var: var.into() }
    }

    /// Evaluates against `lookup`, calling `nld` only for natural-language
    /// leaves that are actually reached (left-to-right short circuit).
    pub fn evaluate<E>(
        &self,
        lookup: &dyn Fn(&str) -> Value,
        nld: &mut dyn FnMut(&str) -> Result<bool, E>,
    ) -> Result<bool, E> {
        Ok(match self {
            Predicate::IsNull { var } => lookup(var).is_null(),
            Predicate::IsNotTrue { var } => lookup(var) != Value::Bool(true),
            Predicate::NotIn { var, values } => match lookup(var) {
                Value::String(s) => !values.iter().any(|v| *v == s),
                _ => true,
            },
            Predicate::All { of } => {
                for p in of {
                    if !p.evaluate(lookup, nld)? {
                        return Ok(false);
                    }
                }
                true
            }
            Predicate::Any { of } => {
                for p in of {
                    if p.evaluate(lookup, nld)? {
                        return Ok(true);
                    }
                }
                false
            }
            Predicate::Not { pred } => !pred.evaluate(lookup, nld)?,
            Predicate::Nld { text } => nld(text)?,
        })
    }

    pub fn contains_nld(&self) -> bool {
        match self {
            Predicate::Nld { .. } => true,
            Predicate::All { of } | Predicate::Any { of } => of.iter().any(Predicate::contains_nld),
            Predicate::Not { pred } => pred.contains_nld(),
            _ => false,
        }
    }

    pub fn variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Predicate::IsNull { var } | Predicate::IsNotTrue { var } | Predicate::NotIn { var, .. } => {
                out.insert(var.clone());
            }
            Predicate::All { of } | Predicate::Any { of } => of.iter().for_each(|p| p.variables(out)),
            Predicate::Not { pred } => pred.variables(out),
            Predicate::Nld { .. } => {}
        }
    }
}

/// Colang-flavoured expression text, used in traces and emitted programs.
impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, of: &[Predicate], op: &str, empty: &str) -> fmt::Result {
            if of.is_empty() {
                return f.write_str(empty);
            }
            if of.len() == 1 {
                return write!(f, "{}", of[0]);
            }
            for (i, p) in of.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                match p {
                    Predicate::All { of } | Predicate::Any { of } if of.len() > 1 => write!(f, "({p})")?,
                    _ => write!(f, "{p}")?,
                }
            }
            Ok(())
        }
        match self {
            Predicate::IsNull { var } => write!(f, "${var} == None"),
            Predicate::IsNotTrue { var } => write!(f, "${var} != True"),
            Predicate::NotIn { var, values } => {
                let quoted: Vec<String> = values.iter().map(|v| format!("\"{v}\"")).collect();
                write!(f, "${var} not in [{}]", quoted.join(", "))
            }
            Predicate::All { of } => join(f, of, "and", "True"),
            Predicate::Any { of } => join(f, of, "or", "False"),
            Predicate::Not { pred } => write!(f, "not ({pred})"),
            Predicate::Nld { text } => write!(f, "...\"{}\"", text.replace('"', "'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelperUpdate {
    /// `inform_<id>`: set true when the node's action runs.
    SetTrueOnExecute,
    /// `action_<id>`: holds the function result, invoked while null.
    InvokeWhenNull,
    /// `answered_<id>`: classified from the user's reply to the confirm question.
    ExtractFromReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperVar {
    pub name: String,
    pub kind: VarKind,
    pub update: HelperUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperRule {
    pub node: String,
    pub variables: Vec<HelperVar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEntry {
    pub name: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackPolicy {
    pub actions: Vec<FallbackEntry>,
    /// User-facing node actions the language model may choose from.
    pub node_inventory: Vec<String>,
    /// Used when the model names an action outside the inventory.
    pub default_action: String,
}

impl GuardrailProgram {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("program serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Every decision node in the tree (root first, depth-first, then detached).
    pub fn checks(&self) -> Vec<&DecisionNode> {
        fn walk<'a>(d: &'a DecisionNode, out: &mut Vec<&'a DecisionNode>) {
            out.push(d);
            for b in &d.branches {
                if let BranchTarget::Inline(child) = &b.target {
                    walk(child, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nap_tree.root, &mut out);
        for d in &self.nap_tree.detached {
            walk(d, &mut out);
        }
        out
    }

    pub fn check(&self, node: &str) -> Option<&DecisionNode> {
        self.checks().into_iter().find(|d| d.node == node)
    }

    pub fn var_kind(&self, var: &str) -> Option<VarKind> {
        self.init_block.iter().find(|v| v.var == var).map(|v| v.kind)
    }

    pub fn dst_entry(&self, slot: &str) -> Option<&DstEntry> {
        self.dst_table.iter().find(|e| e.slot == slot)
    }
}
