use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ir::*;
use super::rule;
use super::CompileError;
use crate::chief::*;
use crate::diagnostic::has_errors;

pub const STANDARD_FALLBACKS: &[(&str, &str)] = &[
    ("goodbye", "Goodbye, have a nice day!"),
    ("out_of_scope", "Sorry, I can't help with that."),
    ("anything_else", "Is there anything else I can help you with?"),
];

/// Lowers a validated flow into a guardrail program. Deterministic: the same
/// graph always yields byte-identical canonical JSON.
pub fn compile(graph: &ChiefGraph) -> Result<GuardrailProgram, CompileError> {
    let diagnostics = validate_chief(graph);
    if has_errors(&diagnostics) {
        return Err(CompileError::ValidationFailed(diagnostics));
    }
    let adjacency = Adjacency::new(graph);
    Ok(GuardrailProgram {
        init_block: init_block(graph),
        dst_table: dst_table(graph, &adjacency),
        intent_table: graph
            .global_actions
            .iter()
            .map(|g| IntentEntry {
                name: g.name.clone(),
                examples: g.examples.clone(),
                response: g.response.clone(),
            })
            .collect(),
        nap_tree: nap_tree(graph),
        helper_rules: helper_rules(graph),
        fallback_policy: fallback_policy(graph),
        source_graph_hash: graph_hash(graph),
    })
}

pub fn graph_hash(graph: &ChiefGraph) -> String {
    hex::encode(Sha256::digest(canonical_chief(graph).as_bytes()))
}

pub(crate) fn init_block(graph: &ChiefGraph) -> Vec<VarInit> {
    let mut vars: Vec<VarInit> = graph
        .slots()
        .map(|(_, s)| VarInit {
            var: s.name.clone(),
            kind: VarKind::Slot,
            initial: Value::Null,
        })
        .collect();
    for node in &graph.nodes {
        for var in node.helper_variables() {
            let kind = VarKind::of_helper(&var).expect("helper names carry a known prefix");
            vars.push(VarInit {
                var,
                kind,
                initial: kind.reset_value(),
            });
        }
    }
    vars
}

/// Helpers of every node reachable from `node`.
pub(crate) fn invalidation_set(graph: &ChiefGraph, adjacency: &Adjacency, node: &str) -> BTreeSet<String> {
    adjacency
        .reachable(node)
        .unwrap_or_default()
        .iter()
        .filter_map(|id| graph.node(id))
        .flat_map(Node::helper_variables)
        .collect()
}

pub(crate) fn dst_table(graph: &ChiefGraph, adjacency: &Adjacency) -> Vec<DstEntry> {
    let mut cache: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    graph
        .slots()
        .map(|(node, slot)| {
            let invalidates = cache
                .entry(node)
                .or_insert_with(|| invalidation_set(graph, adjacency, node))
                .clone();
            DstEntry {
                slot: slot.name.clone(),
                node: node.to_string(),
                instruction: dst_instruction(slot),
                invalidates,
                value_type: slot.value_type,
            }
        })
        .collect()
}

fn example_text(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

fn placeholder_example(t: ValueType) -> &'static str {
    match t {
        ValueType::Number => "2",
        ValueType::Boolean => "True",
        ValueType::Datetime => "\"12:00\"",
        ValueType::Text | ValueType::Categorical => "\"...\"",
    }
}

pub fn dst_instruction(slot: &Slot) -> String {
    let mut s = format!(
        "Extract the value of the slot `{}` ({}",
        slot.name,
        slot.value_type.as_str()
    );
    if let Some(d) = &slot.description {
        s.push_str(&format!(": {d}"));
    }
    s.push_str(") from the conversation so far. ");
    let examples: Vec<String> = slot.examples.iter().map(example_text).collect();
    if examples.is_empty() {
        s.push_str(&format!("Example value: {}. ", placeholder_example(slot.value_type)));
    } else if slot.value_type == ValueType::Categorical {
        s.push_str(&format!("Allowed values: {}. ", examples.join(", ")));
    } else {
        s.push_str(&format!("Example values: {}. ", examples.join(", ")));
    }
    if let Some(r) = &slot.rule {
        s.push_str(&format!("Rule: {r}. "));
    }
    s.push_str("If the user has not provided it, return None. Return only the value.");
    s
}

/// Instruction used to classify the reply to a confirm question.
pub fn confirm_instruction(question: &str) -> String {
    format!(
        "The assistant asked: \"{question}\". Classify the user's latest reply to that question as yes, no or other. Return only that word."
    )
}

pub(crate) fn node_action(node: &Node) -> NodeAction {
    match &node.kind {
        NodeKind::Request(r) => {
            let names: Vec<String> = r.slots.iter().map(|s| s.name.clone()).collect();
            let (required, any_of) = rule::request_shape(&names, r.rule.as_deref());
            NodeAction::Request {
                required,
                any_of,
                rule: r.rule.clone(),
            }
        }
        NodeKind::ExternalAction(a) => NodeAction::ExternalAction {
            function: a.function.clone(),
            parameters: a.parameters.clone(),
            returns: a.returns.clone(),
            result_var: format!("action_{}", node.id),
        },
        NodeKind::Inform(i) => NodeAction::Inform {
            template: i.template.clone(),
            confirm_question: i.confirm_question.clone(),
            inform_var: format!("inform_{}", node.id),
            answered_var: i.confirm_question.as_ref().map(|_| format!("answered_{}", node.id)),
        },
    }
}

pub(crate) fn node_guard(node: &Node) -> Predicate {
    match &node.kind {
        NodeKind::Request(r) => {
            let names: Vec<String> = r.slots.iter().map(|s| s.name.clone()).collect();
            rule::request_guard(&names, r.rule.as_deref())
        }
        NodeKind::ExternalAction(_) => Predicate::is_null(format!("action_{}", node.id)),
        NodeKind::Inform(i) => {
            let inform = Predicate::is_not_true(format!("inform_{}", node.id));
            if i.confirm_question.is_some() {
                Predicate::Any {
                    of: vec![
                        inform,
                        Predicate::NotIn {
                            var: format!("answered_{}", node.id),
                            values: vec!["yes".into(), "no".into()],
                        },
                    ],
                }
            } else {
                inform
            }
        }
    }
}

/// Branch list for a node: conditioned edges in document order, then the
/// default edge.
pub(crate) fn ordered_edges<'g>(graph: &'g ChiefGraph, id: &'g str) -> Vec<&'g Edge> {
    let (mut conditioned, default): (Vec<&Edge>, Vec<&Edge>) = graph
        .outgoing(id)
        .partition(|e| e.condition.as_deref().is_some_and(|c| !c.trim().is_empty()));
    conditioned.extend(default);
    conditioned
}

fn build(graph: &ChiefGraph, node: &Node, placed: &mut HashSet<String>) -> DecisionNode {
    let mut branches = Vec::new();
    for edge in ordered_edges(graph, &node.id) {
        let condition = edge.condition.clone().filter(|c| !c.trim().is_empty());
        let target = if placed.insert(edge.target.clone()) {
            let child = graph.node(&edge.target).expect("validated edge target");
            BranchTarget::Inline(Box::new(build(graph, child, placed)))
        } else {
            BranchTarget::Jump(edge.target.clone())
        };
        branches.push(Branch { condition, target });
    }
    DecisionNode {
        node: node.id.clone(),
        guard: node_guard(node),
        action: node_action(node),
        branches,
    }
}

pub(crate) fn nap_tree(graph: &ChiefGraph) -> NapTree {
    let start = graph.start().expect("validated graph has a start node");
    let mut placed = HashSet::from([start.to_string()]);
    let root = build(graph, graph.node(start).expect("validated start"), &mut placed);
    let mut detached = Vec::new();
    for node in &graph.nodes {
        if placed.insert(node.id.clone()) {
            detached.push(build(graph, node, &mut placed));
        }
    }
    NapTree { root, detached }
}

pub(crate) fn helper_rules(graph: &ChiefGraph) -> BTreeMap<String, HelperRule> {
    graph
        .nodes
        .iter()
        .filter_map(|node| {
            let variables: Vec<HelperVar> = node
                .helper_variables()
                .into_iter()
                .map(|name| {
                    let kind = VarKind::of_helper(&name).expect("known prefix");
                    let update = match kind {
                        VarKind::Action => HelperUpdate::InvokeWhenNull,
                        VarKind::Answered => HelperUpdate::ExtractFromReply,
                        _ => HelperUpdate::SetTrueOnExecute,
                    };
                    HelperVar { name, kind, update }
                })
                .collect();
            (!variables.is_empty()).then(|| {
                (
                    node.id.clone(),
                    HelperRule {
                        node: node.id.clone(),
                        variables,
                    },
                )
            })
        })
        .collect()
}

fn fallback_policy(graph: &ChiefGraph) -> FallbackPolicy {
    let mut actions: Vec<FallbackEntry> = graph
        .fallback_actions
        .iter()
        .map(|a| FallbackEntry {
            name: a.name.clone(),
            response: a.response.clone(),
        })
        .collect();
    for (name, response) in STANDARD_FALLBACKS {
        if !actions.iter().any(|a| a.name == *name) {
            actions.push(FallbackEntry {
                name: name.to_string(),
                response: response.to_string(),
            });
        }
    }
    FallbackPolicy {
        actions,
        node_inventory: graph
            .nodes
            .iter()
            .filter(|n| !matches!(n.kind, NodeKind::ExternalAction(_)))
            .map(|n| n.id.clone())
            .collect(),
        default_action: "out_of_scope".into(),
    }
}
