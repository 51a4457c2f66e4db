//! Refinement-instruction checks over compiled (or hand-edited) programs.
//!
//! - RI1: every flow node has exactly one check, whose guard, action and
//!   branches match the node.
//! - RI2: every slot has one DST entry that invalidates exactly the helpers of
//!   the nodes reachable from its request node.
//! - RI3: request-node guards encode the node's rule.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::ir::*;
use super::lower::{invalidation_set, node_action, node_guard, ordered_edges};
use super::rule::{parse_rule, request_guard, RuleForm};
use crate::chief::{Adjacency, ChiefGraph, NodeKind};
use crate::diagnostic::Diagnostic;

/// Largest request node whose guard is checked by exhaustive enumeration.
const MAX_TRUTH_TABLE_SLOTS: usize = 16;

pub fn lint_ri1(program: &GuardrailProgram, graph: &ChiefGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let checks = program.checks();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &checks {
        *counts.entry(d.node.as_str()).or_default() += 1;
    }

    for node in &graph.nodes {
        let path = format!("nap_tree[{}]", node.id);
        match counts.get(node.id.as_str()).copied().unwrap_or(0) {
            0 => out.push(
                Diagnostic::error("ri1-missing", path, format!("node {} has no NAP check", node.id)).about(&node.id),
            ),
            1 => {}
            n => out.push(
                Diagnostic::error("ri1-duplicate", path, format!("node {} checked {n} times", node.id))
                    .about(&node.id),
            ),
        }
    }

    let mut reported = BTreeSet::new();
    for d in &checks {
        if graph.node(&d.node).is_none() && reported.insert(d.node.as_str()) {
            out.push(
                Diagnostic::error(
                    "ri1-spurious",
                    format!("nap_tree[{}]", d.node),
                    format!("check for unknown node {}", d.node),
                )
                .about(&d.node),
            );
        }
    }

    let mut seen = BTreeSet::new();
    for d in &checks {
        let Some(node) = graph.node(&d.node) else { continue };
        if !seen.insert(d.node.as_str()) {
            continue;
        }
        let path = format!("nap_tree[{}]", d.node);
        if d.action.kind_name() != node.kind.name() {
            out.push(
                Diagnostic::error(
                    "ri1-kind",
                    &path,
                    format!(
                        "check for {} performs a {} action but the node is {}",
                        d.node,
                        d.action.kind_name(),
                        node.kind.name()
                    ),
                )
                .about(&d.node),
            );
        } else if !action_matches(&d.action, &node_action(node)) {
            out.push(
                Diagnostic::error("ri1-body", &path, format!("action body for {} does not match the node", d.node))
                    .about(&d.node),
            );
        }
        if !matches!(node.kind, NodeKind::Request(_)) && d.guard != node_guard(node) {
            out.push(
                Diagnostic::error(
                    "ri1-guard",
                    &path,
                    format!("guard for {} should be `{}`, found `{}`", d.node, node_guard(node), d.guard),
                )
                .about(&d.node),
            );
        }
        let expected: Vec<(Option<&str>, &str)> = ordered_edges(graph, &node.id)
            .into_iter()
            .map(|e| (e.condition.as_deref().filter(|c| !c.trim().is_empty()), e.target.as_str()))
            .collect();
        let actual: Vec<(Option<&str>, &str)> = d
            .branches
            .iter()
            .map(|b| (b.condition.as_deref(), b.target.node_id()))
            .collect();
        if expected != actual {
            out.push(
                Diagnostic::error(
                    "ri1-branches",
                    &path,
                    format!("branches of {} do not match its outgoing edges", d.node),
                )
                .about(&d.node),
            );
        }
        for b in &d.branches {
            if let BranchTarget::Jump(id) = &b.target {
                if !counts.contains_key(id.as_str()) {
                    out.push(
                        Diagnostic::error("ri1-dangling-jump", &path, format!("jump to {id} which has no check"))
                            .about(id),
                    );
                }
            }
        }
    }
    out
}

fn action_matches(found: &NodeAction, expected: &NodeAction) -> bool {
    match (found, expected) {
        (
            NodeAction::Request { required, any_of, .. },
            NodeAction::Request {
                required: r2, any_of: a2, ..
            },
        ) => {
            let slots = |req: &[String], groups: &[Vec<String>]| -> BTreeSet<String> {
                req.iter().chain(groups.iter().flatten()).cloned().collect()
            };
            slots(required, any_of) == slots(r2, a2)
        }
        _ => found == expected,
    }
}

pub fn lint_ri2(program: &GuardrailProgram, graph: &ChiefGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let adjacency = Adjacency::new(graph);
    for (node, slot) in graph.slots() {
        let entries: Vec<(usize, &DstEntry)> = program
            .dst_table
            .iter()
            .enumerate()
            .filter(|(_, e)| e.slot == slot.name)
            .collect();
        let Some(&(i, entry)) = entries.first() else {
            out.push(
                Diagnostic::error(
                    "ri2-missing-entry",
                    "dst_table",
                    format!("slot {} has no DST entry", slot.name),
                )
                .about(node),
            );
            continue;
        };
        let path = format!("dst_table[{i}].invalidates");
        if entries.len() > 1 {
            out.push(
                Diagnostic::error(
                    "ri2-duplicate-entry",
                    format!("dst_table[{i}]"),
                    format!("slot {} has {} DST entries", slot.name, entries.len()),
                )
                .about(node),
            );
        }
        let expected = invalidation_set(graph, &adjacency, node);
        for missing in expected.difference(&entry.invalidates) {
            out.push(
                Diagnostic::error(
                    "ri2-missing-invalidation",
                    &path,
                    format!("DST entry for {} does not invalidate {missing}", slot.name),
                )
                .about(node),
            );
        }
        for extra in entry.invalidates.difference(&expected) {
            out.push(
                Diagnostic::error(
                    "ri2-extra-invalidation",
                    &path,
                    format!("DST entry for {} invalidates unrelated {extra}", slot.name),
                )
                .about(node),
            );
        }
    }
    for (i, entry) in program.dst_table.iter().enumerate() {
        if graph.slot(&entry.slot).is_none() {
            out.push(
                Diagnostic::error(
                    "ri2-unknown-slot",
                    format!("dst_table[{i}]"),
                    format!("DST entry for unknown slot {}", entry.slot),
                )
                .about(&entry.slot),
            );
        }
    }
    out
}

pub fn lint_ri3(program: &GuardrailProgram, graph: &ChiefGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for node in &graph.nodes {
        let NodeKind::Request(request) = &node.kind else { continue };
        let Some(check) = program.check(&node.id) else { continue };
        if !matches!(check.action, NodeAction::Request { .. }) {
            continue;
        }
        let path = format!("nap_tree[{}].guard", node.id);
        let slots: Vec<String> = request.slots.iter().map(|s| s.name.clone()).collect();
        if let Some(rule) = &request.rule {
            if let RuleForm::FreeForm(_) = parse_rule(rule, &slots) {
                out.push(
                    Diagnostic::warning(
                        "ri3-review",
                        &path,
                        format!("rule requires human review: \"{rule}\""),
                    )
                    .about(&node.id),
                );
                continue;
            }
        }
        if check.guard.contains_nld() {
            out.push(
                Diagnostic::error(
                    "ri3-nld",
                    &path,
                    format!("guard for {} defers a machine-checkable rule to the language model", node.id),
                )
                .about(&node.id),
            );
            continue;
        }
        let mut vars = BTreeSet::new();
        check.guard.variables(&mut vars);
        let foreign: Vec<&String> = vars.iter().filter(|v| !slots.contains(v)).collect();
        if !foreign.is_empty() {
            out.push(
                Diagnostic::error(
                    "ri3-foreign",
                    &path,
                    format!("guard for {} reads variables outside the node: {foreign:?}", node.id),
                )
                .about(&node.id),
            );
            continue;
        }
        if slots.len() > MAX_TRUTH_TABLE_SLOTS {
            out.push(
                Diagnostic::warning("ri3-too-large", &path, format!("node {} has too many slots to check", node.id))
                    .about(&node.id),
            );
            continue;
        }
        let expected = request_guard(&slots, request.rule.as_deref());
        if !equivalent(&check.guard, &expected, &slots) {
            let message = match &request.rule {
                Some(rule) => format!("guard for {} does not reflect its rule \"{rule}\"", node.id),
                None => format!("guard for {} does not require all of its slots", node.id),
            };
            out.push(Diagnostic::error("ri3-guard", &path, message).about(&node.id));
        }
    }
    out
}

/// Truth-table comparison over every filled/empty combination of `slots`.
fn equivalent(a: &Predicate, b: &Predicate, slots: &[String]) -> bool {
    (0u32..(1 << slots.len())).all(|mask| {
        let lookup = |var: &str| -> Value {
            match slots.iter().position(|s| s == var) {
                Some(i) if mask & (1 << i) != 0 => Value::String("filled".into()),
                _ => Value::Null,
            }
        };
        let mut no_nld = |_: &str| -> Result<bool, ()> { Err(()) };
        a.evaluate(&lookup, &mut no_nld) == b.evaluate(&lookup, &mut no_nld)
    })
}

/// All three passes, in order.
pub fn lint_all(program: &GuardrailProgram, graph: &ChiefGraph) -> Vec<Diagnostic> {
    let mut out = lint_ri1(program, graph);
    out.extend(lint_ri2(program, graph));
    out.extend(lint_ri3(program, graph));
    out
}
