use std::collections::HashSet;

use super::ir::*;
use super::lower::{dst_table, helper_rules, init_block, nap_tree};
use crate::chief::{Adjacency, ChiefGraph};
use crate::diagnostic::Diagnostic;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RepairError {
    #[error("diagnostic `{code}` refers to node {node}, which is not in the flow")]
    IrreparableProgram { code: String, node: String },
}

/// Applies mechanical fixes for RI1 and RI2 findings. Request-node guards
/// and DST instructions written by hand are kept; RI3 findings are left for
/// review.
pub fn repair(
    program: &GuardrailProgram,
    graph: &ChiefGraph,
    diagnostics: &[Diagnostic],
) -> Result<GuardrailProgram, RepairError> {
    for d in diagnostics {
        let names_graph_node = d.code.starts_with("ri1-") && d.code != "ri1-spurious" && d.code != "ri1-dangling-jump"
            || matches!(
                d.code.as_str(),
                "ri2-missing-entry" | "ri2-duplicate-entry" | "ri2-missing-invalidation" | "ri2-extra-invalidation"
            );
        if let (true, Some(node)) = (names_graph_node, &d.subject) {
            if graph.node(node).is_none() {
                return Err(RepairError::IrreparableProgram {
                    code: d.code.clone(),
                    node: node.clone(),
                });
            }
        }
    }
    let fix_tree = diagnostics.iter().any(|d| d.code.starts_with("ri1-"));
    let fix_dst = diagnostics.iter().any(|d| d.code.starts_with("ri2-"));

    let mut out = program.clone();
    if fix_tree {
        let mut tree = nap_tree(graph);
        let mut restored = HashSet::new();
        for_each_check(&mut tree, &mut |d: &mut DecisionNode| {
            if !matches!(d.action, NodeAction::Request { .. }) || !restored.insert(d.node.clone()) {
                return;
            }
            if let Some(old) = program.check(&d.node) {
                if matches!(old.action, NodeAction::Request { .. }) {
                    d.guard = old.guard.clone();
                }
            }
        });
        out.nap_tree = tree;
        out.init_block = init_block(graph);
        out.helper_rules = helper_rules(graph);
    }
    if fix_dst {
        let adjacency = Adjacency::new(graph);
        out.dst_table = dst_table(graph, &adjacency)
            .into_iter()
            .map(|mut entry| {
                if let Some(old) = program.dst_entry(&entry.slot) {
                    entry.instruction = old.instruction.clone();
                }
                entry
            })
            .collect();
    }
    Ok(out)
}

fn for_each_check(tree: &mut NapTree, f: &mut dyn FnMut(&mut DecisionNode)) {
    fn walk(d: &mut DecisionNode, f: &mut dyn FnMut(&mut DecisionNode)) {
        f(d);
        for b in &mut d.branches {
            if let BranchTarget::Inline(c) = &mut b.target {
                walk(c, f);
            }
        }
    }
    walk(&mut tree.root, f);
    for d in &mut tree.detached {
        walk(d, f);
    }
}
