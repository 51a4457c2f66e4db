//! Random flows and single-edit program mutations for property tests and
//! benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{Map, Value};

use crate::chief::{
    ChiefGraph, Edge, ExternalActionNode, FallbackAction, GlobalAction, InformNode, Node, NodeKind, RequestNode, Slot,
    ValueType,
};
use crate::compiler::{BranchTarget, DecisionNode, GuardrailProgram, NodeAction};

#[derive(Debug, Clone, Copy)]
pub struct GraphShape {
    pub max_nodes: usize,
    /// Extra edges beyond the spanning tree, as a fraction of the node count.
    pub extra_edges: f64,
    pub rules: bool,
}

impl Default for GraphShape {
    fn default() -> Self {
        GraphShape {
            max_nodes: 30,
            extra_edges: 0.5,
            rules: true,
        }
    }
}

const CONDITIONS: &[&str] = &[
    "user confirms",
    "user declines",
    "the city is in Europe",
    "the user mentions a budget",
    "the booking failed",
    "the user wants to change something",
];

fn slot(name: String, rng: &mut impl Rng) -> Slot {
    let mut s = Slot::new(name.clone(), ValueType::Text);
    s.examples = vec![Value::String(format!("{name}-a")), Value::String(format!("{name}-b"))];
    if rng.random_bool(0.2) {
        s.value_type = ValueType::Categorical;
    }
    s
}

/// A valid flow: every node is reachable from the first, each node has at
/// most one unconditioned outgoing edge, and extra edges may form cycles.
pub fn random_graph(rng: &mut impl Rng, shape: GraphShape) -> ChiefGraph {
    let n = rng.random_range(1..=shape.max_nodes.max(1));
    let mut g = ChiefGraph::empty();
    let mut slots: Vec<String> = Vec::new();
    let mut returns: Vec<String> = Vec::new();
    for i in 0..n {
        let id = format!("n{}", i + 1);
        let pick = if i == 0 { 0 } else { rng.random_range(0..3) };
        let kind = match pick {
            0 => {
                let count = rng.random_range(1..=3);
                let names: Vec<String> = (0..count).map(|k| format!("s{}_{}", i + 1, k + 1)).collect();
                let rule = (shape.rules && count >= 2 && rng.random_bool(0.4)).then(|| {
                    let form = if rng.random_bool(0.5) { "any-of" } else { "all-of" };
                    format!("{form} {{{}, {}}}", names[0], names[1])
                });
                slots.extend(names.iter().cloned());
                NodeKind::Request(RequestNode {
                    slots: names.into_iter().map(|s| slot(s, rng)).collect(),
                    rule,
                })
            }
            1 => {
                let parameters: Vec<String> = slots.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
                let ret = rng.random_bool(0.5).then(|| format!("ret_{}", i + 1));
                returns.extend(ret.iter().cloned());
                NodeKind::ExternalAction(ExternalActionNode {
                    function: format!("fn_{}", i + 1),
                    parameters,
                    returns: ret,
                })
            }
            _ => {
                let mut template = format!("Message {}", i + 1);
                if let Some(s) = slots.choose(rng) {
                    template.push_str(&format!(" about [{s}]"));
                }
                if let Some(r) = returns.choose(rng) {
                    template.push_str(&format!(" with [{r}]"));
                }
                NodeKind::Inform(InformNode {
                    template,
                    confirm_question: rng.random_bool(0.3).then(|| "Is that right?".to_string()),
                })
            }
        };
        g.nodes.push(Node {
            id,
            kind,
            extra: Map::new(),
        });
    }

    let mut has_default = vec![false; n];
    let mut add_edge = |g: &mut ChiefGraph, rng: &mut dyn rand::RngCore, s: usize, t: usize| {
        let mut e = Edge::new(g.nodes[s].id.clone(), g.nodes[t].id.clone());
        if has_default[s] || rng.random_bool(0.3) {
            e = e.with_condition(CONDITIONS[rng.random_range(0..CONDITIONS.len())]);
        } else {
            has_default[s] = true;
        }
        g.edges.push(e);
    };
    for t in 1..n {
        let s = rng.random_range(0..t);
        add_edge(&mut g, rng, s, t);
    }
    let extra = (n as f64 * shape.extra_edges).round() as usize;
    for _ in 0..extra {
        let (s, t) = (rng.random_range(0..n), rng.random_range(0..n));
        add_edge(&mut g, rng, s, t);
    }

    g.global_actions.push(GlobalAction {
        name: "hello".into(),
        response: "Hello!".into(),
        examples: vec!["hello".into(), "hi".into()],
        extra: Map::new(),
    });
    if rng.random_bool(0.5) {
        g.fallback_actions.push(FallbackAction {
            name: "goodbye".into(),
            response: "Goodbye!".into(),
            extra: Map::new(),
        });
    }
    g
}

/// A single edit to a compiled program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    DropCheck(String),
    DuplicateCheck(String),
    ChangeKind(String),
    DropInvalidation { slot: String, var: String },
    AddInvalidation { slot: String, var: String },
    DropDstEntry(String),
    DuplicateDstEntry(String),
}

fn collect_checks<'a>(d: &'a DecisionNode, out: &mut Vec<&'a DecisionNode>) {
    out.push(d);
    for b in &d.branches {
        if let BranchTarget::Inline(c) = &b.target {
            collect_checks(c, out);
        }
    }
}

/// Every mutation applicable to `program`.
pub fn mutations(program: &GuardrailProgram, graph: &ChiefGraph) -> Vec<Mutation> {
    let mut out = Vec::new();
    let mut checks = Vec::new();
    collect_checks(&program.nap_tree.root, &mut checks);
    checks.extend(program.nap_tree.detached.iter());
    let root = &program.nap_tree.root.node;
    for c in &checks {
        if &c.node != root {
            out.push(Mutation::DropCheck(c.node.clone()));
        }
        out.push(Mutation::DuplicateCheck(c.node.clone()));
        out.push(Mutation::ChangeKind(c.node.clone()));
    }
    let helpers: Vec<String> = graph.nodes.iter().flat_map(|n| n.helper_variables()).collect();
    for e in &program.dst_table {
        for v in &e.invalidates {
            out.push(Mutation::DropInvalidation {
                slot: e.slot.clone(),
                var: v.clone(),
            });
        }
        for v in helpers.iter().filter(|v| !e.invalidates.contains(*v)) {
            out.push(Mutation::AddInvalidation {
                slot: e.slot.clone(),
                var: v.clone(),
            });
        }
        out.push(Mutation::DropDstEntry(e.slot.clone()));
        out.push(Mutation::DuplicateDstEntry(e.slot.clone()));
    }
    out
}

fn drop_check(d: &mut DecisionNode, id: &str) -> bool {
    if let Some(i) = d.branches.iter().position(|b| matches!(&b.target, BranchTarget::Inline(c) if c.node == id)) {
        d.branches.remove(i);
        return true;
    }
    d.branches.iter_mut().any(|b| match &mut b.target {
        BranchTarget::Inline(c) => drop_check(c, id),
        BranchTarget::Jump(_) => false,
    })
}

fn find_mut<'a>(d: &'a mut DecisionNode, id: &str) -> Option<&'a mut DecisionNode> {
    if d.node == id {
        return Some(d);
    }
    d.branches.iter_mut().find_map(|b| match &mut b.target {
        BranchTarget::Inline(c) => find_mut(c, id),
        BranchTarget::Jump(_) => None,
    })
}

fn check_mut<'a>(program: &'a mut GuardrailProgram, id: &str) -> Option<&'a mut DecisionNode> {
    let GuardrailProgram { nap_tree, .. } = program;
    if let Some(d) = find_mut(&mut nap_tree.root, id) {
        return Some(d);
    }
    nap_tree.detached.iter_mut().find_map(|d| find_mut(d, id))
}

pub fn apply_mutation(program: &GuardrailProgram, m: &Mutation) -> GuardrailProgram {
    let mut p = program.clone();
    match m {
        Mutation::DropCheck(id) => {
            if !drop_check(&mut p.nap_tree.root, id) {
                p.nap_tree.detached.retain(|d| &d.node != id);
                for d in &mut p.nap_tree.detached {
                    drop_check(d, id);
                }
            }
        }
        Mutation::DuplicateCheck(id) => {
            if let Some(d) = p.check(id).cloned() {
                p.nap_tree.detached.push(d);
            }
        }
        Mutation::ChangeKind(id) => {
            if let Some(d) = check_mut(&mut p, id) {
                d.action = match &d.action {
                    NodeAction::Inform { .. } => NodeAction::ExternalAction {
                        function: "unrelated".into(),
                        parameters: Vec::new(),
                        returns: None,
                        result_var: format!("action_{id}"),
                    },
                    _ => NodeAction::Inform {
                        template: "unrelated".into(),
                        confirm_question: None,
                        inform_var: format!("inform_{id}"),
                        answered_var: None,
                    },
                };
            }
        }
        Mutation::DropInvalidation { slot, var } => {
            if let Some(e) = p.dst_table.iter_mut().find(|e| &e.slot == slot) {
                e.invalidates.remove(var);
            }
        }
        Mutation::AddInvalidation { slot, var } => {
            if let Some(e) = p.dst_table.iter_mut().find(|e| &e.slot == slot) {
                e.invalidates.insert(var.clone());
            }
        }
        Mutation::DropDstEntry(slot) => p.dst_table.retain(|e| &e.slot != slot),
        Mutation::DuplicateDstEntry(slot) => {
            if let Some(e) = p.dst_table.iter().find(|e| &e.slot == slot).cloned() {
                p.dst_table.push(e);
            }
        }
    }
    p
}

pub fn random_mutation(
    rng: &mut impl Rng,
    program: &GuardrailProgram,
    graph: &ChiefGraph,
) -> Option<(Mutation, GuardrailProgram)> {
    let all = mutations(program, graph);
    let m = all.choose(rng)?.clone();
    let p = apply_mutation(program, &m);
    Some((m, p))
}
