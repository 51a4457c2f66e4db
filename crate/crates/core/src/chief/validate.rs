use std::collections::{HashMap, HashSet};

use super::graph::Adjacency;
use super::model::*;
use crate::diagnostic::Diagnostic;

/// Structural checks over a parsed flow. Errors block compilation; warnings
/// (unreachable nodes) do not. The output order is deterministic.
pub fn validate_chief(graph: &ChiefGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();

    for (i, node) in graph.nodes.iter().enumerate() {
        let path = format!("nodes[{i}]");
        if node.id.trim().is_empty() {
            out.push(Diagnostic::error("empty-id", format!("{path}.id"), "node id is empty"));
        } else if let Some(first) = ids.insert(node.id.as_str(), i) {
            ids.insert(node.id.as_str(), first);
            out.push(
                Diagnostic::error(
                    "duplicate-id",
                    format!("{path}.id"),
                    format!("duplicate node id {} (first defined at nodes[{first}])", node.id),
                )
                .about(&node.id),
            );
        }
        check_node(node, &path, &mut out);
    }

    match (&graph.start_node, graph.start()) {
        (_, None) => out.push(Diagnostic::error("missing-start", "start_node", "missing start node")),
        (Some(s), _) if !ids.contains_key(s.as_str()) => out.push(
            Diagnostic::error("unknown-start", "start_node", format!("unknown start node {s}")).about(s),
        ),
        _ => {}
    }

    let mut slot_owner: HashMap<&str, &str> = HashMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if let NodeKind::Request(r) = &node.kind {
            for (j, slot) in r.slots.iter().enumerate() {
                match slot_owner.get(slot.name.as_str()) {
                    Some(owner) if *owner != node.id => out.push(
                        Diagnostic::error(
                            "shared-slot",
                            format!("nodes[{i}].slots[{j}].name"),
                            format!("slot {} is already defined by node {owner}", slot.name),
                        )
                        .about(&slot.name),
                    ),
                    _ => {
                        slot_owner.insert(&slot.name, &node.id);
                    }
                }
            }
        }
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        if let NodeKind::ExternalAction(a) = &node.kind {
            for (j, p) in a.parameters.iter().enumerate() {
                if !slot_owner.contains_key(p.as_str()) {
                    out.push(
                        Diagnostic::error(
                            "unknown-parameter",
                            format!("nodes[{i}].parameters[{j}]"),
                            format!("parameter {p} is not a slot of this flow"),
                        )
                        .about(&node.id),
                    );
                }
            }
        }
    }

    let mut defaults: HashSet<&str> = HashSet::new();
    for (i, edge) in graph.edges.iter().enumerate() {
        let path = format!("edges[{i}]");
        if !ids.contains_key(edge.source.as_str()) {
            out.push(
                Diagnostic::error(
                    "unknown-source",
                    format!("{path}.source"),
                    format!("unknown source {}", edge.source),
                )
                .about(&edge.source),
            );
        }
        if !ids.contains_key(edge.target.as_str()) {
            out.push(
                Diagnostic::error(
                    "unknown-target",
                    format!("{path}.target"),
                    format!("unknown target {}", edge.target),
                )
                .about(&edge.target),
            );
        }
        if edge.condition.as_deref().map_or(true, |c| c.trim().is_empty())
            && !defaults.insert(edge.source.as_str())
        {
            out.push(
                Diagnostic::error(
                    "multiple-defaults",
                    path,
                    format!("node {} has more than one unconditioned edge", edge.source),
                )
                .about(&edge.source),
            );
        }
    }

    let mut action_names: HashSet<&str> = HashSet::new();
    let actions = graph
        .global_actions
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("global_actions[{i}]"), a.name.as_str(), a.response.as_str()))
        .chain(
            graph
                .fallback_actions
                .iter()
                .enumerate()
                .map(|(i, a)| (format!("fallback_actions[{i}]"), a.name.as_str(), a.response.as_str())),
        );
    for (path, name, response) in actions {
        if name.trim().is_empty() {
            out.push(Diagnostic::error("empty-action-name", format!("{path}.name"), "action name is empty"));
        } else if !action_names.insert(name) {
            out.push(
                Diagnostic::error("duplicate-action", format!("{path}.name"), format!("duplicate action name {name}"))
                    .about(name),
            );
        } else if ids.contains_key(name) {
            out.push(
                Diagnostic::error(
                    "action-node-clash",
                    format!("{path}.name"),
                    format!("action name {name} collides with a node id"),
                )
                .about(name),
            );
        }
        if response.trim().is_empty() {
            out.push(Diagnostic::error("empty-response", format!("{path}.response"), "action response is empty"));
        }
    }

    if graph.start().is_some_and(|s| ids.contains_key(s)) {
        let reached = Adjacency::new(graph).reachable_from_start();
        for (i, node) in graph.nodes.iter().enumerate() {
            if !node.id.is_empty() && !reached.contains(&node.id) {
                out.push(
                    Diagnostic::warning("unreachable", format!("nodes[{i}]"), format!("unreachable node {}", node.id))
                        .about(&node.id),
                );
            }
        }
    }
    out
}

fn check_node(node: &Node, path: &str, out: &mut Vec<Diagnostic>) {
    match &node.kind {
        NodeKind::Request(r) => {
            if r.slots.is_empty() {
                out.push(
                    Diagnostic::error("no-slots", format!("{path}.slots"), format!("request node {} has no slots", node.id))
                        .about(&node.id),
                );
            }
            let mut names = HashSet::new();
            for (j, slot) in r.slots.iter().enumerate() {
                let spath = format!("{path}.slots[{j}]");
                if slot.name.trim().is_empty() {
                    out.push(Diagnostic::error("empty-slot-name", format!("{spath}.name"), "slot name is empty"));
                } else if !names.insert(slot.name.as_str()) {
                    out.push(
                        Diagnostic::error(
                            "duplicate-slot",
                            format!("{spath}.name"),
                            format!("duplicate slot {} in node {}", slot.name, node.id),
                        )
                        .about(&slot.name),
                    );
                }
                if slot.value_type == ValueType::Categorical && slot.examples.is_empty() {
                    out.push(
                        Diagnostic::error(
                            "categorical-without-examples",
                            format!("{spath}.examples"),
                            format!("categorical slot {} needs at least one example value", slot.name),
                        )
                        .about(&slot.name),
                    );
                }
            }
        }
        NodeKind::ExternalAction(a) => {
            if a.function.trim().is_empty() {
                out.push(
                    Diagnostic::error("empty-function", format!("{path}.function"), "function name is empty")
                        .about(&node.id),
                );
            }
        }
        NodeKind::Inform(i) => {
            if i.template.trim().is_empty() {
                out.push(
                    Diagnostic::error("empty-template", format!("{path}.template"), "inform template is empty")
                        .about(&node.id),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chief::parse_chief;

    fn base() -> String {
        r#"{"nodes":[
            {"id":"n1","type":"request","slots":[{"name":"city","type":"text","examples":["Paris"]}]},
            {"id":"n2","type":"inform","template":"ok"}
        ],"edges":[{"source":"n1","target":"n2"}]}"#
            .to_string()
    }

    #[test]
    fn clean_graph_has_no_findings() {
        assert!(validate_chief(&parse_chief(&base()).unwrap()).is_empty());
    }

    #[test]
    fn dangling_edge_is_an_error() {
        let mut g = parse_chief(&base()).unwrap();
        g.edges.push(crate::chief::Edge::new("n1", "n9").with_condition("later"));
        let d = validate_chief(&g);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].message, "unknown target n9");
        assert!(d[0].is_error());
    }

    #[test]
    fn unreachable_node_is_a_warning() {
        let mut g = parse_chief(&base()).unwrap();
        g.nodes.push(crate::chief::Node::new(
            "n4",
            NodeKind::Inform(InformNode { template: "t".into(), confirm_question: None }),
        ));
        let d = validate_chief(&g);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "unreachable node n4");
        assert!(!d[0].is_error());
        assert_eq!(d[0].to_string(), "nodes[2]: warning: unreachable node n4");
    }

    #[test]
    fn empty_graph_lacks_start() {
        let g = parse_chief(r#"{"nodes":[],"edges":[]}"#).unwrap();
        let d = validate_chief(&g);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "missing-start");
    }

    #[test]
    fn invariant_violations_are_each_reported() {
        let doc = r#"{"nodes":[
            {"id":"a","type":"request","slots":[{"name":"x"},{"name":"x"},{"name":"c","type":"categorical"}]},
            {"id":"a","type":"inform","template":" "},
            {"id":"b","type":"request","slots":[]},
            {"id":"e","type":"external_action","function":"f","parameters":["nope"]}
          ],
          "edges":[{"source":"a","target":"b"},{"source":"a","target":"e"}],
          "global_actions":[{"name":"hello","response":"hi","examples":["hi"]}],
          "fallback_actions":[{"name":"hello","response":"bye"},{"name":"b","response":"x"}]}"#;
        let codes: Vec<String> = validate_chief(&parse_chief(doc).unwrap())
            .into_iter()
            .map(|d| d.code)
            .collect();
        for expected in [
            "duplicate-id",
            "duplicate-slot",
            "categorical-without-examples",
            "empty-template",
            "no-slots",
            "unknown-parameter",
            "multiple-defaults",
            "duplicate-action",
            "action-node-clash",
        ] {
            assert!(codes.iter().any(|c| c == expected), "missing {expected} in {codes:?}");
        }
    }

    #[test]
    fn slot_names_are_unique_across_the_flow() {
        let doc = r#"{"nodes":[
            {"id":"a","type":"request","slots":[{"name":"x"}]},
            {"id":"b","type":"request","slots":[{"name":"x"}]}
          ],"edges":[{"source":"a","target":"b"}]}"#;
        let d = validate_chief(&parse_chief(doc).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "shared-slot");
    }

    #[test]
    fn validation_is_pure() {
        let g = parse_chief(&base()).unwrap();
        let a = format!("{:?}", validate_chief(&g));
        let b = format!("{:?}", validate_chief(&g));
        assert_eq!(a, b);
    }
}
