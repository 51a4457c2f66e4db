//! JSON encoding of dialogue flows.
//!
//! Node objects are `{"id", "type", ...}` with `type` one of `request`
//! (`slots`, optional `rule`), `external_action` (`function`, optional
//! `parameters` and `returns`) or `inform` (`template`, optional
//! `confirm_question`). Edges are `{"source", "target", "condition"?}`.
//! Fields not listed here are kept verbatim and written back on
//! serialization, but carry no meaning.

use serde_json::{Map, Value};

use super::model::*;
use super::ChiefError;

struct Fields<'a> {
    map: &'a Map<String, Value>,
    path: String,
    known: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(value: &'a Value, path: &str) -> Result<Self, ChiefError> {
        let map = value
            .as_object()
            .ok_or_else(|| violation(path, "expected an object"))?;
        Ok(Self {
            map,
            path: path.to_string(),
            known: Vec::new(),
        })
    }

    fn child(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn required(&mut self, key: &'static str) -> Result<&'a Value, ChiefError> {
        let path = self.child(key);
        self.get(key)
            .ok_or_else(|| violation(&path, "missing required field"))
    }

    fn string(&mut self, key: &'static str) -> Result<String, ChiefError> {
        let path = self.child(key);
        as_string(self.required(key)?, &path)
    }

    fn opt_string(&mut self, key: &'static str) -> Result<Option<String>, ChiefError> {
        let path = self.child(key);
        self.get(key).map(|v| as_string(v, &path)).transpose()
    }

    fn array(&mut self, key: &'static str) -> Result<&'a [Value], ChiefError> {
        let path = self.child(key);
        match self.get(key) {
            None => Ok(&[]),
            Some(Value::Array(items)) => Ok(items),
            Some(_) => Err(violation(&path, "expected an array")),
        }
    }

    fn string_list(&mut self, key: &'static str) -> Result<Vec<String>, ChiefError> {
        let path = self.child(key);
        self.array(key)?
            .iter()
            .enumerate()
            .map(|(i, v)| as_string(v, &format!("{path}[{i}]")))
            .collect()
    }

    fn extra(&self) -> Map<String, Value> {
        self.map
            .iter()
            .filter(|(k, _)| !self.known.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn violation(path: &str, message: &str) -> ChiefError {
    ChiefError::SchemaViolation {
        path: if path.is_empty() { "$".into() } else { path.into() },
        message: message.into(),
    }
}

fn as_string(value: &Value, path: &str) -> Result<String, ChiefError> {
    value
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| violation(path, "expected a string"))
}

/// Parses a flow document. Node and edge order is preserved.
pub fn parse_chief(document: &str) -> Result<ChiefGraph, ChiefError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ChiefError::MalformedDocument {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    graph_from_value(&value)
}

pub fn graph_from_value(value: &Value) -> Result<ChiefGraph, ChiefError> {
    let mut root = Fields::new(value, "")?;
    root.required("nodes")?;
    root.required("edges")?;
    let nodes = root
        .array("nodes")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_node(v, &format!("nodes[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let edges = root
        .array("edges")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_edge(v, &format!("edges[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let global_actions = root
        .array("global_actions")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_global(v, &format!("global_actions[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let fallback_actions = root
        .array("fallback_actions")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_fallback(v, &format!("fallback_actions[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let start_node = root.opt_string("start_node")?;
    Ok(ChiefGraph {
        nodes,
        edges,
        global_actions,
        fallback_actions,
        start_node,
        extra: root.extra(),
    })
}

fn parse_node(value: &Value, path: &str) -> Result<Node, ChiefError> {
    let mut f = Fields::new(value, path)?;
    let id = f.string("id")?;
    let type_path = f.child("type");
    let kind = match f.string("type")?.as_str() {
        "request" => {
            let slots_path = f.child("slots");
            let slots = f
                .array("slots")?
                .iter()
                .enumerate()
                .map(|(i, v)| parse_slot(v, &format!("{slots_path}[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            NodeKind::Request(RequestNode {
                slots,
                rule: f.opt_string("rule")?,
            })
        }
        "external_action" => NodeKind::ExternalAction(ExternalActionNode {
            function: f.string("function")?,
            parameters: f.string_list("parameters")?,
            returns: f.opt_string("returns")?,
        }),
        "inform" => NodeKind::Inform(InformNode {
            template: f.string("template")?,
            confirm_question: f.opt_string("confirm_question")?,
        }),
        other => {
            return Err(violation(
                &type_path,
                &format!("unknown node type `{other}`"),
            ))
        }
    };
    Ok(Node {
        id,
        kind,
        extra: f.extra(),
    })
}

fn parse_slot(value: &Value, path: &str) -> Result<Slot, ChiefError> {
    let mut f = Fields::new(value, path)?;
    let name = f.string("name")?;
    let type_path = f.child("type");
    let value_type = match f.opt_string("type")? {
        None => ValueType::Text,
        Some(t) => ValueType::parse(&t)
            .ok_or_else(|| violation(&type_path, &format!("unknown slot type `{t}`")))?,
    };
    let examples_path = f.child("examples");
    let examples = f
        .array("examples")?
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(_) | Value::Number(_) | Value::Bool(_) => Ok(v.clone()),
            _ => Err(violation(
                &format!("{examples_path}[{i}]"),
                "expected a scalar example value",
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Slot {
        name,
        value_type,
        examples,
        rule: f.opt_string("rule")?,
        description: f.opt_string("description")?,
        extra: f.extra(),
    })
}

fn parse_edge(value: &Value, path: &str) -> Result<Edge, ChiefError> {
    let mut f = Fields::new(value, path)?;
    Ok(Edge {
        source: f.string("source")?,
        target: f.string("target")?,
        condition: f.opt_string("condition")?,
        extra: f.extra(),
    })
}

fn parse_global(value: &Value, path: &str) -> Result<GlobalAction, ChiefError> {
    let mut f = Fields::new(value, path)?;
    Ok(GlobalAction {
        name: f.string("name")?,
        response: f.string("response")?,
        examples: f.string_list("examples")?,
        extra: f.extra(),
    })
}

fn parse_fallback(value: &Value, path: &str) -> Result<FallbackAction, ChiefError> {
    let mut f = Fields::new(value, path)?;
    Ok(FallbackAction {
        name: f.string("name")?,
        response: f.string("response")?,
        extra: f.extra(),
    })
}

fn put_extra(map: &mut Map<String, Value>, extra: &Map<String, Value>) {
    for (k, v) in extra {
        map.entry(k.clone()).or_insert_with(|| v.clone());
    }
}

fn opt(map: &mut Map<String, Value>, key: &str, value: &Option<String>) {
    if let Some(v) = value {
        map.insert(key.into(), Value::String(v.clone()));
    }
}

pub fn graph_to_value(graph: &ChiefGraph) -> Value {
    let mut root = Map::new();
    opt(&mut root, "start_node", &graph.start_node);
    root.insert(
        "nodes".into(),
        Value::Array(graph.nodes.iter().map(node_to_value).collect()),
    );
    root.insert(
        "edges".into(),
        Value::Array(graph.edges.iter().map(edge_to_value).collect()),
    );
    if !graph.global_actions.is_empty() {
        root.insert(
            "global_actions".into(),
            Value::Array(
                graph
                    .global_actions
                    .iter()
                    .map(|g| {
                        let mut m = Map::new();
                        m.insert("name".into(), g.name.clone().into());
                        m.insert("response".into(), g.response.clone().into());
                        m.insert("examples".into(), g.examples.clone().into());
                        put_extra(&mut m, &g.extra);
                        Value::Object(m)
                    })
                    .collect(),
            ),
        );
    }
    if !graph.fallback_actions.is_empty() {
        root.insert(
            "fallback_actions".into(),
            Value::Array(
                graph
                    .fallback_actions
                    .iter()
                    .map(|a| {
                        let mut m = Map::new();
                        m.insert("name".into(), a.name.clone().into());
                        m.insert("response".into(), a.response.clone().into());
                        put_extra(&mut m, &a.extra);
                        Value::Object(m)
                    })
                    .collect(),
            ),
        );
    }
    put_extra(&mut root, &graph.extra);
    Value::Object(root)
}

fn node_to_value(node: &Node) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), node.id.clone().into());
    m.insert("type".into(), node.kind.name().into());
    match &node.kind {
        NodeKind::Request(r) => {
            m.insert(
                "slots".into(),
                Value::Array(r.slots.iter().map(slot_to_value).collect()),
            );
            opt(&mut m, "rule", &r.rule);
        }
        NodeKind::ExternalAction(a) => {
            m.insert("function".into(), a.function.clone().into());
            m.insert("parameters".into(), a.parameters.clone().into());
            opt(&mut m, "returns", &a.returns);
        }
        NodeKind::Inform(i) => {
            m.insert("template".into(), i.template.clone().into());
            opt(&mut m, "confirm_question", &i.confirm_question);
        }
    }
    put_extra(&mut m, &node.extra);
    Value::Object(m)
}

fn slot_to_value(slot: &Slot) -> Value {
    let mut m = Map::new();
    m.insert("name".into(), slot.name.clone().into());
    m.insert("type".into(), slot.value_type.as_str().into());
    m.insert("examples".into(), Value::Array(slot.examples.clone()));
    opt(&mut m, "rule", &slot.rule);
    opt(&mut m, "description", &slot.description);
    put_extra(&mut m, &slot.extra);
    Value::Object(m)
}

fn edge_to_value(edge: &Edge) -> Value {
    let mut m = Map::new();
    m.insert("source".into(), edge.source.clone().into());
    m.insert("target".into(), edge.target.clone().into());
    opt(&mut m, "condition", &edge.condition);
    put_extra(&mut m, &edge.extra);
    Value::Object(m)
}

/// Pretty-printed document text.
pub fn serialize_chief(graph: &ChiefGraph) -> String {
    serde_json::to_string_pretty(&graph_to_value(graph)).expect("graph values always serialize")
}

/// Compact canonical form, the input of the program's source digest.
pub fn canonical_chief(graph: &ChiefGraph) -> String {
    serde_json::to_string(&graph_to_value(graph)).expect("graph values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_parses() {
        let g = parse_chief(r#"{"nodes":[],"edges":[]}"#).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
        assert_eq!(g.start(), None);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_chief("{\"nodes\": [").unwrap_err();
        assert!(matches!(err, ChiefError::MalformedDocument { line: 1, .. }));
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = parse_chief(r#"{"nodes":[{"id":"n1","type":"request","slots":[{"name":3}]}],"edges":[]}"#)
            .unwrap_err();
        match err {
            ChiefError::SchemaViolation { path, .. } => assert_eq!(path, "nodes[0].slots[0].name"),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_chief(r#"{"nodes":[{"id":"n1","type":"teleport"}],"edges":[]}"#).unwrap_err();
        assert!(matches!(err, ChiefError::SchemaViolation { ref path, .. } if path == "nodes[0].type"));
        let err = parse_chief(r#"{"nodes":[]}"#).unwrap_err();
        assert!(matches!(err, ChiefError::SchemaViolation { ref path, .. } if path == "edges"));
        let err = parse_chief(r#"{"nodes":[],"edges":[{"source":"a"}]}"#).unwrap_err();
        assert!(matches!(err, ChiefError::SchemaViolation { ref path, .. } if path == "edges[0].target"));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let doc = r#"{"nodes":[{"id":"n1","type":"inform","template":"hi","color":"blue"}],
                      "edges":[],"layout":{"zoom":2}}"#;
        let g = parse_chief(doc).unwrap();
        assert_eq!(g.nodes[0].extra["color"], "blue");
        let again = parse_chief(&serialize_chief(&g)).unwrap();
        assert_eq!(g, again);
        assert!(serialize_chief(&again).contains("\"zoom\": 2"));
    }

    #[test]
    fn start_defaults_to_first_node() {
        let g = parse_chief(
            r#"{"nodes":[{"id":"a","type":"inform","template":"x"},{"id":"b","type":"inform","template":"y"}],"edges":[]}"#,
        )
        .unwrap();
        assert_eq!(g.start(), Some("a"));
        let g = parse_chief(
            r#"{"start_node":"b","nodes":[{"id":"a","type":"inform","template":"x"},{"id":"b","type":"inform","template":"y"}],"edges":[]}"#,
        )
        .unwrap();
        assert_eq!(g.start(), Some("b"));
    }
}
