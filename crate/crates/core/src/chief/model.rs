use serde_json::{Map, Value};

pub type NodeId = String;

/// A dialogue flow: typed nodes joined by optionally conditioned edges, plus
/// actions that are not tied to a particular step of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiefGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub global_actions: Vec<GlobalAction>,
    pub fallback_actions: Vec<FallbackAction>,
    /// Explicit start marker from the document. See [`ChiefGraph::start`].
    pub start_node: Option<NodeId>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Request(RequestNode),
    ExternalAction(ExternalActionNode),
    Inform(InformNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestNode {
    pub slots: Vec<Slot>,
    /// Free-form condition describing when the node's slots must be requested.
    pub rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalActionNode {
    pub function: String,
    /// Slot names passed to the function, by name.
    pub parameters: Vec<String>,
    /// Template placeholder bound to a scalar return value.
    pub returns: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformNode {
    pub template: String,
    pub confirm_question: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Text,
    Categorical,
    Number,
    Boolean,
    Datetime,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Text => "text",
            ValueType::Categorical => "categorical",
            ValueType::Number => "number",
            ValueType::Boolean => "boolean",
            ValueType::Datetime => "datetime",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "text" => ValueType::Text,
            "categorical" => ValueType::Categorical,
            "number" => ValueType::Number,
            "boolean" => ValueType::Boolean,
            "datetime" => ValueType::Datetime,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub value_type: ValueType,
    pub examples: Vec<Value>,
    pub rule: Option<String>,
    pub description: Option<String>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub condition: Option<String>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAction {
    pub name: String,
    pub response: String,
    pub examples: Vec<String>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackAction {
    pub name: String,
    pub response: String,
    pub extra: Map<String, Value>,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Request(_) => "request",
            NodeKind::ExternalAction(_) => "external_action",
            NodeKind::Inform(_) => "inform",
        }
    }
}

impl Slot {
    pub fn new(name: impl Into<String>, value_type: ValueType) -> Self {
        Self {
            name: name.into(),
            value_type,
            examples: Vec::new(),
            rule: None,
            description: None,
            extra: Map::new(),
        }
    }
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            extra: Map::new(),
        }
    }

    /// Helper variables tracking this node's progress, in declaration order.
    pub fn helper_variables(&self) -> Vec<String> {
        match &self.kind {
            NodeKind::Request(_) => Vec::new(),
            NodeKind::ExternalAction(_) => vec![format!("action_{}", self.id)],
            NodeKind::Inform(inform) => {
                let mut vars = vec![format!("inform_{}", self.id)];
                if inform.confirm_question.is_some() {
                    vars.push(format!("answered_{}", self.id));
                }
                vars
            }
        }
    }
}

impl Edge {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            condition: None,
            extra: Map::new(),
        }
    }

    pub fn with_condition(mut self, condition: impl Into<String>) -> Self {
        self.condition = Some(condition.into());
        self
    }
}

impl ChiefGraph {
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            global_actions: Vec::new(),
            fallback_actions: Vec::new(),
            start_node: None,
            extra: Map::new(),
        }
    }

    /// The explicit start marker, or the first listed node.
    pub fn start(&self) -> Option<&str> {
        self.start_node
            .as_deref()
            .or_else(|| self.nodes.first().map(|n| n.id.as_str()))
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.source == id)
    }

    /// All slots in document order, paired with the id of their request node.
    pub fn slots(&self) -> impl Iterator<Item = (&str, &Slot)> {
        self.nodes.iter().flat_map(|n| {
            let slots: &[Slot] = match &n.kind {
                NodeKind::Request(r) => &r.slots,
                _ => &[],
            };
            slots.iter().map(move |s| (n.id.as_str(), s))
        })
    }

    pub fn slot(&self, name: &str) -> Option<(&str, &Slot)> {
        self.slots().find(|(_, s)| s.name == name)
    }

    /// Node owning a state variable: a slot name or a `<prefix>_<id>` helper.
    pub fn variable_node(&self, variable: &str) -> Option<&str> {
        if let Some((node, _)) = self.slot(variable) {
            return Some(node);
        }
        self.nodes
            .iter()
            .find(|n| n.helper_variables().iter().any(|v| v == variable))
            .map(|n| n.id.as_str())
    }

    /// Every state variable: slots first, then helpers, each in document order.
    pub fn variables(&self) -> Vec<String> {
        let mut vars: Vec<String> = self.slots().map(|(_, s)| s.name.clone()).collect();
        vars.extend(self.nodes.iter().flat_map(|n| n.helper_variables()));
        vars
    }
}
