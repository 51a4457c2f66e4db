//! Prompt assembly for generating guardrail code with a language model.
//!
//! Templates live as plain text under `prompts/` and are compiled in; a
//! directory with files of the same names overrides them one by one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chief::{serialize_chief, ChiefGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// Language documentation plus the graph; the model picks the structure.
    Free,
    /// A fixed program shape and per-node translation rules.
    Structured,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Free => "free",
            Paradigm::Structured => "structured",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = GcgError;

    fn from_str(s: &str) -> Result<Self, GcgError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "free" => Ok(Paradigm::Free),
            "structured" => Ok(Paradigm::Structured),
            _ => Err(GcgError::UnknownParadigm(s.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GcgError {
    #[error("unknown paradigm `{0}` (expected free or structured)")]
    UnknownParadigm(String),
    #[error("unknown refinement instruction `{0}`")]
    UnknownRefinement(String),
    #[error("template {template} uses unfilled placeholder {{{{{name}}}}}")]
    UnfilledPlaceholder { template: String, name: String },
    #[error("reading prompt templates: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub paradigm: Paradigm,
    pub system: String,
    pub user: String,
}

/// Template file names, in the order [`PromptTemplates::names`] reports them.
const BUILTIN: &[(&str, &str)] = &[
    ("colang_reference.txt", include_str!("../../prompts/colang_reference.txt")),
    ("free.system.txt", include_str!("../../prompts/free.system.txt")),
    ("free.user.txt", include_str!("../../prompts/free.user.txt")),
    ("structured.system.txt", include_str!("../../prompts/structured.system.txt")),
    ("structured.user.txt", include_str!("../../prompts/structured.user.txt")),
    ("refine.user.txt", include_str!("../../prompts/refine.user.txt")),
    ("syntax_fix.user.txt", include_str!("../../prompts/syntax_fix.user.txt")),
    ("ri1.txt", include_str!("../../prompts/ri1.txt")),
    ("ri2.txt", include_str!("../../prompts/ri2.txt")),
    ("ri3.txt", include_str!("../../prompts/ri3.txt")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    files: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        PromptTemplates {
            files: BUILTIN.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
        }
    }

    /// Built-in templates with every `*.txt` file in `dir` layered on top.
    /// Extra `ri*.txt` files add refinement instructions.
    pub fn with_overrides(dir: &Path) -> Result<Self, GcgError> {
        let mut t = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "txt") {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    t.files.insert(name.to_string(), std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    pub fn set(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.files.insert(name.into(), text.into());
    }

    /// Ids of the available refinement instructions (`ri1`, `ri2`, ...).
    pub fn refinements(&self) -> Vec<String> {
        self.files
            .keys()
            .filter_map(|n| n.strip_suffix(".txt"))
            .filter(|n| n.starts_with("ri") && n[2..].chars().all(|c| c.is_ascii_digit()) && n.len() > 2)
            .map(str::to_string)
            .collect()
    }

    fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, GcgError> {
        let template = self.get(name).unwrap_or_default();
        render(name, template, vars)
    }

    pub fn assemble(&self, graph: &ChiefGraph, paradigm: Paradigm) -> Result<PromptBundle, GcgError> {
        let reference = self.get("colang_reference.txt").unwrap_or_default().trim_end().to_string();
        let graph_json = serialize_chief(graph);
        let vars = [("colang_reference", reference.as_str()), ("graph_json", graph_json.as_str())];
        let p = paradigm.as_str();
        Ok(PromptBundle {
            paradigm,
            system: self.render(&format!("{p}.system.txt"), &vars)?,
            user: self.render(&format!("{p}.user.txt"), &vars)?,
        })
    }

    /// User message asking the model to apply one refinement instruction.
    pub fn refinement(&self, ri: &str, graph: &ChiefGraph, code: &str) -> Result<String, GcgError> {
        let instruction = self
            .get(&format!("{ri}.txt"))
            .ok_or_else(|| GcgError::UnknownRefinement(ri.to_string()))?
            .trim_end()
            .to_string();
        let graph_json = serialize_chief(graph);
        self.render(
            "refine.user.txt",
            &[("graph_json", &graph_json), ("code", code.trim_end()), ("instruction", &instruction)],
        )
    }

    pub fn syntax_fix(&self, code: &str, errors: &str) -> Result<String, GcgError> {
        self.render("syntax_fix.user.txt", &[("code", code.trim_end()), ("errors", errors)])
    }
}

/// Replaces `{{name}}` occurrences in one pass; substituted text is not rescanned.
fn render(template_name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, GcgError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = &rest[open + 2..open + 2 + close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| GcgError::UnfilledPlaceholder {
                template: template_name.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(&rest[..open]);
        out.push_str(value);
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn assemble_gcg_prompt(graph: &ChiefGraph, paradigm: Paradigm) -> PromptBundle {
    PromptTemplates::builtin()
        .assemble(graph, paradigm)
        .expect("built-in templates only use known placeholders")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chief::parse_chief;

    const TAXI: &str = include_str!("../../fixtures/flows/taxi.chief.json");

    #[test]
    fn paradigm_parsing() {
        assert_eq!("Structured".parse::<Paradigm>().unwrap(), Paradigm::Structured);
        assert!(matches!("guided".parse::<Paradigm>(), Err(GcgError::UnknownParadigm(p)) if p == "guided"));
    }

    #[test]
    fn bundles_embed_graph_and_their_guidance() {
        let g = parse_chief(TAXI).unwrap();
        let json = serialize_chief(&g);
        let free = assemble_gcg_prompt(&g, Paradigm::Free);
        let structured = assemble_gcg_prompt(&g, Paradigm::Structured);
        assert!(free.user.contains(&json));
        assert!(structured.user.contains(&json));
        assert!(free.system.contains("no `end` keyword"));
        assert!(structured.system.contains("Program shape:"));
        assert!(!free.system.contains("Program shape:"));
        for b in [&free, &structured] {
            assert!(!b.system.contains("{{") && !b.user.contains("{{"));
        }
    }

    #[test]
    fn placeholders_are_not_rescanned() {
        let out = render("t", "a {{x}} b", &[("x", "{{y}}")]).unwrap();
        assert_eq!(out, "a {{y}} b");
        assert!(matches!(render("t", "{{nope}}", &[]), Err(GcgError::UnfilledPlaceholder { .. })));
    }

    #[test]
    fn refinement_prompts() {
        let g = parse_chief(TAXI).unwrap();
        let t = PromptTemplates::builtin();
        assert_eq!(t.refinements(), ["ri1", "ri2", "ri3"]);
        let p = t.refinement("ri2", &g, "flow main\n  pass\n").unwrap();
        assert!(p.contains("reachable") && p.contains("flow main\n  pass\n```"));
        assert!(matches!(t.refinement("ri9", &g, ""), Err(GcgError::UnknownRefinement(_))));
    }

    #[test]
    fn directory_overrides() {
        let dir = std::env::temp_dir().join(format!("codial-prompts-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("free.user.txt"), "GRAPH {{graph_json}} END").unwrap();
        std::fs::write(dir.join("ri4.txt"), "Use short messages.").unwrap();
        let t = PromptTemplates::with_overrides(&dir).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        let g = parse_chief(TAXI).unwrap();
        let b = t.assemble(&g, Paradigm::Free).unwrap();
        assert!(b.user.starts_with("GRAPH {") && b.user.ends_with("} END"));
        assert_eq!(t.refinements(), ["ri1", "ri2", "ri3", "ri4"]);
    }
}
