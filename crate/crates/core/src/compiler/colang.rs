//! Colang-2 flavoured rendering of a guardrail program.
//!
//! Output subset: `import`, `flow`, `activate`, `while`, `if`/`elif`/`else`,
//! `$var = <expr>`, NLD expressions (`..."text"`), `await <Name>Action(...)`,
//! `user said`, `bot say`, `pass` and `#` comments. [`crate::compiler::check_colang`]
//! accepts exactly this subset.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::ir::*;
use super::lower::confirm_instruction;

const INDENT: &str = "  ";

pub fn emit_colang(program: &GuardrailProgram) -> String {
    let mut e = Emitter::new(program);
    e.header();
    e.intent_flows();
    e.main_flow();
    e.out
}

struct Emitter<'p> {
    program: &'p GuardrailProgram,
    /// `[name]` placeholders bound to external-action results.
    returns: BTreeMap<String, String>,
    out: String,
}

pub(crate) fn quote(text: &str) -> String {
    let escaped = text
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    format!("\"{escaped}\"")
}

fn nld(text: &str) -> String {
    format!("...{}", quote(text))
}

pub(crate) fn action_name(function: &str) -> String {
    let mut name: String = function
        .split(|c: char| !c.is_alphanumeric())
        .filter(|p| !p.is_empty())
        .map(|p| {
            let mut cs = p.chars();
            let first = cs.next().map(|c| c.to_ascii_uppercase()).into_iter();
            first.chain(cs).collect::<String>()
        })
        .collect();
    if !name.ends_with("Action") {
        name.push_str("Action");
    }
    name
}

fn literal(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => "None".into(),
        serde_json::Value::Bool(true) => "True".into(),
        serde_json::Value::Bool(false) => "False".into(),
        other => other.to_string(),
    }
}

impl<'p> Emitter<'p> {
    fn new(program: &'p GuardrailProgram) -> Self {
        let mut returns = BTreeMap::new();
        for d in program.checks() {
            if let NodeAction::ExternalAction {
                returns: Some(r),
                result_var,
                ..
            } = &d.action
            {
                returns.entry(r.clone()).or_insert_with(|| result_var.clone());
            }
        }
        Emitter {
            program,
            returns,
            out: String::new(),
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn blank(&mut self) {
        self.out.push('\n');
    }

    /// Inform template with `[name]` placeholders turned into `{$var}`.
    fn template(&self, template: &str) -> String {
        let mut s = String::new();
        let mut rest = template;
        while let Some(open) = rest.find('[') {
            let Some(close) = rest[open..].find(']') else { break };
            let name = &rest[open + 1..open + close];
            s.push_str(&rest[..open]);
            let bound = if self.program.dst_entry(name).is_some() {
                Some(name.to_string())
            } else {
                self.returns.get(name).cloned()
            };
            match bound {
                Some(var) => {
                    let _ = write!(s, "{{${var}}}");
                }
                None => s.push_str(&rest[open..=open + close]),
            }
            rest = &rest[open + close + 1..];
        }
        s.push_str(rest);
        quote(&s)
    }

    fn header(&mut self) {
        self.line(0, "import core");
        self.line(0, "import llm");
        self.blank();
    }

    fn intent_flows(&mut self) {
        for intent in &self.program.intent_table {
            self.line(0, &format!("flow global {}", intent.name));
            let said: Vec<String> = if intent.examples.is_empty() {
                vec![format!("user said {}", quote(&intent.name.replace('_', " ")))]
            } else {
                intent.examples.iter().map(|x| format!("user said {}", quote(x))).collect()
            };
            self.line(1, &said.join(" or "));
            self.line(1, &format!("bot say {}", quote(&intent.response)));
            self.blank();
        }
    }

    fn main_flow(&mut self) {
        self.line(0, "flow main");
        self.line(1, "activate llm continuation");
        let names: Vec<String> = self.program.intent_table.iter().map(|i| i.name.clone()).collect();
        for name in names {
            self.line(1, &format!("activate global {name}"));
        }
        self.blank();
        self.line(1, "# state");
        for v in &self.program.init_block {
            self.line(1, &format!("${} = {}", v.var, literal(&v.initial)));
        }
        self.blank();
        self.line(1, "while True");
        self.line(2, "user said something");
        self.blank();
        self.dst();
        self.answers();
        self.line(2, "# next action");
        self.line(2, "$acted = False");
        let root = self.program.nap_tree.root.clone();
        self.decision(&root, 2);
        for d in self.program.nap_tree.detached.clone() {
            self.line(2, &format!("# node {} is unreachable from the start node", d.node));
        }
        self.blank();
        self.fallback();
    }

    fn dst(&mut self) {
        self.line(2, "# state tracking");
        for entry in self.program.dst_table.clone() {
            self.line(2, &format!("$previous = ${}", entry.slot));
            self.line(2, &format!("${} = {}", entry.slot, nld(&entry.instruction)));
            if !entry.invalidates.is_empty() {
                self.line(2, &format!("if ${} != $previous", entry.slot));
                for var in &entry.invalidates {
                    let reset = VarKind::of_helper(var).map_or(serde_json::Value::Null, VarKind::reset_value);
                    self.line(3, &format!("${var} = {}", literal(&reset)));
                }
            }
        }
        self.blank();
    }

    fn answers(&mut self) {
        let confirms: Vec<(String, String, String)> = self
            .program
            .checks()
            .into_iter()
            .filter_map(|d| match &d.action {
                NodeAction::Inform {
                    confirm_question: Some(q),
                    inform_var,
                    answered_var: Some(a),
                    ..
                } => Some((q.clone(), inform_var.clone(), a.clone())),
                _ => None,
            })
            .collect();
        if confirms.is_empty() {
            return;
        }
        self.line(2, "# confirmation answers");
        for (question, inform, answered) in confirms {
            self.line(
                2,
                &format!("if ${inform} == True and ${answered} not in [\"yes\", \"no\"]"),
            );
            self.line(3, &format!("${answered} = {}", nld(&confirm_instruction(&question))));
        }
        self.blank();
    }

    fn decision(&mut self, d: &DecisionNode, depth: usize) {
        self.line(depth, &format!("# node {} ({})", d.node, d.action.kind_name()));
        match &d.action {
            NodeAction::ExternalAction {
                function,
                parameters,
                result_var,
                ..
            } => {
                self.line(depth, &format!("if {}", d.guard));
                let args: Vec<String> = parameters.iter().map(|p| format!("{p}=${p}")).collect();
                self.line(
                    depth + 1,
                    &format!("${result_var} = await {}({})", action_name(function), args.join(", ")),
                );
                self.branches(&d.branches, depth);
            }
            action => {
                self.line(depth, &format!("if {}", d.guard));
                self.respond(action, depth + 1);
                if !d.branches.is_empty() {
                    self.line(depth, "else");
                    self.branches(&d.branches, depth + 1);
                }
            }
        }
    }

    fn respond(&mut self, action: &NodeAction, depth: usize) {
        match action {
            NodeAction::Request { required, any_of, rule } => {
                let mut ask = format!("Ask the user for whichever of these is still missing: {}", required.join(", "));
                for group in any_of {
                    let _ = write!(ask, "; at least one of: {}", group.join(", "));
                }
                if let Some(r) = rule {
                    let _ = write!(ask, ". Rule: {r}");
                }
                ask.push('.');
                self.line(depth, &format!("$response = {}", nld(&ask)));
                self.line(depth, "bot say $response");
            }
            NodeAction::Inform {
                template,
                confirm_question,
                inform_var,
                ..
            } => {
                let text = match confirm_question {
                    Some(q) => format!("{template} {q}"),
                    None => template.clone(),
                };
                self.line(depth, &format!("bot say {}", self.template(&text)));
                self.line(depth, &format!("${inform_var} = True"));
            }
            NodeAction::ExternalAction { .. } => unreachable!("handled by decision"),
        }
        self.line(depth, "$acted = True");
    }

    fn branches(&mut self, branches: &[Branch], depth: usize) {
        let conditioned: Vec<&Branch> = branches.iter().filter(|b| b.condition.is_some()).collect();
        let default = branches.iter().find(|b| b.condition.is_none());
        if conditioned.is_empty() {
            if let Some(b) = default {
                self.target(&b.target, depth);
            }
            return;
        }
        for (i, b) in conditioned.iter().enumerate() {
            let keyword = if i == 0 { "if" } else { "elif" };
            let condition = b.condition.as_deref().unwrap_or_default();
            self.line(depth, &format!("{keyword} {}", nld(condition)));
            self.target(&b.target, depth + 1);
        }
        if let Some(b) = default {
            self.line(depth, "else");
            self.target(&b.target, depth + 1);
        }
    }

    fn target(&mut self, target: &BranchTarget, depth: usize) {
        match target {
            BranchTarget::Inline(d) => self.decision(d, depth),
            BranchTarget::Jump(id) => {
                self.line(depth, &format!("# continues at node {id}"));
                self.line(depth, "pass");
            }
        }
    }

    fn fallback(&mut self) {
        let policy = &self.program.fallback_policy;
        let mut options: Vec<String> = policy.actions.iter().map(|a| format!("{} ({})", a.name, a.response)).collect();
        options.extend(policy.node_inventory.iter().map(|n| format!("node {n}")));
        let instruction = format!(
            "No step of the flow applies. Reply to the user with the most suitable of: {}.",
            options.join("; ")
        );
        self.line(2, "# fallback");
        self.line(2, "if $acted == False");
        self.line(3, &format!("$response = {}", nld(&instruction)));
        self.line(3, "bot say $response");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chief::parse_chief;
    use crate::compiler::{check_colang, compile};

    const TAXI: &str = include_str!("../../fixtures/flows/taxi.chief.json");

    #[test]
    fn action_names_are_camel_case() {
        assert_eq!(action_name("book_taxi"), "BookTaxiAction");
        assert_eq!(action_name("getWeather"), "GetWeatherAction");
        assert_eq!(action_name("check_action"), "CheckAction");
    }

    #[test]
    fn one_nld_assignment_per_slot() {
        let p = compile(&parse_chief(TAXI).unwrap()).unwrap();
        let text = emit_colang(&p);
        for slot in ["departure", "arrival", "time"] {
            let prefix = format!("${slot} = ...\"");
            assert_eq!(text.matches(&prefix).count(), 1, "{slot}");
        }
        assert!(text.contains("activate llm continuation"));
        assert!(text.contains("{$action_n2}"));
        check_colang(&text).unwrap();
    }

    #[test]
    fn no_intents_no_intent_flows() {
        let g = parse_chief(r#"{"nodes":[{"id":"n1","type":"inform","template":"Hi"}],"edges":[]}"#).unwrap();
        let text = emit_colang(&compile(&g).unwrap());
        assert!(!text.contains("flow global"));
        assert!(text.contains("# node n1 (inform)"));
        check_colang(&text).unwrap();
    }

    #[test]
    fn quotes_are_escaped() {
        assert_eq!(quote("say \"hi\""), "\"say \\\"hi\\\"\"");
    }
}
