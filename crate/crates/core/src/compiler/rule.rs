//! Machine-checkable subset of request-node rules.
//!
//! Accepted forms, case-insensitive:
//! - `any-of {a, b}` / `all-of {a, b}` (braces or parentheses)
//! - "either X or Y ... is sufficient": X and Y form an any-of group
//! - "both X and Y are required", "all of X, Y": all-of group
//!
//! Slots a rule does not mention stay required. Anything else is free-form
//! and is decided by the language model at runtime.

use super::ir::Predicate;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleForm {
    AnyOf(Vec<String>),
    AllOf(Vec<String>),
    FreeForm(String),
}

const ARTICLES: &[&str] = &["a", "an", "the", "their", "your", "its"];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Matches a slot name at `words[i..]`, also accepting `foo_bar` spelled as
/// two words. Returns the slot and the number of words consumed.
fn slot_at(words: &[String], i: usize, slots: &[String]) -> Option<(String, usize)> {
    let mut best: Option<(String, usize)> = None;
    for slot in slots {
        let parts: Vec<String> = slot.to_lowercase().split('_').map(str::to_string).collect();
        let n = parts.len();
        let spelled = i + n <= words.len() && words[i..i + n] == parts[..];
        let joined = words.get(i).is_some_and(|w| *w == slot.to_lowercase());
        let used = if joined { 1 } else if spelled { n } else { 0 };
        if used > 0 && best.as_ref().map_or(true, |(_, u)| used > *u) {
            best = Some((slot.clone(), used));
        }
    }
    best
}

fn skip_articles(words: &[String], mut i: usize) -> usize {
    while words.get(i).is_some_and(|w| ARTICLES.contains(&w.as_str())) {
        i += 1;
    }
    i
}

fn mentioned(words: &[String], slots: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        match slot_at(words, i, slots) {
            Some((s, used)) => {
                if !out.contains(&s) {
                    out.push(s);
                }
                i += used;
            }
            None => i += 1,
        }
    }
    out
}

fn structured(text: &str, slots: &[String]) -> Option<RuleForm> {
    let t = text.trim().to_lowercase();
    let (any, rest) = if let Some(r) = t.strip_prefix("any-of") {
        (true, r)
    } else if let Some(r) = t.strip_prefix("all-of") {
        (false, r)
    } else {
        return None;
    };
    let rest = rest.trim();
    let inner = rest
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')))?;
    let names: Vec<String> = inner
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let resolved: Option<Vec<String>> = names
        .iter()
        .map(|n| slots.iter().find(|s| s.to_lowercase() == *n).cloned())
        .collect();
    let resolved = resolved?;
    if resolved.is_empty() {
        return None;
    }
    Some(if any { RuleForm::AnyOf(resolved) } else { RuleForm::AllOf(resolved) })
}

pub fn parse_rule(text: &str, slots: &[String]) -> RuleForm {
    if let Some(form) = structured(text, slots) {
        return form;
    }
    let w = words(text);
    if let Some(start) = w.iter().position(|x| x == "either") {
        let mut group = Vec::new();
        let mut i = skip_articles(&w, start + 1);
        let mut ok = true;
        loop {
            match slot_at(&w, i, slots) {
                Some((s, used)) => {
                    if !group.contains(&s) {
                        group.push(s);
                    }
                    i += used;
                }
                None => {
                    ok = false;
                    break;
                }
            }
            // Skip trailing qualifiers ("departure or arrival time") up to the next "or".
            match w[i..].iter().position(|x| x == "or") {
                Some(off) if w[i..i + off].iter().all(|x| !is_clause_break(x)) => {
                    i = skip_articles(&w, i + off + 1);
                }
                _ => break,
            }
        }
        if ok && group.len() >= 2 {
            return RuleForm::AnyOf(group);
        }
    }
    let has = |k: &str| w.iter().any(|x| x == k);
    if (has("both") || (has("all") && has("of"))) && (has("required") || has("needed") || has("must")) {
        let group = mentioned(&w, slots);
        if group.len() >= 2 {
            return RuleForm::AllOf(group);
        }
    }
    RuleForm::FreeForm(text.to_string())
}

fn is_clause_break(word: &str) -> bool {
    matches!(word, "is" | "are" | "be" | "and" | "if" | "when" | "then")
}

/// Guard that holds while the request node still has to ask for something.
pub fn request_guard(slots: &[String], rule: Option<&str>) -> Predicate {
    let all_missing = || Predicate::Any {
        of: slots.iter().map(Predicate::is_null).collect(),
    };
    match rule.map(|r| parse_rule(r, slots)) {
        None | Some(RuleForm::AllOf(_)) => all_missing(),
        Some(RuleForm::AnyOf(group)) => {
            let mut of: Vec<Predicate> = slots
                .iter()
                .filter(|s| !group.contains(s))
                .map(Predicate::is_null)
                .collect();
            of.push(Predicate::All {
                of: group.iter().map(Predicate::is_null).collect(),
            });
            Predicate::Any { of }
        }
        Some(RuleForm::FreeForm(text)) => Predicate::All {
            of: vec![all_missing(), Predicate::Nld { text: free_form_question(&text, slots) }],
        },
    }
}

pub fn free_form_question(rule: &str, slots: &[String]) -> String {
    format!(
        "Given the rule \"{}\", should the assistant still ask the user for {}? Answer True or False.",
        rule.replace('"', "'"),
        slots.join(", ")
    )
}

/// Required slots and any-of groups for a request action.
pub fn request_shape(slots: &[String], rule: Option<&str>) -> (Vec<String>, Vec<Vec<String>>) {
    match rule.map(|r| parse_rule(r, slots)) {
        Some(RuleForm::AnyOf(group)) => (
            slots.iter().filter(|s| !group.contains(s)).cloned().collect(),
            vec![group],
        ),
        _ => (slots.to_vec(), Vec::new()),
    }
}
