use serde_json::{Number, Value};

/// Turns a raw model reply into a typed value: strip one pair of matching
/// quotes, then try a literal (number, boolean, null word), else keep text.
pub fn postprocess_value(raw: &str) -> Value {
    let mut s = raw.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            s = &s[1..s.len() - 1];
            break;
        }
    }
    literal(s).unwrap_or_else(|| Value::String(s.to_string()))
}

fn literal(s: &str) -> Option<Value> {
    match s {
        "None" | "none" | "null" | "NULL" | "Null" => return Some(Value::Null),
        "True" | "true" => return Some(Value::Bool(true)),
        "False" | "false" => return Some(Value::Bool(false)),
        _ => {}
    }
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if let Ok(i) = s.parse::<i64>() {
        return Some(Value::Number(i.into()));
    }
    s.parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .and_then(Number::from_f64)
        .map(Value::Number)
}

/// Text form of a value for templates and prompts.
pub fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "None".into(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn quote_stripping_then_literals() {
        assert_eq!(postprocess_value("\"London\""), json!("London"));
        assert_eq!(postprocess_value("42"), json!(42));
        assert_eq!(postprocess_value("\"True\""), json!(true));
        assert_eq!(postprocess_value("None"), Value::Null);
        assert_eq!(postprocess_value("Downtown Hotel"), json!("Downtown Hotel"));
        assert_eq!(postprocess_value("'2.5'"), json!(2.5));
        assert_eq!(postprocess_value(" 12:00 "), json!("12:00"));
        assert_eq!(postprocess_value("\"\"\"x\"\"\""), json!("\"\"x\"\""));
        assert_eq!(postprocess_value("\""), json!("\""));
        assert_eq!(postprocess_value("inf"), json!("inf"));
        assert_eq!(postprocess_value("-3"), json!(-3));
    }

    #[test]
    fn display() {
        assert_eq!(display_value(&json!("a")), "a");
        assert_eq!(display_value(&json!(3)), "3");
        assert_eq!(display_value(&Value::Null), "None");
    }
}
