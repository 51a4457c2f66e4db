//! Line-oriented checker for the Colang subset produced by [`super::emit_colang`]
//! and requested from code-generating models.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    Str(String),
    Nld(String),
    Num,
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Assign,
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let string_at = |i: usize| -> Result<(String, usize), String> {
        let mut j = i + 1;
        let mut text = String::new();
        while j < chars.len() {
            match chars[j] {
                '\\' if j + 1 < chars.len() => {
                    text.push(chars[j + 1]);
                    j += 2;
                }
                '"' => return Ok((text, j + 1)),
                c => {
                    text.push(c);
                    j += 1;
                }
            }
        }
        Err("unterminated string".into())
    };
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '"' => {
                let (text, next) = string_at(i)?;
                check_interpolation(&text)?;
                out.push(Tok::Str(text));
                i = next;
            }
            '.' if chars[i..].starts_with(&['.', '.', '.', '"']) => {
                let (text, next) = string_at(i + 3)?;
                if text.trim().is_empty() {
                    return Err("empty natural language description".into());
                }
                out.push(Tok::Nld(text));
                i = next;
            }
            '$' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '.') {
                    j += 1;
                }
                let name: String = chars[start..j].iter().collect();
                if !valid_var(&name) {
                    return Err(format!("bad variable name `${name}`"));
                }
                out.push(Tok::Var(name));
                i = j;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '[' => {
                out.push(Tok::LBracket);
                i += 1;
            }
            ']' => {
                out.push(Tok::RBracket);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '=' | '!' | '<' | '>' => {
                let next = chars.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    ('=', Some('=')) => (Tok::Op("=="), 2),
                    ('!', Some('=')) => (Tok::Op("!="), 2),
                    ('<', Some('=')) => (Tok::Op("<="), 2),
                    ('>', Some('=')) => (Tok::Op(">="), 2),
                    ('<', _) => (Tok::Op("<"), 1),
                    ('>', _) => (Tok::Op(">"), 1),
                    ('=', _) => (Tok::Assign, 1),
                    _ => return Err(format!("unexpected `{c}`")),
                };
                out.push(tok);
                i += len;
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                out.push(Tok::Num);
                i = j;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push(Tok::Ident(chars[i..j].iter().collect()));
                i = j;
            }
            c => return Err(format!("unexpected `{c}`")),
        }
    }
    Ok(out)
}

fn valid_var(name: &str) -> bool {
    !name.is_empty()
        && name.split('.').all(|part| {
            part.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && part.chars().all(|c| c.is_alphanumeric() || c == '_')
        })
}

/// `{$var}` and `{$var.field}` are allowed inside strings; indexing is not.
fn check_interpolation(text: &str) -> Result<(), String> {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            return Err("unclosed `{` in string".into());
        };
        let inner = &rest[open + 1..open + close];
        match inner.strip_prefix('$') {
            Some(var) if valid_var(var) => {}
            _ => return Err(format!("unsupported interpolation `{{{inner}}}`")),
        }
        rest = &rest[open + close + 1..];
    }
    Ok(())
}

struct Parser<'t> {
    toks: &'t [Tok],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == k)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), String> {
        match self.next() {
            Some(t) if *t == tok => Ok(()),
            Some(t) => Err(format!("expected {what}, found {t:?}")),
            None => Err(format!("expected {what}")),
        }
    }

    fn done(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("unexpected {t:?}")),
        }
    }

    fn expr(&mut self) -> Result<(), String> {
        self.and()?;
        while self.keyword("or") {
            self.pos += 1;
            self.and()?;
        }
        Ok(())
    }

    fn and(&mut self) -> Result<(), String> {
        self.not()?;
        while self.keyword("and") {
            self.pos += 1;
            self.not()?;
        }
        Ok(())
    }

    fn not(&mut self) -> Result<(), String> {
        if self.keyword("not") {
            self.pos += 1;
            return self.not();
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<(), String> {
        self.primary()?;
        let is_cmp = matches!(self.peek(), Some(Tok::Op(_))) || self.keyword("in");
        let is_not_in = self.keyword("not") && matches!(self.toks.get(self.pos + 1), Some(Tok::Ident(w)) if w == "in");
        if is_cmp || is_not_in {
            self.pos += if is_not_in { 2 } else { 1 };
            self.primary()?;
        }
        Ok(())
    }

    fn primary(&mut self) -> Result<(), String> {
        match self.next().cloned() {
            Some(Tok::Var(_) | Tok::Str(_) | Tok::Nld(_) | Tok::Num) => Ok(()),
            Some(Tok::Ident(w)) => match w.as_str() {
                "None" | "True" | "False" => Ok(()),
                "await" => self.call(),
                "and" | "or" | "not" | "in" => Err(format!("unexpected `{w}`")),
                _ if matches!(self.peek(), Some(Tok::LParen)) => {
                    self.pos -= 1;
                    self.call()
                }
                _ => Err(format!("unknown name `{w}`")),
            },
            Some(Tok::LParen) => {
                self.expr()?;
                self.expect(Tok::RParen, "`)`")
            }
            Some(Tok::LBracket) => {
                if matches!(self.peek(), Some(Tok::RBracket)) {
                    self.pos += 1;
                    return Ok(());
                }
                loop {
                    self.expr()?;
                    match self.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBracket) => return Ok(()),
                        _ => return Err("expected `,` or `]`".into()),
                    }
                }
            }
            Some(t) => Err(format!("unexpected {t:?}")),
            None => Err("expression expected".into()),
        }
    }

    /// `Name(arg=expr, ...)` or `Name(expr, ...)`.
    fn call(&mut self) -> Result<(), String> {
        match self.next() {
            Some(Tok::Ident(_)) => {}
            _ => return Err("expected action name".into()),
        }
        self.expect(Tok::LParen, "`(`")?;
        if matches!(self.peek(), Some(Tok::RParen)) {
            self.pos += 1;
            return Ok(());
        }
        loop {
            if matches!(self.peek(), Some(Tok::Ident(_))) && matches!(self.toks.get(self.pos + 1), Some(Tok::Assign)) {
                self.pos += 2;
            }
            self.expr()?;
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => return Ok(()),
                _ => return Err("expected `,` or `)`".into()),
            }
        }
    }
}

fn expression(text: &str) -> Result<(), String> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    p.expr()?;
    p.done()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Opener {
    Flow,
    If,
    Else,
    While,
}

fn statement(text: &str, in_flow: bool) -> Result<Option<Opener>, String> {
    let (head, rest) = text.split_once(' ').unwrap_or((text, ""));
    let rest = rest.trim();
    if !in_flow && !matches!(head, "import" | "flow") {
        return Err(format!("`{head}` outside a flow"));
    }
    match head {
        "import" => {
            if in_flow || rest.is_empty() || !rest.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
                return Err("malformed import".into());
            }
            Ok(None)
        }
        "flow" => {
            if in_flow {
                return Err("flows cannot be nested".into());
            }
            flow_name(rest)?;
            Ok(Some(Opener::Flow))
        }
        "activate" => flow_name(rest).map(|_| None),
        "if" | "elif" | "while" => {
            if rest.is_empty() {
                return Err(format!("`{head}` without a condition"));
            }
            expression(rest)?;
            Ok(Some(if head == "while" { Opener::While } else { Opener::If }))
        }
        "else" => {
            if !rest.is_empty() {
                return Err("`else` takes no condition".into());
            }
            Ok(Some(Opener::Else))
        }
        "pass" | "break" | "continue" | "return" if rest.is_empty() => Ok(None),
        "end" => Err("`end` is not part of the language".into()),
        "user" => {
            if rest == "said something" {
                return Ok(None);
            }
            for alt in rest.split(" or user ") {
                let Some(text) = alt.strip_prefix("said ") else {
                    return Err("expected `user said \"...\"`".into());
                };
                match tokenize(text)?.as_slice() {
                    [Tok::Str(_)] => {}
                    _ => return Err("`user said` takes a string".into()),
                }
            }
            Ok(None)
        }
        "bot" => {
            let Some(value) = rest.strip_prefix("say ") else {
                return Err("expected `bot say`".into());
            };
            expression(value).map(|_| None)
        }
        "await" => expression(text).map(|_| None),
        h if h.starts_with('$') => {
            let Some((lhs, rhs)) = text.split_once(" = ") else {
                return Err("expected assignment".into());
            };
            match tokenize(lhs)?.as_slice() {
                [Tok::Var(_)] => {}
                _ => return Err("assignment target must be a variable".into()),
            }
            if rhs.trim().is_empty() {
                return Err("assignment without a value".into());
            }
            expression(rhs).map(|_| None)
        }
        _ => Err(format!("unknown statement `{head}`")),
    }
}

fn flow_name(name: &str) -> Result<(), String> {
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == ' ') {
        return Err(format!("bad flow name `{name}`"));
    }
    Ok(())
}

/// Checks `text` against the supported subset; returns every error found.
pub fn check_colang(text: &str) -> Result<(), Vec<SyntaxError>> {
    let mut errors = Vec::new();
    // Open blocks: (indent of the opener line, kind).
    let mut stack: Vec<(usize, Opener)> = Vec::new();
    let mut expect_body: Option<usize> = None;
    let mut flows = 0;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut err = |message: String| errors.push(SyntaxError { line, message });
        if raw.contains('\t') {
            err("tabs are not allowed for indentation".into());
            continue;
        }
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if indent % 2 != 0 {
            err(format!("indentation of {indent} is not a multiple of 2"));
            continue;
        }
        if let Some(parent) = expect_body.take() {
            if indent != parent + 2 {
                err("expected an indented block".into());
            }
        } else if let Some(&(top, _)) = stack.last() {
            if indent > top + 2 {
                err("unexpected indentation".into());
            }
        } else if indent > 0 {
            err("unexpected indentation".into());
        }

        let mut closed_if = None;
        while let Some(&(top, kind)) = stack.last() {
            if indent <= top {
                stack.pop();
                if indent == top && matches!(kind, Opener::If) {
                    closed_if = Some(top);
                }
            } else {
                break;
            }
        }

        let head = trimmed.split(' ').next().unwrap_or_default();
        if matches!(head, "elif" | "else") && closed_if != Some(indent) {
            err(format!("`{head}` without a matching `if`"));
        }
        let in_flow = stack.iter().any(|(_, k)| *k == Opener::Flow);
        match statement(trimmed, in_flow) {
            Ok(Some(opener)) => {
                if opener == Opener::Flow {
                    flows += 1;
                }
                stack.push((indent, opener));
                expect_body = Some(indent);
            }
            Ok(None) => {}
            Err(message) => err(message),
        }
    }
    if expect_body.is_some() {
        errors.push(SyntaxError {
            line: text.lines().count(),
            message: "block has no body".into(),
        });
    }
    if flows == 0 && errors.is_empty() {
        errors.push(SyntaxError {
            line: 1,
            message: "program defines no flow".into(),
        });
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
