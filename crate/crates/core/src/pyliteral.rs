//! Reader for the Python literal subset that agents write in their code
//! blocks: dicts, lists, tuples, sets, strings, numbers, `True`/`False`/`None`.
//! Nothing is executed; code is scanned for `name = <literal>` statements.

use serde_json::{Map, Number, Value as Json};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at offset {offset}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

struct Reader<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, LiteralError> {
        Err(LiteralError { offset: self.pos, message: message.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'\\' if self.src.get(self.pos + 1) == Some(&b'\n') => self.pos += 2,
                b'#' => {
                    while self.peek().is_some_and(|c| c != b'\n') {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Result<Json, LiteralError> {
        self.skip_ws();
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'[') => {
                self.pos += 1;
                Ok(Json::Array(self.sequence(b']')?.0))
            }
            Some(b'(') => {
                self.pos += 1;
                let (items, trailing_comma) = self.sequence(b')')?;
                if items.len() == 1 && !trailing_comma {
                    Ok(items.into_iter().next().expect("one item"))
                } else {
                    Ok(Json::Array(items))
                }
            }
            Some(b'{') => {
                self.pos += 1;
                self.dict_or_set()
            }
            Some(b'\'' | b'"') => self.strings(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let word = &self.text[start..self.pos];
                match word {
                    "True" => Ok(Json::Bool(true)),
                    "False" => Ok(Json::Bool(false)),
                    "None" => Ok(Json::Null),
                    "r" | "u" | "R" | "U" if matches!(self.peek(), Some(b'\'' | b'"')) => self.strings(),
                    _ => {
                        self.pos = start;
                        self.err(format!("`{word}` is not a literal"))
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' => self.number(),
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
        }
    }

    fn sequence(&mut self, close: u8) -> Result<(Vec<Json>, bool), LiteralError> {
        let mut items = Vec::new();
        let mut trailing = false;
        loop {
            if self.eat(close) {
                return Ok((items, trailing));
            }
            items.push(self.value()?);
            trailing = self.eat(b',');
            if !trailing {
                if self.eat(close) {
                    return Ok((items, false));
                }
                return self.err(format!("expected `,` or `{}`", close as char));
            }
        }
    }

    fn dict_or_set(&mut self) -> Result<Json, LiteralError> {
        if self.eat(b'}') {
            return Ok(Json::Object(Map::new()));
        }
        let first = self.value()?;
        if !self.eat(b':') {
            let mut items = vec![first];
            while self.eat(b',') {
                if self.eat(b'}') {
                    return Ok(Json::Array(items));
                }
                items.push(self.value()?);
            }
            if !self.eat(b'}') {
                return self.err("expected `}`");
            }
            return Ok(Json::Array(items));
        }
        let mut map = Map::new();
        let mut key = first;
        loop {
            let v = self.value()?;
            map.insert(key_text(&key), v);
            if !self.eat(b',') {
                if self.eat(b'}') {
                    return Ok(Json::Object(map));
                }
                return self.err("expected `,` or `}`");
            }
            if self.eat(b'}') {
                return Ok(Json::Object(map));
            }
            key = self.value()?;
            if !self.eat(b':') {
                return self.err("expected `:`");
            }
        }
    }

    /// One or more adjacent string literals, concatenated.
    fn strings(&mut self) -> Result<Json, LiteralError> {
        let mut out = self.string()?;
        loop {
            let save = self.pos;
            self.skip_ws();
            let raw_prefix = matches!(self.peek(), Some(b'r' | b'R')) && matches!(self.src.get(self.pos + 1), Some(b'\'' | b'"'));
            if matches!(self.peek(), Some(b'\'' | b'"')) || raw_prefix {
                out.push_str(&self.string()?);
            } else {
                self.pos = save;
                return Ok(Json::String(out));
            }
        }
    }

    fn string(&mut self) -> Result<String, LiteralError> {
        let mut raw = false;
        if let Some(c @ (b'r' | b'R' | b'u' | b'U')) = self.peek() {
            raw = c == b'r' || c == b'R';
            self.pos += 1;
        }
        let quote = self.peek().expect("caller saw a quote");
        let triple = self.src[self.pos..].starts_with(&[quote; 3]);
        self.pos += if triple { 3 } else { 1 };
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else { return self.err("unterminated string") };
            if c == quote && (!triple || self.src[self.pos..].starts_with(&[quote; 3])) {
                self.pos += if triple { 3 } else { 1 };
                return Ok(out);
            }
            if c == b'\n' && !triple {
                return self.err("newline in single-quoted string");
            }
            if c == b'\\' && !raw {
                self.pos += 1;
                let Some(e) = self.peek() else { return self.err("dangling escape") };
                self.pos += 1;
                match e {
                    b'n' => out.push('\n'),
                    b't' => out.push('\t'),
                    b'r' => out.push('\r'),
                    b'0' => out.push('\0'),
                    b'\\' => out.push('\\'),
                    b'\'' => out.push('\''),
                    b'"' => out.push('"'),
                    b'\n' => {}
                    b'x' | b'u' | b'U' => {
                        let len = match e {
                            b'x' => 2,
                            b'u' => 4,
                            _ => 8,
                        };
                        let hex = self.text.get(self.pos..self.pos + len).unwrap_or_default();
                        let ch = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
                        match ch {
                            Some(ch) if hex.len() == len => out.push(ch),
                            _ => return self.err("bad escape sequence"),
                        }
                        self.pos += len;
                    }
                    other => {
                        out.push('\\');
                        out.push(other as char);
                    }
                }
                continue;
            }
            // copy one UTF-8 character
            let ch = self.text[self.pos..].chars().next().expect("in bounds");
            out.push(ch);
            self.pos += ch.len_utf8();
        }
    }

    fn number(&mut self) -> Result<Json, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-' | b'+')) {
            self.pos += 1;
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, b'.' | b'_'))
            || (matches!(self.peek(), Some(b'-' | b'+')) && matches!(self.src.get(self.pos - 1), Some(b'e' | b'E')))
        {
            self.pos += 1;
        }
        let text: String = self.text[start..self.pos].chars().filter(|c| *c != '_').collect();
        if let Ok(i) = text.parse::<i64>() {
            return Ok(Json::Number(i.into()));
        }
        match text.parse::<f64>().ok().and_then(Number::from_f64) {
            Some(n) => Ok(Json::Number(n)),
            None => {
                self.pos = start;
                self.err(format!("bad number `{text}`"))
            }
        }
    }
}

fn key_text(key: &Json) -> String {
    match key {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a literal at the start of `src`; returns it with the byte offset
/// just past it.
pub fn parse_prefix(src: &str) -> Result<(Json, usize), LiteralError> {
    let mut r = Reader { src: src.as_bytes(), text: src, pos: 0 };
    let v = r.value()?;
    Ok((v, r.pos))
}

/// Parses `src` as exactly one literal.
pub fn parse_literal(src: &str) -> Result<Json, LiteralError> {
    let mut r = Reader { src: src.as_bytes(), text: src, pos: 0 };
    let v = r.value()?;
    r.skip_ws();
    if r.pos != src.len() {
        return r.err("trailing input after literal");
    }
    Ok(v)
}

/// `name = <rhs>` found at the start of a line; `path` holds literal
/// subscripts, so `target['current_value'] = 1` has path `["current_value"]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub name: String,
    pub path: Vec<String>,
    pub line: usize,
    /// `None` when the right-hand side is not a literal at all (a call, a
    /// variable); `Some(Err)` when it looks like a literal but is malformed.
    pub value: Option<Result<Json, LiteralError>>,
}

fn starts_literal(rest: &str) -> bool {
    let t = rest.trim_start();
    let Some(c) = t.chars().next() else { return false };
    if matches!(c, '[' | '{' | '(' | '\'' | '"' | '-' | '+' | '.') || c.is_ascii_digit() {
        return true;
    }
    let word: String = t.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    let after = t[word.len()..].chars().next();
    matches!(word.as_str(), "True" | "False" | "None") && !matches!(after, Some('(' | '.' | '['))
        || matches!(word.as_str(), "r" | "u" | "R" | "U") && matches!(after, Some('\'' | '"'))
}

/// Scans code for assignment statements. Multi-line literals are consumed
/// whole so statements inside them are not reported.
pub fn scan_assignments(code: &str) -> Vec<Assignment> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < code.len() {
        let line_end = code[offset..].find('\n').map_or(code.len(), |i| offset + i);
        let line = &code[offset..line_end];
        let line_no = code[..offset].matches('\n').count() + 1;
        let mut next = line_end + 1;
        if let Some((name, path, rhs_at)) = assignment_head(line) {
            let rhs = &code[offset + rhs_at..];
            let value = if starts_literal(rhs) {
                let parsed = parse_prefix(rhs);
                if let Ok((_, used)) = &parsed {
                    let end = offset + rhs_at + used;
                    next = code[end..].find('\n').map_or(code.len(), |i| end + i + 1);
                }
                Some(parsed.map(|(v, _)| v))
            } else {
                None
            };
            out.push(Assignment { name, path, line: line_no, value });
        }
        offset = next;
    }
    out
}

/// `ident(['key'])* =` (not `==`); returns the name, subscripts and the
/// offset of the right-hand side.
fn assignment_head(line: &str) -> Option<(String, Vec<String>, usize)> {
    let trimmed = line.trim_start();
    let indent = line.len() - trimmed.len();
    let name: String = trimmed.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    if name.is_empty() || name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut pos = name.len();
    let mut path = Vec::new();
    loop {
        let rest = &trimmed[pos..];
        let ws = rest.len() - rest.trim_start().len();
        if rest.trim_start().starts_with('[') {
            let inner_start = pos + ws + 1;
            let (key, used) = parse_prefix(&trimmed[inner_start..]).ok()?;
            let after = &trimmed[inner_start + used..];
            let close = after.find(']')?;
            if !after[..close].trim().is_empty() {
                return None;
            }
            path.push(key_text(&key));
            pos = inner_start + used + close + 1;
        } else {
            pos += ws;
            break;
        }
    }
    let rest = &trimmed[pos..];
    if rest.starts_with('=') && !rest.starts_with("==") {
        Some((name, path, indent + pos + 1))
    } else {
        None
    }
}

/// Whether `code` calls `name(` outside comments and strings (approximate:
/// comment lines are ignored).
pub fn calls_function(code: &str, name: &str) -> bool {
    code.lines().filter(|l| !l.trim_start().starts_with('#')).any(|l| {
        l.match_indices(name).any(|(i, _)| {
            let before_ok = l[..i].chars().last().is_none_or(|c| !(c.is_alphanumeric() || c == '_' || c == '.'));
            before_ok && l[i + name.len()..].trim_start().starts_with('(')
        })
    })
}
