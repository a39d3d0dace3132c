//! Bracketed tool-call grammar.
//!
//! ```text
//! calls := '[' ( call ( ',' call )* )? ']'
//! call  := dotted_ident '(' ( ident '=' value ( ',' ident '=' value )* )? ')'
//! value := string | number | True | False | None | true | false | null
//!        | '[' ( value ( ',' value )* )? ']'
//!        | '{' ( string ':' value ( ',' string ':' value )* )? '}'
//! ```
//!
//! Strings may be single- or double-quoted. Whitespace is allowed between
//! tokens. Anything else, including trailing text, is a parse error.

use std::fmt::Write as _;

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::{ToolCall, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

const MAX_DEPTH: usize = 64;

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0, depth: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => self.err(format!("expected '{want}', found '{c}'")),
            None => self.err(format!("expected '{want}', found end of input")),
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.pos += 1;
            }
            Some(c) => return self.err(format!("expected identifier, found '{c}'")),
            None => return self.err("expected identifier, found end of input"),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(&self.src[start..self.pos])
    }

    fn dotted_ident(&mut self) -> Result<String, ParseError> {
        let mut name = self.ident()?.to_string();
        while self.peek() == Some('.') {
            self.pos += 1;
            name.push('.');
            // no whitespace inside a dotted name
            match self.peek() {
                Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
                _ => return self.err("expected identifier after '.'"),
            }
            name.push_str(self.ident()?);
        }
        Ok(name)
    }

    fn calls(&mut self) -> Result<Vec<ToolCall>, ParseError> {
        self.expect('[')?;
        let mut out = Vec::new();
        if self.eat(']') {
            return Ok(out);
        }
        loop {
            out.push(self.call()?);
            if self.eat(',') {
                continue;
            }
            self.expect(']')?;
            return Ok(out);
        }
    }

    fn call(&mut self) -> Result<ToolCall, ParseError> {
        let function = self.dotted_ident()?;
        self.expect('(')?;
        let mut arguments = IndexMap::new();
        if !self.eat(')') {
            loop {
                self.skip_ws();
                let at = self.pos;
                let name = self.ident()?.to_string();
                self.expect('=')?;
                let value = self.value()?;
                if arguments.insert(name.clone(), value).is_some() {
                    return Err(ParseError {
                        position: at,
                        message: format!("duplicate argument '{name}'"),
                    });
                }
                if self.eat(',') {
                    continue;
                }
                self.expect(')')?;
                break;
            }
        }
        Ok(ToolCall { function, arguments })
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('"') | Some('\'') => self.string().map(Value::Str),
            Some('[') => self.nested(|p| p.list()),
            Some('{') => self.nested(|p| p.map()),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let word = self.ident()?;
                match word {
                    "True" | "true" => Ok(Value::Bool(true)),
                    "False" | "false" => Ok(Value::Bool(false)),
                    "None" | "null" => Ok(Value::Null),
                    other => {
                        self.pos -= other.len();
                        self.err(format!("unexpected bare word '{other}'"))
                    }
                }
            }
            Some(c) => self.err(format!("unexpected '{c}' where a value was expected")),
            None => self.err("expected value, found end of input"),
        }
    }

    fn nested(&mut self, f: impl FnOnce(&mut Self) -> Result<Value, ParseError>) -> Result<Value, ParseError> {
        if self.depth >= MAX_DEPTH {
            return self.err("value nesting too deep");
        }
        self.depth += 1;
        let v = f(self);
        self.depth -= 1;
        v
    }

    fn list(&mut self) -> Result<Value, ParseError> {
        self.expect('[')?;
        let mut items = Vec::new();
        if self.eat(']') {
            return Ok(Value::List(items));
        }
        loop {
            items.push(self.value()?);
            if self.eat(',') {
                continue;
            }
            self.expect(']')?;
            return Ok(Value::List(items));
        }
    }

    fn map(&mut self) -> Result<Value, ParseError> {
        self.expect('{')?;
        let mut m = IndexMap::new();
        if self.eat('}') {
            return Ok(Value::Map(m));
        }
        loop {
            self.skip_ws();
            let at = self.pos;
            let key = match self.peek() {
                Some('"') | Some('\'') => self.string()?,
                _ => return self.err("expected quoted map key"),
            };
            self.expect(':')?;
            let value = self.value()?;
            if m.insert(key.clone(), value).is_some() {
                return Err(ParseError {
                    position: at,
                    message: format!("duplicate map key '{key}'"),
                });
            }
            if self.eat(',') {
                continue;
            }
            self.expect('}')?;
            return Ok(Value::Map(m));
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let quote = self.bump().expect("caller checked quote");
        let mut out = String::new();
        loop {
            let at = self.pos;
            match self.bump() {
                None => return self.err("unterminated string"),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('0') => out.push('\0'),
                    Some('\\') => out.push('\\'),
                    Some('"') => out.push('"'),
                    Some('\'') => out.push('\''),
                    Some('/') => out.push('/'),
                    Some('u') => {
                        let hex = self.src.get(self.pos..self.pos + 4).unwrap_or("");
                        let code = u32::from_str_radix(hex, 16)
                            .ok()
                            .filter(|_| hex.len() == 4)
                            .and_then(char::from_u32);
                        match code {
                            Some(ch) => {
                                out.push(ch);
                                self.pos += 4;
                            }
                            None => {
                                self.pos = at;
                                return self.err("invalid \\u escape");
                            }
                        }
                    }
                    _ => {
                        self.pos = at;
                        return self.err("invalid escape sequence");
                    }
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        let mut is_float = false;
        let mut digits = 0;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => {
                    digits += 1;
                    self.pos += 1;
                }
                '.' | 'e' | 'E' => {
                    is_float = true;
                    self.pos += 1;
                    if (c == 'e' || c == 'E') && matches!(self.peek(), Some('-') | Some('+')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let text = &self.src[start..self.pos];
        if digits == 0 {
            self.pos = start;
            return self.err(format!("malformed number '{text}'"));
        }
        if is_float {
            match text.parse::<f64>() {
                Ok(f) if f.is_finite() => Ok(Value::Float(f)),
                _ => {
                    self.pos = start;
                    self.err(format!("malformed number '{text}'"))
                }
            }
        } else {
            match text.parse::<i64>() {
                Ok(i) => Ok(Value::Int(i)),
                Err(_) => {
                    self.pos = start;
                    self.err(format!("integer out of range '{text}'"))
                }
            }
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => self.err(format!("trailing input starting with '{c}'")),
        }
    }
}

/// Parses a complete bracketed call list. The whole input must be consumed.
pub fn parse_tool_calls(text: &str) -> Result<Vec<ToolCall>, ParseError> {
    let mut p = Parser::new(text);
    let calls = p.calls()?;
    p.finish()?;
    Ok(calls)
}

/// Parses a comma-separated run of calls without the enclosing brackets,
/// e.g. `cd(folder="x"), ls()`. Used by the heuristic repairer.
pub fn parse_bare_calls(text: &str) -> Result<Vec<ToolCall>, ParseError> {
    let mut p = Parser::new(text);
    let mut out = vec![p.call()?];
    while p.eat(',') {
        out.push(p.call()?);
    }
    p.finish()?;
    Ok(out)
}

/// Parses a bracketed call list at the start of `text`, allowing anything
/// after it. Returns the calls and the number of bytes consumed.
pub fn parse_tool_calls_prefix(text: &str) -> Result<(Vec<ToolCall>, usize), ParseError> {
    let mut p = Parser::new(text);
    let calls = p.calls()?;
    Ok((calls, p.pos))
}

/// Parses comma-separated bare calls at the start of `text`, stopping at
/// the first byte that cannot continue the run.
pub fn parse_bare_calls_prefix(text: &str) -> Result<(Vec<ToolCall>, usize), ParseError> {
    let mut p = Parser::new(text);
    let mut out = vec![p.call()?];
    let mut end = p.pos;
    while p.eat(',') {
        match p.call() {
            Ok(c) => {
                out.push(c);
                end = p.pos;
            }
            Err(_) => break,
        }
    }
    Ok((out, end))
}

/// Parses a single value literal.
pub fn parse_value(text: &str) -> Result<Value, ParseError> {
    let mut p = Parser::new(text);
    let v = p.value()?;
    p.finish()?;
    Ok(v)
}

/// Parses a sequence of bracketed batches separated by commas or whitespace,
/// e.g. `[a()], [b(x=1)]`. Used for multi-batch golden answers.
pub fn parse_call_batches(text: &str) -> Result<Vec<Vec<ToolCall>>, ParseError> {
    let mut p = Parser::new(text);
    let mut out = vec![p.calls()?];
    loop {
        let save = p.pos;
        let had_comma = p.eat(',');
        p.skip_ws();
        if p.peek() == Some('[') {
            out.push(p.calls()?);
        } else {
            p.pos = save;
            if had_comma {
                p.eat(',');
                return p.err("expected '[' after ','");
            }
            break;
        }
    }
    p.finish()?;
    Ok(out)
}

pub fn render_value(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Str(s) => write_string(out, s),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(f) => out.push_str(&render_float(*f)),
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Null => out.push_str("None"),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Map(m) => {
            out.push('{');
            for (i, (k, item)) in m.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(out, k);
                out.push_str(": ");
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

/// Shortest round-tripping decimal, always with a fractional part so it
/// re-parses as a float.
pub fn render_float(f: f64) -> String {
    let s = format!("{f:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

pub fn render_call(call: &ToolCall) -> String {
    let mut out = String::new();
    out.push_str(&call.function);
    out.push('(');
    for (i, (name, v)) in call.arguments.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(name);
        out.push('=');
        write_value(&mut out, v);
    }
    out.push(')');
    out
}

/// Canonical bracketed form: double-quoted strings, Python literals.
pub fn render_tool_calls(calls: &[ToolCall]) -> String {
    let inner: Vec<String> = calls.iter().map(render_call).collect();
    format!("[{}]", inner.join(", "))
}
