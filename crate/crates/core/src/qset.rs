//! The `.qset` text format.
//!
//! ```text
//! # comment
//! qset v1
//! name: s3
//! dims: 6 6
//! split: 1 = 2 3
//! state phi3: |1,0> - |1,4> - |2,0> + |2,4>
//! state x: 1/sqrt(2)*|0,0> + (0,0.5)*|0,1>
//! ```
//!
//! Coefficients are decimals, `p/q` rationals, `(re,im)` pairs or
//! `1/sqrt(n)`. States are normalized on load.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{c, re, CVector, C64};
use crate::state::{Ket, PartySpace, StateSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ErrorCode {
    #[serde(rename = "E_SYNTAX")]
    Syntax,
    #[serde(rename = "E_DIM")]
    Dim,
    #[serde(rename = "E_SPLIT")]
    Split,
    #[serde(rename = "E_EMPTY_STATE")]
    EmptyState,
    #[serde(rename = "E_DUP_LABEL")]
    DupLabel,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCode::Syntax => "E_SYNTAX",
            ErrorCode::Dim => "E_DIM",
            ErrorCode::Split => "E_SPLIT",
            ErrorCode::EmptyState => "E_EMPTY_STATE",
            ErrorCode::DupLabel => "E_DUP_LABEL",
        })
    }
}

#[derive(Clone, Debug, Error, Serialize)]
#[error("{code} at {line}:{col} near `{lexeme}`: {message}")]
pub struct ParseError {
    pub code: ErrorCode,
    pub line: usize,
    pub col: usize,
    pub lexeme: String,
    pub message: String,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
    /// Byte offset of `text` inside the original line.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize, base: usize) -> Self {
        Self { text, pos: 0, line, base }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, ch: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(ch) {
            self.pos += ch.len_utf8();
            true
        } else {
            false
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }

    fn col(&self) -> usize {
        self.base + self.text[..self.pos].chars().count() + 1
    }

    fn lexeme(&self) -> String {
        let r = self.rest();
        let end = r.find(char::is_whitespace).unwrap_or(r.len()).max(r.chars().next().map_or(0, char::len_utf8));
        if r.is_empty() {
            "<end of line>".into()
        } else {
            r[..end].to_string()
        }
    }

    fn err(&self, code: ErrorCode, message: impl Into<String>) -> ParseError {
        ParseError { code, line: self.line, col: self.col(), lexeme: self.lexeme(), message: message.into() }
    }

    fn expect(&mut self, ch: char) -> Result<(), ParseError> {
        if self.eat(ch) {
            Ok(())
        } else {
            Err(self.err(ErrorCode::Syntax, format!("expected `{ch}`")))
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let r = self.rest();
        let mut end = 0;
        let bytes = r.as_bytes();
        while end < bytes.len() {
            let b = bytes[end];
            let ok = b.is_ascii_digit()
                || b == b'.'
                || ((b == b'+' || b == b'-') && (end == 0 || matches!(bytes[end - 1], b'e' | b'E')))
                || ((b == b'e' || b == b'E') && end > 0);
            if !ok {
                break;
            }
            end += 1;
        }
        let tok = &r[..end];
        match tok.parse::<f64>() {
            Ok(x) if x.is_finite() => {
                self.pos += end;
                Ok(x)
            }
            _ => Err(self.err(ErrorCode::Syntax, "expected a number")),
        }
    }

    fn uint(&mut self) -> Result<usize, ParseError> {
        self.skip_ws();
        let r = self.rest();
        let end = r.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(r.len());
        match r[..end].parse::<usize>() {
            Ok(x) => {
                self.pos += end;
                Ok(x)
            }
            Err(_) => Err(self.err(ErrorCode::Syntax, "expected a non-negative integer")),
        }
    }

    /// decimal | p/q | 1/sqrt(n) | (re,im)
    fn coefficient(&mut self) -> Result<C64, ParseError> {
        self.skip_ws();
        if self.eat('(') {
            let r = self.number()?;
            self.expect(',')?;
            let i = self.number()?;
            self.expect(')')?;
            return Ok(c(r, i));
        }
        let num = self.number()?;
        if self.eat('/') {
            self.skip_ws();
            if self.rest().starts_with("sqrt") {
                self.pos += 4;
                self.expect('(')?;
                let n = self.number()?;
                if n <= 0.0 {
                    return Err(self.err(ErrorCode::Syntax, "sqrt argument must be positive"));
                }
                self.expect(')')?;
                return Ok(re(num / n.sqrt()));
            }
            let den = self.number()?;
            if den == 0.0 {
                return Err(self.err(ErrorCode::Syntax, "zero denominator"));
            }
            return Ok(re(num / den));
        }
        Ok(re(num))
    }

    /// `|i0,i1,...>` after the `|`.
    fn ket_indices(&mut self, dims: &[usize]) -> Result<Vec<usize>, ParseError> {
        let mut idx = Vec::new();
        loop {
            let col_before = self.pos;
            let i = self.uint()?;
            let p = idx.len();
            if p >= dims.len() {
                self.pos = col_before;
                return Err(self.err(ErrorCode::Dim, format!("more indices than the {} declared parties", dims.len())));
            }
            if i >= dims[p] {
                self.pos = col_before;
                self.skip_ws();
                return Err(self.err(ErrorCode::Dim, format!("index {i} out of range for party {p} (dim {})", dims[p])));
            }
            idx.push(i);
            if self.eat(',') {
                continue;
            }
            self.expect('>')?;
            break;
        }
        if idx.len() != dims.len() {
            return Err(self.err(ErrorCode::Dim, format!("{} indices for {} parties", idx.len(), dims.len())));
        }
        Ok(idx)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_qset(text: &str) -> Result<StateSet, ParseError> {
    let mut header_seen = false;
    let mut dims: Option<Vec<usize>> = None;
    let mut splits: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    let mut name = String::from("unnamed");
    let mut raw_states: Vec<(String, Vec<(C64, Vec<usize>)>, usize, usize)> = Vec::new();
    let mut last_line = 0;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        last_line = line_no;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let body = body.trim();
        let col0 = raw[..indent].chars().count();
        if !header_seen {
            let mut parts = body.split_whitespace();
            if parts.next() == Some("qset") && parts.next() == Some("v1") && parts.next().is_none() {
                header_seen = true;
                continue;
            }
            let cur = Cursor::new(body, line_no, col0);
            return Err(cur.err(ErrorCode::Syntax, "first significant line must be `qset v1`"));
        }
        let (key, rest) = match body.split_once(|ch: char| ch == ':' || ch.is_whitespace()) {
            Some(kv) => kv,
            None => {
                let cur = Cursor::new(body, line_no, col0);
                return Err(cur.err(ErrorCode::Syntax, "unrecognized line"));
            }
        };
        let rest_off = col0 + body[..key.len() + 1].chars().count();
        match key {
            "dims" if body.as_bytes()[key.len()] == b':' => {
                let mut cur = Cursor::new(rest, line_no, rest_off);
                let mut ds = Vec::new();
                while !cur.at_end() {
                    let d = cur.uint()?;
                    if d < 2 {
                        return Err(cur.err(ErrorCode::Dim, format!("party dimension {d} < 2")));
                    }
                    ds.push(d);
                }
                if ds.is_empty() {
                    return Err(cur.err(ErrorCode::Syntax, "`dims:` needs at least one dimension"));
                }
                if dims.is_some() {
                    return Err(Cursor::new(body, line_no, col0).err(ErrorCode::Syntax, "duplicate `dims:` line"));
                }
                dims = Some(ds);
            }
            "split" if body.as_bytes()[key.len()] == b':' => {
                let mut cur = Cursor::new(rest, line_no, rest_off);
                let party = cur.uint()?;
                cur.expect('=')?;
                let mut fs = Vec::new();
                while !cur.at_end() {
                    fs.push(cur.uint()?);
                }
                splits.push((party, fs, line_no));
            }
            "name" if body.as_bytes()[key.len()] == b':' => {
                name = rest.trim().to_string();
            }
            "state" => {
                let ds = match &dims {
                    Some(d) => d.clone(),
                    None => {
                        return Err(Cursor::new(body, line_no, col0)
                            .err(ErrorCode::Syntax, "`dims:` must precede the first state"))
                    }
                };
                let (label, terms_txt) = match rest.split_once(':') {
                    Some(x) => x,
                    None => {
                        return Err(Cursor::new(rest, line_no, rest_off).err(ErrorCode::Syntax, "expected `state <label>: <terms>`"))
                    }
                };
                let label = label.trim();
                if label.is_empty() || label.contains(char::is_whitespace) {
                    return Err(Cursor::new(rest, line_no, rest_off).err(ErrorCode::Syntax, "labels are nonempty and contain no whitespace"));
                }
                let terms_off = rest_off + rest[..rest.len() - terms_txt.len()].chars().count();
                let mut cur = Cursor::new(terms_txt, line_no, terms_off);
                let terms = parse_terms(&mut cur, &ds)?;
                raw_states.push((label.to_string(), terms, line_no, terms_off));
            }
            _ => {
                let cur = Cursor::new(body, line_no, col0);
                return Err(cur.err(ErrorCode::Syntax, format!("unknown directive `{key}`")));
            }
        }
    }

    let eof = |msg: &str| ParseError {
        code: ErrorCode::Syntax,
        line: last_line.max(1),
        col: 1,
        lexeme: "<end of input>".into(),
        message: msg.into(),
    };
    if !header_seen {
        return Err(eof("missing `qset v1` header"));
    }
    let ds = dims.ok_or_else(|| eof("missing `dims:` line"))?;
    if raw_states.is_empty() {
        return Err(eof("no states"));
    }
    let mut space = PartySpace::new(ds.clone()).map_err(|e| eof(&e.to_string()))?;
    for (party, fs, line) in splits {
        let bad = |msg: String| ParseError { code: ErrorCode::Split, line, col: 1, lexeme: format!("{party} = {fs:?}"), message: msg };
        if party >= ds.len() {
            return Err(bad(format!("no party {party}")));
        }
        space = space.with_split(party, fs.clone()).map_err(|e| bad(e.to_string()))?;
    }

    let mut seen = std::collections::HashSet::new();
    let mut kets = Vec::new();
    for (label, terms, line, col) in raw_states {
        if !seen.insert(label.clone()) {
            return Err(ParseError { code: ErrorCode::DupLabel, line, col, lexeme: label, message: "duplicate state label".into() });
        }
        let mut amps = CVector::zeros(space.total_dim());
        for (coef, idx) in &terms {
            amps[space.flat_index(idx).expect("indices validated")] += coef;
        }
        let ket = Ket::new(space.clone(), amps, label.clone()).map_err(|_| ParseError {
            code: ErrorCode::EmptyState,
            line,
            col,
            lexeme: label.clone(),
            message: "state has zero norm".into(),
        })?;
        kets.push(ket);
    }
    Ok(StateSet::new(space, kets, name).expect("labels and dims validated"))
}

fn parse_terms(cur: &mut Cursor<'_>, dims: &[usize]) -> Result<Vec<(C64, Vec<usize>)>, ParseError> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    if cur.eat('-') {
        sign = -1.0;
    } else {
        cur.eat('+');
    }
    loop {
        cur.skip_ws();
        let coef = if cur.eat('|') {
            re(1.0)
        } else {
            let k = cur.coefficient()?;
            cur.expect('*')?;
            cur.expect('|')?;
            k
        };
        let idx = cur.ket_indices(dims)?;
        terms.push((coef * sign, idx));
        if cur.at_end() {
            break;
        }
        if cur.eat('+') {
            sign = 1.0;
        } else if cur.eat('-') {
            sign = -1.0;
        } else {
            return Err(cur.err(ErrorCode::Syntax, "expected `+`, `-` or end of line"));
        }
    }
    if terms.is_empty() {
        return Err(cur.err(ErrorCode::EmptyState, "state has no terms"));
    }
    Ok(terms)
}

fn sanitize_label(label: &str) -> String {
    label.chars().map(|ch| if ch == ':' || ch.is_whitespace() || ch == '#' { '_' } else { ch }).collect()
}

fn fmt_f64(x: f64) -> String {
    // 17 significant digits; normalize negative zero.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// Canonical, byte-deterministic serialization.
pub fn serialize_qset(s: &StateSet) -> String {
    let mut out = String::from("qset v1\n");
    let name = s.name().replace(['\n', '#'], " ");
    if !name.trim().is_empty() {
        let _ = writeln!(out, "name: {}", name.trim());
    }
    let dims = s.space().party_dims();
    let _ = writeln!(out, "dims: {}", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    for (p, fs) in s.space().sub_splits() {
        let _ = writeln!(out, "split: {p} = {}", fs.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    }
    for k in s.states() {
        let mut terms = Vec::new();
        for (flat, z) in k.amplitudes().as_slice().iter().enumerate() {
            if *z == C64::default() {
                continue;
            }
            let idx = s.space().multi_index(flat);
            terms.push(format!(
                "({},{})*|{}>",
                fmt_f64(z.re),
                fmt_f64(z.im),
                idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            ));
        }
        let _ = writeln!(out, "state {}: {}", sanitize_label(k.label()), terms.join(" + "));
    }
    out
}
