//! Hand-written lexer and recursive-descent parser for the query language.
//!
//! ```text
//! query     := FROM ident [WHERE predicate {AND predicate}]
//!              [GROUP BY groupkey {"," groupkey}]
//!              SELECT aggregate {"," aggregate}
//! predicate := ident "." ident "." ident comparator literal
//! groupkey  := ident "." ident
//! aggregate := ("sum"|"count"|"avg"|"min"|"max") "(" (ident | "*") ")"
//! literal   := number | 'text' | "text"
//! ```
//!
//! Keywords and function names are case-insensitive; identifiers are not.
//! Keywords are reserved and cannot name schema elements.

use std::fmt;

use thiserror::Error;

use super::ast::{AggregateFunction, AggregateSpec, AnalyticQuery, Comparator, GroupKey, Literal, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SyntaxError {
    /// Byte offset into the query text.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at position {}: {}", self.position, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Dot,
    Comma,
    LParen,
    RParen,
    Star,
    Cmp(Comparator),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Number(s) => format!("number {s}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Star => "'*'".into(),
            Tok::Cmp(c) => format!("'{}'", c.symbol()),
            Tok::End => "end of query".into(),
        }
    }
}

fn err(position: usize, message: impl Into<String>) -> SyntaxError {
    SyntaxError {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'.' => {
                out.push((Tok::Dot, start));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, start));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, start));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, start));
                i += 1;
            }
            b'*' => {
                out.push((Tok::Star, start));
                i += 1;
            }
            b'=' => {
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
                out.push((Tok::Cmp(Comparator::Eq), start));
            }
            b'!' => {
                if bytes.get(i + 1) != Some(&b'=') {
                    return Err(err(start, "expected '!='"));
                }
                i += 2;
                out.push((Tok::Cmp(Comparator::Ne), start));
            }
            b'<' => {
                let (cmp, len) = match bytes.get(i + 1) {
                    Some(b'=') => (Comparator::Le, 2),
                    Some(b'>') => (Comparator::Ne, 2),
                    _ => (Comparator::Lt, 1),
                };
                i += len;
                out.push((Tok::Cmp(cmp), start));
            }
            b'>' => {
                let (cmp, len) = match bytes.get(i + 1) {
                    Some(b'=') => (Comparator::Ge, 2),
                    _ => (Comparator::Gt, 1),
                };
                i += len;
                out.push((Tok::Cmp(cmp), start));
            }
            b'\'' | b'"' => {
                let quote = c;
                let mut value = String::new();
                i += 1;
                loop {
                    match text[i..].find(quote as char) {
                        None => return Err(err(start, "unterminated string literal")),
                        Some(off) => {
                            value.push_str(&text[i..i + off]);
                            i += off + 1;
                            if bytes.get(i) == Some(&quote) {
                                value.push(quote as char);
                                i += 1;
                            } else {
                                break;
                            }
                        }
                    }
                }
                out.push((Tok::Str(value), start));
            }
            b'-' | b'+' | b'0'..=b'9' => {
                i = scan_number(bytes, i).ok_or_else(|| err(start, "malformed number"))?;
                out.push((Tok::Number(text[start..i].to_owned()), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'-') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_owned()), start));
            }
            _ => {
                let ch = text[start..].chars().next().unwrap();
                return Err(err(start, format!("unexpected character {ch:?}")));
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

fn scan_number(bytes: &[u8], mut i: usize) -> Option<usize> {
    if matches!(bytes[i], b'-' | b'+') {
        i += 1;
    }
    let digits = |mut i: usize| {
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        (i > start).then_some(i)
    };
    i = digits(i)?;
    if bytes.get(i) == Some(&b'.') {
        i = digits(i + 1)?;
    }
    if matches!(bytes.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(bytes.get(j), Some(b'-' | b'+')) {
            j += 1;
        }
        i = digits(j)?;
    }
    Some(i)
}

const KEYWORDS: [&str; 6] = ["FROM", "WHERE", "AND", "GROUP", "BY", "SELECT"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        err(self.offset(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(kw))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                Err(err(self.offset(), format!("expected {what}, found keyword {}", s.to_ascii_uppercase())))
            }
            Tok::Ident(_) => match self.bump().0 {
                Tok::Ident(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.unexpected(what)),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn predicate(&mut self) -> Result<Predicate, SyntaxError> {
        let dimension = self.ident("dimension name")?;
        self.expect(Tok::Dot)?;
        let level = self.ident("level name")?;
        self.expect(Tok::Dot)?;
        let attribute = self.ident("attribute name")?;
        let comparator = match self.peek() {
            Tok::Cmp(c) => {
                let c = *c;
                self.bump();
                c
            }
            _ => return Err(self.unexpected("comparison operator")),
        };
        let literal = match self.bump() {
            (Tok::Number(n), _) => Literal::number(n),
            (Tok::Str(s), _) => Literal::quoted(s),
            (other, at) => return Err(err(at, format!("expected literal, found {}", other.describe()))),
        };
        Ok(Predicate {
            dimension,
            level,
            attribute,
            comparator,
            literal,
        })
    }

    fn group_key(&mut self) -> Result<GroupKey, SyntaxError> {
        let dimension = self.ident("dimension name")?;
        self.expect(Tok::Dot)?;
        let level = self.ident("level name")?;
        Ok(GroupKey { dimension, level })
    }

    fn aggregate(&mut self) -> Result<AggregateSpec, SyntaxError> {
        let at = self.offset();
        let name = self.ident("aggregate function")?;
        let function = AggregateFunction::from_name(&name)
            .ok_or_else(|| err(at, format!("unknown aggregate function {name:?}")))?;
        self.expect(Tok::LParen)?;
        let measure = match self.peek() {
            Tok::Star => {
                if function != AggregateFunction::Count {
                    return Err(err(self.offset(), format!("{function}(*) is not allowed; only count(*)")));
                }
                self.bump();
                None
            }
            _ => Some(self.ident("measure name or '*'")?),
        };
        self.expect(Tok::RParen)?;
        Ok(AggregateSpec { function, measure })
    }

    fn query(&mut self) -> Result<AnalyticQuery, SyntaxError> {
        self.keyword("FROM")?;
        let fact_class = self.ident("fact class name")?;
        let mut predicates = Vec::new();
        if self.at_keyword("WHERE") {
            self.bump();
            predicates.push(self.predicate()?);
            while self.at_keyword("AND") {
                self.bump();
                predicates.push(self.predicate()?);
            }
        }
        let mut group_by = Vec::new();
        if self.at_keyword("GROUP") {
            self.bump();
            self.keyword("BY")?;
            group_by.push(self.group_key()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                group_by.push(self.group_key()?);
            }
        }
        self.keyword("SELECT")?;
        let mut aggregates = vec![self.aggregate()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            aggregates.push(self.aggregate()?);
        }
        self.end()?;
        Ok(AnalyticQuery {
            fact_class,
            predicates,
            group_by,
            aggregates,
        })
    }

    fn end(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::End => Ok(()),
            _ => Err(self.unexpected("end of query")),
        }
    }
}

pub fn parse_query(text: &str) -> Result<AnalyticQuery, SyntaxError> {
    Parser { toks: lex(text)?, pos: 0 }.query()
}

/// Parses a single `dimension.level.attribute <op> literal` condition.
pub fn parse_predicate(text: &str) -> Result<Predicate, SyntaxError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let pred = p.predicate()?;
    p.end()?;
    Ok(pred)
}
