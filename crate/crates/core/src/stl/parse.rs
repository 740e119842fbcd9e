//! Recursive-descent parser for the text syntax.
//!
//! ```text
//! phi := PRED | "!" phi | phi "&" phi | phi "|" phi | phi "->" phi
//!      | "F[" a "," b "]" phi | "G[" a "," b "]" phi
//!      | phi "U[" a "," b "]" phi | "(" phi ")"
//! ```
//!
//! Precedence, tightest first: `!`, temporal operators, `&`, `|`, `->`.
//! Chains of `&` or `|` become a single n-ary node; `->` is right
//! associative and `U` left associative. `F`, `G` and `U` are operators only
//! when followed by `[`, so they remain usable as predicate names.

use std::collections::HashMap;

use super::{Formula, Interval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
    Eventually(Interval),
    Always(Interval),
    Until(Interval),
    Ident(String),
}

fn syntax(pos: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    let number = |i: &mut usize| -> Result<usize> {
        skip_ws(i);
        let start = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        text[start..*i]
            .parse()
            .map_err(|_| syntax(start, "expected a non-negative integer"))
    };
    let expect = |i: &mut usize, c: u8| -> Result<()> {
        skip_ws(i);
        if bytes.get(*i) == Some(&c) {
            *i += 1;
            Ok(())
        } else {
            Err(syntax(*i, format!("expected `{}`", c as char)))
        }
    };
    loop {
        skip_ws(&mut i);
        let Some(&c) = bytes.get(i) else { break };
        let start = i;
        let tok = match c {
            b'!' => {
                i += 1;
                Tok::Not
            }
            b'&' => {
                i += 1;
                Tok::And
            }
            b'|' => {
                i += 1;
                Tok::Or
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                i += 2;
                Tok::Implies
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let mut j = i;
                skip_ws(&mut j);
                if matches!(word, "F" | "G" | "U") && bytes.get(j) == Some(&b'[') {
                    i = j + 1;
                    let a = number(&mut i)?;
                    expect(&mut i, b',')?;
                    let b = number(&mut i)?;
                    expect(&mut i, b']')?;
                    let iv = Interval::new(a, b)?;
                    match word {
                        "F" => Tok::Eventually(iv),
                        "G" => Tok::Always(iv),
                        _ => Tok::Until(iv),
                    }
                } else {
                    Tok::Ident(word.to_string())
                }
            }
            _ => return Err(syntax(i, format!("unexpected character `{}`", c as char))),
        };
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    preds: &'a HashMap<String, usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn implies(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Implies) {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut items = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            items.push(self.and()?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Formula::or(items)
        }
    }

    fn and(&mut self) -> Result<Formula> {
        let mut items = vec![self.until()?];
        while self.peek() == Some(&Tok::And) {
            self.bump();
            items.push(self.until()?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Formula::and(items)
        }
    }

    fn until(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Until(iv)) = self.peek().cloned() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::until(iv, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Not) => Ok(Formula::not(self.unary()?)),
            Some(Tok::Eventually(iv)) => Ok(Formula::eventually(iv, self.unary()?)),
            Some(Tok::Always(iv)) => Ok(Formula::always(iv, self.unary()?)),
            Some(Tok::LParen) => {
                let inner = self.implies()?;
                let close = self.offset();
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(syntax(close, "expected `)`")),
                }
            }
            Some(Tok::Ident(name)) => self
                .preds
                .get(&name)
                .map(|&id| Formula::predicate(id))
                .ok_or(Error::UnknownPredicate(name)),
            Some(t) => Err(syntax(at, format!("unexpected token {t:?}"))),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }
}

/// Parses `text` with predicate names resolved through `predicates`.
pub fn parse_formula(text: &str, predicates: &HashMap<String, usize>) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        preds: predicates,
    };
    let f = p.implies()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.offset(), "trailing input"));
    }
    Ok(f)
}
