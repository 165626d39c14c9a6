//! Boolean guard mini-language over app-model variables.
//!
//! Grammar (precedence `!` > `&&` > `||`):
//!
//! ```text
//! expr    := or
//! or      := and ( "||" and )*
//! and     := unary ( "&&" unary )*
//! unary   := "!" unary | atom
//! atom    := "(" expr ")" | ident "==" literal | ident ">=" int | "true" | "false" | ident
//! literal := ident | int | "true" | "false"
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Value, VarDomain};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guard {
    /// Always true (the empty guard).
    True,
    /// Always false; useful in hand-built tests.
    False,
    /// Bare boolean variable.
    Var(String),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
    /// `var == literal` over any domain.
    Eq(String, Literal),
    /// `var >= n` over counter variables.
    Ge(String, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Literal {
    Bool(bool),
    Symbol(String),
    Int(u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuardError {
    #[error("guard syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("guard references undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("guard type error: {0}")]
    Type(String),
}

impl Guard {
    /// Parse a guard expression. An empty or whitespace-only string is the
    /// always-true guard.
    pub fn parse(input: &str) -> Result<Guard, GuardError> {
        if input.trim().is_empty() {
            return Ok(Guard::True);
        }
        let tokens = lex(input)?;
        let mut parser = Parser { tokens, pos: 0 };
        let guard = parser.or_expr()?;
        if parser.pos != parser.tokens.len() {
            let (offset, _) = parser.tokens[parser.pos];
            return Err(GuardError::Syntax {
                offset,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(guard)
    }

    /// Check that every referenced variable is declared and used in a way
    /// its domain supports.
    pub fn check(&self, domains: &BTreeMap<String, VarDomain>) -> Result<(), GuardError> {
        match self {
            Guard::True | Guard::False => Ok(()),
            Guard::Var(name) => match domains.get(name) {
                None => Err(GuardError::UndeclaredVariable(name.clone())),
                Some(VarDomain::Boolean) => Ok(()),
                Some(_) => Err(GuardError::Type(format!(
                    "bare `{name}` requires a boolean variable"
                ))),
            },
            Guard::Not(inner) => inner.check(domains),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.check(domains)?;
                b.check(domains)
            }
            Guard::Eq(name, literal) => match (domains.get(name), literal) {
                (None, _) => Err(GuardError::UndeclaredVariable(name.clone())),
                (Some(VarDomain::Boolean), Literal::Bool(_)) => Ok(()),
                (Some(VarDomain::Enum { members }), Literal::Symbol(s)) => {
                    if members.contains(s) {
                        Ok(())
                    } else {
                        Err(GuardError::Type(format!(
                            "`{s}` is not a member of `{name}`'s enum domain"
                        )))
                    }
                }
                (Some(VarDomain::Counter { .. }), Literal::Int(_)) => Ok(()),
                (Some(_), _) => Err(GuardError::Type(format!(
                    "literal does not match the domain of `{name}`"
                ))),
            },
            Guard::Ge(name, _) => match domains.get(name) {
                None => Err(GuardError::UndeclaredVariable(name.clone())),
                Some(VarDomain::Counter { .. }) => Ok(()),
                Some(_) => Err(GuardError::Type(format!(
                    "`>=` requires `{name}` to be a counter"
                ))),
            },
        }
    }

    /// Evaluate against a valuation. Unknown variables evaluate to false;
    /// validation rejects them up front.
    pub fn eval(&self, valuation: &BTreeMap<String, Value>) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Var(name) => matches!(valuation.get(name), Some(Value::Bool(true))),
            Guard::Not(inner) => !inner.eval(valuation),
            Guard::And(a, b) => a.eval(valuation) && b.eval(valuation),
            Guard::Or(a, b) => a.eval(valuation) || b.eval(valuation),
            Guard::Eq(name, literal) => match (valuation.get(name), literal) {
                (Some(Value::Bool(v)), Literal::Bool(l)) => v == l,
                (Some(Value::Symbol(v)), Literal::Symbol(l)) => v == l,
                (Some(Value::Count(v)), Literal::Int(l)) => v == l,
                _ => false,
            },
            Guard::Ge(name, bound) => {
                matches!(valuation.get(name), Some(Value::Count(v)) if v >= bound)
            }
        }
    }

    /// All variable names the guard reads.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Guard::True | Guard::False => {}
            Guard::Var(name) | Guard::Eq(name, _) | Guard::Ge(name, _) => out.push(name.clone()),
            Guard::Not(inner) => inner.collect_vars(out),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => write!(f, "true"),
            Guard::False => write!(f, "false"),
            Guard::Var(name) => write!(f, "{name}"),
            Guard::Not(inner) => write!(f, "!({inner})"),
            Guard::And(a, b) => write!(f, "({a} && {b})"),
            Guard::Or(a, b) => write!(f, "({a} || {b})"),
            Guard::Eq(name, Literal::Bool(b)) => write!(f, "{name} == {b}"),
            Guard::Eq(name, Literal::Symbol(s)) => write!(f, "{name} == {s}"),
            Guard::Eq(name, Literal::Int(n)) => write!(f, "{name} == {n}"),
            Guard::Ge(name, n) => write!(f, "{name} >= {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Int(u32),
    Bang,
    AndAnd,
    OrOr,
    EqEq,
    Ge,
    LParen,
    RParen,
}

fn lex(input: &str) -> Result<Vec<(usize, Token)>, GuardError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            '!' => {
                tokens.push((i, Token::Bang));
                i += 1;
            }
            '&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    tokens.push((i, Token::AndAnd));
                    i += 2;
                } else {
                    return Err(GuardError::Syntax {
                        offset: i,
                        message: "expected `&&`".into(),
                    });
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    tokens.push((i, Token::OrOr));
                    i += 2;
                } else {
                    return Err(GuardError::Syntax {
                        offset: i,
                        message: "expected `||`".into(),
                    });
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push((i, Token::EqEq));
                    i += 2;
                } else {
                    return Err(GuardError::Syntax {
                        offset: i,
                        message: "expected `==`".into(),
                    });
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push((i, Token::Ge));
                    i += 2;
                } else {
                    return Err(GuardError::Syntax {
                        offset: i,
                        message: "expected `>=`".into(),
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let text = &input[start..i];
                let value = text.parse::<u32>().map_err(|_| GuardError::Syntax {
                    offset: start,
                    message: format!("integer `{text}` out of range"),
                })?;
                tokens.push((start, Token::Int(value)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push((start, Token::Ident(input[start..i].to_string())));
            }
            other => {
                return Err(GuardError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn or_expr(&mut self) -> Result<Guard, GuardError> {
        let mut left = self.and_expr()?;
        while self.peek() == Some(&Token::OrOr) {
            self.bump();
            let right = self.and_expr()?;
            left = Guard::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Guard, GuardError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Token::AndAnd) {
            self.bump();
            let right = self.unary()?;
            left = Guard::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Guard, GuardError> {
        if self.peek() == Some(&Token::Bang) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Guard::Not(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Guard, GuardError> {
        let end = self.tokens.last().map(|(o, _)| *o + 1).unwrap_or(0);
        let Some((offset, token)) = self.bump() else {
            return Err(GuardError::Syntax {
                offset: end,
                message: "unexpected end of expression".into(),
            });
        };
        match token {
            Token::LParen => {
                let inner = self.or_expr()?;
                match self.bump() {
                    Some((_, Token::RParen)) => Ok(inner),
                    _ => Err(GuardError::Syntax {
                        offset,
                        message: "unclosed parenthesis".into(),
                    }),
                }
            }
            Token::Ident(name) if name == "true" => Ok(Guard::True),
            Token::Ident(name) if name == "false" => Ok(Guard::False),
            Token::Ident(name) => match self.peek() {
                Some(Token::EqEq) => {
                    self.bump();
                    let lit = self.literal()?;
                    Ok(Guard::Eq(name, lit))
                }
                Some(Token::Ge) => {
                    self.bump();
                    match self.bump() {
                        Some((_, Token::Int(n))) => Ok(Guard::Ge(name, n)),
                        other => Err(GuardError::Syntax {
                            offset: other.map(|(o, _)| o).unwrap_or(end),
                            message: "`>=` requires an integer bound".into(),
                        }),
                    }
                }
                _ => Ok(Guard::Var(name)),
            },
            other => Err(GuardError::Syntax {
                offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn literal(&mut self) -> Result<Literal, GuardError> {
        let end = self.tokens.last().map(|(o, _)| *o + 1).unwrap_or(0);
        match self.bump() {
            Some((_, Token::Int(n))) => Ok(Literal::Int(n)),
            Some((_, Token::Ident(s))) if s == "true" => Ok(Literal::Bool(true)),
            Some((_, Token::Ident(s))) if s == "false" => Ok(Literal::Bool(false)),
            Some((_, Token::Ident(s))) => Ok(Literal::Symbol(s)),
            other => Err(GuardError::Syntax {
                offset: other.map(|(o, _)| o).unwrap_or(end),
                message: "expected a literal".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domains() -> BTreeMap<String, VarDomain> {
        let mut map = BTreeMap::new();
        map.insert("subscribed".into(), VarDomain::Boolean);
        map.insert(
            "format".into(),
            VarDomain::Enum { members: vec!["mp4".into(), "webm".into(), "ogg".into()] },
        );
        map.insert("items".into(), VarDomain::Counter { max: 5 });
        map
    }

    fn valuation(sub: bool, fmt: &str, items: u32) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        map.insert("subscribed".into(), Value::Bool(sub));
        map.insert("format".into(), Value::Symbol(fmt.into()));
        map.insert("items".into(), Value::Count(items));
        map
    }

    #[test]
    fn precedence_not_binds_tighter_than_and_than_or() {
        let g = Guard::parse("!subscribed && format == mp4 || items >= 1").unwrap();
        // Parsed as ((!subscribed && format==mp4) || items>=1).
        assert!(g.eval(&valuation(false, "mp4", 0)));
        assert!(g.eval(&valuation(true, "mp4", 1)));
        assert!(!g.eval(&valuation(true, "mp4", 0)));
    }

    #[test]
    fn parentheses_override_precedence() {
        let g = Guard::parse("!(subscribed || items >= 1)").unwrap();
        assert!(g.eval(&valuation(false, "mp4", 0)));
        assert!(!g.eval(&valuation(false, "mp4", 2)));
    }

    #[test]
    fn empty_guard_is_true() {
        assert_eq!(Guard::parse("  ").unwrap(), Guard::True);
    }

    #[test]
    fn undeclared_variable_is_named_in_the_error() {
        let g = Guard::parse("x == mp4").unwrap();
        let err = g.check(&domains()).unwrap_err();
        assert_eq!(err, GuardError::UndeclaredVariable("x".into()));
    }

    #[test]
    fn enum_literal_outside_domain_is_a_type_error() {
        let g = Guard::parse("format == flac").unwrap();
        assert!(matches!(g.check(&domains()), Err(GuardError::Type(_))));
    }

    #[test]
    fn ge_on_non_counter_rejected() {
        let g = Guard::parse("format >= 1").unwrap();
        assert!(matches!(g.check(&domains()), Err(GuardError::Type(_))));
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = Guard::parse("subscribed &").unwrap_err();
        match err {
            GuardError::Syntax { offset, .. } => assert_eq!(offset, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn variables_are_collected_once() {
        let g = Guard::parse("subscribed && (subscribed || items >= 1)").unwrap();
        assert_eq!(g.variables(), vec!["items".to_string(), "subscribed".to_string()]);
    }
}
