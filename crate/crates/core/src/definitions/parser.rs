//! Parser for definition files.
//!
//! ```text
//! file     := { "def" IDENT "=" or_expr }
//! or_expr  := and_expr { "|" and_expr }
//! and_expr := unary { "&" unary }
//! unary    := "!" unary | primary
//! primary  := "(" or_expr ")" | icd9 | term | med
//! icd9     := "icd9" "[" item { "|" item } "]" [ "in" sources ]
//! item     := INT [ "-" INT ]          (820-29 is read as 820-829)
//! sources  := IDENT | "(" IDENT { "," IDENT } ")"
//! term     := "term" "(" STRING ")" [ "in" ( "risk_factor" | "health_condition" ) ]
//! med      := "med" "(" STRING { "," STRING } ")"
//! ```
//!
//! `#` starts a line comment. Comment lines directly above a `def` become
//! its description. An unparenthesised multi-code `icd9[...]` group is
//! spliced into the surrounding `|` chain.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::ast::{DefinitionSpec, RuleExpr, TermTable};
use crate::store::SourceTable;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DefinitionError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}: duplicate definition '{name}'")]
    Duplicate { line: usize, name: String },
    #[error("{line}:{column}: inverted code range {low:03}-{high:03}")]
    InvertedRange {
        line: usize,
        column: usize,
        low: u16,
        high: u16,
    },
    #[error("unknown definition '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Str(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Pipe,
    Amp,
    Bang,
    Eq,
    Comma,
    Dash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{}'", s),
            Tok::Int(s) => format!("number '{}'", s),
            Tok::Str(s) => format!("string \"{}\"", s),
            Tok::Eof => "end of input".into(),
            other => format!("'{}'", match other {
                Tok::LBracket => "[",
                Tok::RBracket => "]",
                Tok::LParen => "(",
                Tok::RParen => ")",
                Tok::Pipe => "|",
                Tok::Amp => "&",
                Tok::Bang => "!",
                Tok::Eq => "=",
                Tok::Comma => ",",
                Tok::Dash => "-",
                _ => unreachable!(),
            }),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Comment {
    line: usize,
    text: String,
}

fn lex(text: &str) -> Result<(Vec<Spanned>, Vec<Comment>), DefinitionError> {
    let mut toks = Vec::new();
    let mut comments = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let lineno = li + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let single = match c {
                '[' => Some(Tok::LBracket),
                ']' => Some(Tok::RBracket),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '|' => Some(Tok::Pipe),
                '&' => Some(Tok::Amp),
                '!' => Some(Tok::Bang),
                '=' => Some(Tok::Eq),
                ',' => Some(Tok::Comma),
                '-' => Some(Tok::Dash),
                _ => None,
            };
            if let Some(tok) = single {
                toks.push(Spanned { tok, line: lineno, column });
                i += 1;
            } else if c == '#' {
                let rest: String = chars[i + 1..].iter().collect();
                let text = rest.strip_prefix(' ').unwrap_or(&rest).to_string();
                comments.push(Comment { line: lineno, text });
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                toks.push(Spanned {
                    tok: Tok::Int(chars[start..i].iter().collect()),
                    line: lineno,
                    column,
                });
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push(Spanned {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: lineno,
                    column,
                });
            } else if c == '"' {
                let mut s = String::new();
                i += 1;
                let mut closed = false;
                while i < chars.len() {
                    match chars[i] {
                        '\\' if i + 1 < chars.len() => {
                            s.push(chars[i + 1]);
                            i += 2;
                        }
                        '"' => {
                            closed = true;
                            i += 1;
                            break;
                        }
                        ch => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                if !closed {
                    return Err(DefinitionError::Syntax {
                        line: lineno,
                        column,
                        message: "unterminated string".into(),
                    });
                }
                toks.push(Spanned {
                    tok: Tok::Str(s),
                    line: lineno,
                    column,
                });
            } else {
                return Err(DefinitionError::Syntax {
                    line: lineno,
                    column,
                    message: format!("unexpected character '{}'", c),
                });
            }
        }
    }
    let last_line = text.lines().count().max(1);
    toks.push(Spanned {
        tok: Tok::Eof,
        line: last_line,
        column: text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1),
    });
    Ok((toks, comments))
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, at: &Spanned, message: impl Into<String>) -> Result<T, DefinitionError> {
        Err(DefinitionError::Syntax {
            line: at.line,
            column: at.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, DefinitionError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            self.err(&t, format!("expected {}, found {}", want.describe(), t.tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(String, Spanned), DefinitionError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => self.err(&t, format!("expected identifier, found {}", other.describe())),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn or_expr(&mut self) -> Result<RuleExpr, DefinitionError> {
        let mut children = Vec::new();
        loop {
            let (expr, spliceable) = self.and_expr()?;
            match expr {
                RuleExpr::Or(group) if spliceable => children.extend(group),
                other => children.push(other),
            }
            if self.peek().tok == Tok::Pipe {
                self.next();
            } else {
                break;
            }
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            RuleExpr::Or(children)
        })
    }

    fn and_expr(&mut self) -> Result<(RuleExpr, bool), DefinitionError> {
        let (first, spliceable) = self.unary()?;
        if self.peek().tok != Tok::Amp {
            return Ok((first, spliceable));
        }
        let mut children = vec![first];
        while self.peek().tok == Tok::Amp {
            self.next();
            children.push(self.unary()?.0);
        }
        Ok((RuleExpr::And(children), false))
    }

    fn unary(&mut self) -> Result<(RuleExpr, bool), DefinitionError> {
        if self.peek().tok == Tok::Bang {
            self.next();
            let (child, _) = self.unary()?;
            return Ok((RuleExpr::Not(Box::new(child)), false));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<(RuleExpr, bool), DefinitionError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::LParen => {
                self.next();
                let e = self.or_expr()?;
                self.expect(Tok::RParen)?;
                Ok((e, false))
            }
            Tok::Ident(kw) if kw == "icd9" => {
                self.next();
                self.icd9().map(|e| (e, true))
            }
            Tok::Ident(kw) if kw == "term" => {
                self.next();
                self.term().map(|e| (e, false))
            }
            Tok::Ident(kw) if kw == "med" => {
                self.next();
                self.med().map(|e| (e, false))
            }
            other => self.err(
                &t,
                format!("expected icd9, term, med, '!' or '(', found {}", other.describe()),
            ),
        }
    }

    fn code_root(&mut self) -> Result<(String, Spanned), DefinitionError> {
        let t = self.next();
        match &t.tok {
            Tok::Int(s) if s.len() <= 3 => Ok((s.clone(), t.clone())),
            Tok::Int(s) => self.err(&t, format!("ICD-9 root '{}' has more than 3 digits", s)),
            other => self.err(&t, format!("expected ICD-9 code root, found {}", other.describe())),
        }
    }

    fn icd9(&mut self) -> Result<RuleExpr, DefinitionError> {
        self.expect(Tok::LBracket)?;
        // (low, high) pairs; high == None means an exact code
        let mut items: Vec<(u16, Option<u16>)> = Vec::new();
        loop {
            let (low_text, low_tok) = self.code_root()?;
            let low: u16 = low_text.parse().unwrap();
            if self.peek().tok == Tok::Dash {
                self.next();
                let (high_text, _) = self.code_root()?;
                // short form: 820-29 keeps the leading digits of the low end
                let high_text = if high_text.len() < low_text.len() {
                    format!("{}{}", &low_text[..low_text.len() - high_text.len()], high_text)
                } else {
                    high_text
                };
                let high: u16 = high_text.parse().unwrap();
                if low > high {
                    return Err(DefinitionError::InvertedRange {
                        line: low_tok.line,
                        column: low_tok.column,
                        low,
                        high,
                    });
                }
                items.push((low, Some(high)));
            } else {
                items.push((low, None));
            }
            match self.next() {
                Spanned { tok: Tok::Pipe, .. } => continue,
                Spanned { tok: Tok::RBracket, .. } => break,
                t => return self.err(&t, format!("expected '|' or ']', found {}", t.tok.describe())),
            }
        }
        let sources = if self.is_keyword("in") {
            self.next();
            self.sources()?
        } else {
            SourceTable::ALL.into_iter().collect()
        };
        let mut exprs: Vec<RuleExpr> = items
            .into_iter()
            .map(|(low, high)| match high {
                Some(high) => RuleExpr::CodeRange {
                    low_root: low,
                    high_root: high,
                    sources: sources.clone(),
                },
                None => RuleExpr::CodeExact {
                    code_root: low,
                    sources: sources.clone(),
                },
            })
            .collect();
        Ok(if exprs.len() == 1 {
            exprs.pop().unwrap()
        } else {
            RuleExpr::Or(exprs)
        })
    }

    fn source_name(&mut self) -> Result<SourceTable, DefinitionError> {
        let (name, t) = self.ident()?;
        SourceTable::from_name(&name).map_or_else(
            || self.err(&t, format!("unknown coded table '{}'", name)),
            Ok,
        )
    }

    fn sources(&mut self) -> Result<BTreeSet<SourceTable>, DefinitionError> {
        let mut out = BTreeSet::new();
        if self.peek().tok == Tok::LParen {
            self.next();
            loop {
                out.insert(self.source_name()?);
                match self.next() {
                    Spanned { tok: Tok::Comma, .. } => continue,
                    Spanned { tok: Tok::RParen, .. } => break,
                    t => return self.err(&t, format!("expected ',' or ')', found {}", t.tok.describe())),
                }
            }
        } else {
            out.insert(self.source_name()?);
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<String, DefinitionError> {
        let t = self.next();
        match &t.tok {
            Tok::Str(s) if !s.trim().is_empty() => Ok(s.clone()),
            Tok::Str(_) => self.err(&t, "empty string"),
            other => self.err(&t, format!("expected string, found {}", other.describe())),
        }
    }

    fn term(&mut self) -> Result<RuleExpr, DefinitionError> {
        self.expect(Tok::LParen)?;
        let text = self.string()?;
        self.expect(Tok::RParen)?;
        let table = if self.is_keyword("in") {
            self.next();
            let (name, t) = self.ident()?;
            match name.as_str() {
                "risk_factor" => TermTable::RiskFactor,
                "health_condition" => TermTable::HealthCondition,
                _ => return self.err(&t, format!("term() cannot search table '{}'", name)),
            }
        } else {
            TermTable::RiskFactor
        };
        Ok(RuleExpr::TermMatch { text, table })
    }

    fn med(&mut self) -> Result<RuleExpr, DefinitionError> {
        self.expect(Tok::LParen)?;
        let mut names = vec![self.string()?];
        loop {
            match self.next() {
                Spanned { tok: Tok::Comma, .. } => names.push(self.string()?),
                Spanned { tok: Tok::RParen, .. } => break,
                t => return self.err(&t, format!("expected ',' or ')', found {}", t.tok.describe())),
            }
        }
        Ok(RuleExpr::MedicationAny { names })
    }
}

/// Parses a definition file into its definitions, in file order.
pub fn parse_definitions(text: &str) -> Result<Vec<DefinitionSpec>, DefinitionError> {
    let (toks, comments) = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let mut defs = Vec::new();
    let mut seen = HashSet::new();
    while p.peek().tok != Tok::Eof {
        let t = p.next();
        if t.tok != Tok::Ident("def".into()) {
            return p.err(&t, format!("expected 'def', found {}", t.tok.describe()));
        }
        let (name, _) = p.ident()?;
        p.expect(Tok::Eq)?;
        let expr = p.or_expr()?;
        if !seen.insert(name.clone()) {
            return Err(DefinitionError::Duplicate { line: t.line, name });
        }
        // comment block ending on the line just above `def`
        let mut block = Vec::new();
        let mut want = t.line;
        for c in comments.iter().rev().filter(|c| c.line < t.line) {
            if c.line + 1 == want {
                block.push(c.text.clone());
                want = c.line;
            } else {
                break;
            }
        }
        block.reverse();
        defs.push(DefinitionSpec {
            name,
            expr,
            description: block.join("\n"),
        });
    }
    Ok(defs)
}
