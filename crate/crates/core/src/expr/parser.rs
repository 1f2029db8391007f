//! Recursive-descent parser for the expression grammar
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := ['-'] atom ['^' integer]
//! atom   := number | var | '(' expr ')' | func '(' expr ')'
//! func   := sin | cos | exp | sqrt
//! ```
//!
//! Sums and products are collected n-ary per precedence level, matching how
//! the printer emits them, so print -> parse round-trips are
//! structure-preserving.

use super::Expr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: unknown variable `{name}`")]
    UnknownVariable { line: usize, col: usize, name: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied();
        if let Some(c) = c {
            self.pos += 1;
            if c == b'\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col, msg: msg.into() }
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        while matches!(self.peek(), Some(b' ') | Some(b'\t') | Some(b'\r')) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok(Spanned { tok: Tok::Eof, line, col });
        };
        let tok = match c {
            b'+' => {
                self.bump();
                Tok::Plus
            }
            b'-' => {
                self.bump();
                Tok::Minus
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'^' => {
                self.bump();
                Tok::Caret
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while matches!(self.peek(), Some(b'0'..=b'9') | Some(b'.')) {
                    self.bump();
                }
                // optional exponent suffix
                if matches!(self.peek(), Some(b'e') | Some(b'E')) {
                    let mark = self.pos;
                    self.bump();
                    if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                        self.bump();
                    }
                    if matches!(self.peek(), Some(b'0'..=b'9')) {
                        while matches!(self.peek(), Some(b'0'..=b'9')) {
                            self.bump();
                        }
                    } else {
                        self.pos = mark; // bare `e` belongs to an identifier, not this number
                        self.col -= self.pos - mark;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text
                    .parse()
                    .map_err(|_| self.err(col, format!("bad number literal `{text}`")))?;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while matches!(
                    self.peek(),
                    Some(b'a'..=b'z') | Some(b'A'..=b'Z') | Some(b'0'..=b'9') | Some(b'_')
                ) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(self.err(col, format!("unexpected character `{}`", other as char)))
            }
        };
        Ok(Spanned { tok, line, col })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    cur: Spanned,
    vars: Option<&'a [String]>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, line: usize, vars: Option<&'a [String]>) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src, line);
        let cur = lexer.next_token()?;
        Ok(Parser { lexer, cur, vars })
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        self.cur = self.lexer.next_token()?;
        Ok(())
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.cur.line, col: self.cur.col, msg: msg.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.cur.tok == tok {
            self.advance()
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.term()?;
        let mut terms = vec![first];
        loop {
            match self.cur.tok {
                Tok::Plus => {
                    self.advance()?;
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.advance()?;
                    terms.push(Expr::neg(self.term()?));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        let mut factors: Vec<Expr> = Vec::new();
        loop {
            match self.cur.tok {
                Tok::Star => {
                    self.advance()?;
                    factors.push(self.factor()?);
                }
                Tok::Slash => {
                    self.advance()?;
                    // fold pending product, then divide (left-associative)
                    if !factors.is_empty() {
                        let mut all = vec![acc];
                        all.append(&mut factors);
                        acc = Expr::prod(all);
                    }
                    let den = self.factor()?;
                    acc = Expr::quot(acc, den);
                }
                _ => break,
            }
        }
        if factors.is_empty() {
            Ok(acc)
        } else {
            let mut all = vec![acc];
            all.append(&mut factors);
            Ok(Expr::prod(all))
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let negated = if self.cur.tok == Tok::Minus {
            self.advance()?;
            true
        } else {
            false
        };
        let mut e = self.atom()?;
        if self.cur.tok == Tok::Caret {
            self.advance()?;
            let sign = if self.cur.tok == Tok::Minus {
                self.advance()?;
                -1
            } else {
                1
            };
            let Tok::Num(v) = self.cur.tok else {
                return Err(self.err_here("expected integer exponent after `^`"));
            };
            if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                return Err(self.err_here("exponent must be an integer"));
            }
            self.advance()?;
            e = Expr::pow(e, sign * v as i32);
        }
        Ok(if negated { Expr::neg(e) } else { e })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.cur.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::constant(v))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let (line, col) = (self.cur.line, self.cur.col);
                self.advance()?;
                if self.cur.tok == Tok::LParen {
                    let builder: fn(Expr) -> Expr = match name.as_str() {
                        "sin" => Expr::sin,
                        "cos" => Expr::cos,
                        "exp" => Expr::exp,
                        "sqrt" => Expr::sqrt,
                        _ => {
                            return Err(ParseError::Syntax {
                                line,
                                col,
                                msg: format!("unknown function `{name}`"),
                            })
                        }
                    };
                    self.advance()?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(builder(arg))
                } else {
                    if let Some(vars) = self.vars {
                        if !vars.iter().any(|v| v == &name) {
                            return Err(ParseError::UnknownVariable { line, col, name });
                        }
                    }
                    Ok(Expr::var(name))
                }
            }
            _ => Err(self.err_here("expected number, variable or `(`")),
        }
    }
}

/// Parse a single expression. When `vars` is given, identifiers outside the
/// list are rejected. `line` seeds position reporting for multi-line sources.
pub fn parse_expr_at(
    src: &str,
    vars: Option<&[String]>,
    line: usize,
) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src, line, vars)?;
    let e = p.expr()?;
    if p.cur.tok != Tok::Eof {
        return Err(p.err_here("trailing input after expression"));
    }
    Ok(e)
}

pub fn parse_expr(src: &str, vars: Option<&[String]>) -> Result<Expr, ParseError> {
    parse_expr_at(src, vars, 1)
}
