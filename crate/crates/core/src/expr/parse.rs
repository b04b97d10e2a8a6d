//! Infix text format for expressions.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := prefix (('*' | '/') prefix)*
//! prefix  := '-' prefix | primary
//! primary := number | name '(' sum ')' | name | '(' sum ')'
//! ```
//!
//! A minus sign directly in front of a numeric literal folds into a negative
//! constant. Formatting emits the same grammar with parentheses wherever the
//! tree shape would otherwise be lost, so `parse(format(e)) == e`.

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at column {column}: {message}")]
pub struct ParseError {
    /// 0-based character offset into the input.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Eof,
}

fn err(column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => Tok::Plus,
            '-' | '−' => Tok::Minus,
            '*' | '·' | '×' => Tok::Star,
            '/' | '÷' => Tok::Slash,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lit: String = chars[i..j].iter().collect();
                let v: f64 = lit.parse().map_err(|_| err(start, format!("invalid number `{lit}`")))?;
                out.push((Tok::Num(v), start));
                i = j;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push((Tok::Ident(chars[i..j].iter().collect()), start));
                i = j;
                continue;
            }
            other => return Err(err(start, format!("unexpected character `{other}`"))),
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::Eof, chars.len()));
    Ok(out)
}

struct Parser<'a, F> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    resolve: &'a mut F,
}

impl<F> Parser<'_, F>
where
    F: FnMut(&str) -> Option<usize>,
{
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Tok::Eof => err(self.column(), "unexpected end of input"),
            t => err(self.column(), format!("unexpected token {t:?}")),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.prefix()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::neg(self.prefix()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let col = self.column();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let op = match name.as_str() {
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "sqrt" => UnaryOp::Sqrt,
                        "neg" => UnaryOp::Neg,
                        _ => return Err(err(col, format!("unknown function `{name}`"))),
                    };
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::unary(op, arg));
                }
                match (self.resolve)(&name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(err(col, format!("unknown variable `{name}`"))),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

fn parse_with<F>(text: &str, mut resolve: F) -> Result<Expr, ParseError>
where
    F: FnMut(&str) -> Option<usize>,
{
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        resolve: &mut resolve,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected());
    }
    Ok(e)
}

/// Parses `text`, resolving identifiers against the ordered variable names.
pub fn parse<S: AsRef<str>>(text: &str, names: &[S]) -> Result<Expr, ParseError> {
    parse_with(text, |id| names.iter().position(|n| n.as_ref() == id))
}

/// Parses `text`, assigning variable indices in order of first appearance.
pub fn parse_infer(text: &str) -> Result<(Expr, Vec<String>), ParseError> {
    let mut names: Vec<String> = Vec::new();
    let e = parse_with(text, |id| {
        Some(match names.iter().position(|n| n == id) {
            Some(i) => i,
            None => {
                names.push(id.to_string());
                names.len() - 1
            }
        })
    })?;
    Ok((e, names))
}

/// Shortest text that reads back to the same `f64`; always carries a
/// decimal point or exponent.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v:?}")
}

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_PREFIX: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_SUM,
        Expr::Binary(..) => PREC_PRODUCT,
        Expr::Unary(UnaryOp::Neg, _) => PREC_PREFIX,
        Expr::Const(c) if c.is_sign_negative() => PREC_PREFIX,
        _ => PREC_ATOM,
    }
}

pub(crate) fn write_expr(e: &Expr, name: &dyn Fn(usize) -> Option<String>, out: &mut String) {
    match e {
        Expr::Const(c) => out.push_str(&format_number(*c)),
        Expr::Var(i) => match name(*i) {
            Some(n) => out.push_str(&n),
            None => {
                out.push('x');
                out.push_str(&i.to_string());
            }
        },
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            // `-(2.0)` keeps a negated literal distinct from a negative constant.
            let wrap = precedence(a) < PREC_ATOM || matches!(**a, Expr::Const(_));
            write_wrapped(a, wrap, name, out);
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(a, name, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            write_wrapped(a, precedence(a) < p, name, out);
            match op {
                BinaryOp::Add | BinaryOp::Sub => {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
                _ => out.push_str(op.symbol()),
            }
            let pb = precedence(b);
            write_wrapped(b, pb <= p || pb == PREC_PREFIX, name, out);
        }
    }
}

fn write_wrapped(e: &Expr, wrap: bool, name: &dyn Fn(usize) -> Option<String>, out: &mut String) {
    if wrap {
        out.push('(');
        write_expr(e, name, out);
        out.push(')');
    } else {
        write_expr(e, name, out);
    }
}
