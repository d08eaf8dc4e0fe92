//! Tokenizer and Pratt parser for scalar expressions over `t` and `w`.
//!
//! Binding powers, loosest first: `+ -`, `* /`, unary `-`, `^` (right associative).

use super::{BinOp, Expr, Func, Var};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at byte {offset} (expected {})", expected.join(", "))]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>, expected: &[&str]) -> Self {
        ParseError {
            offset,
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '0'..='9' | '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| ParseError::new(start, format!("malformed number '{text}'"), &["number"]))?;
                Tok::Num(v)
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            '+' | '-' | '*' | '/' | '^' => {
                i += 1;
                Tok::Op(c)
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            _ => {
                // report the char, not the byte, for non-ASCII input
                let ch = src[start..].chars().next().unwrap_or(c);
                return Err(ParseError::new(
                    start,
                    format!("unexpected character '{ch}'"),
                    &["number", "identifier", "operator", "'('", "')'", "','"],
                ));
            }
        };
        out.push(Token { tok, offset: start });
    }
    out.push(Token {
        tok: Tok::End,
        offset: src.len(),
    });
    Ok(out)
}

const OPERAND: &[&str] = &["number", "'t'", "'w'", "function call", "'('", "'-'"];

const BP_ADD: u8 = 10;
const BP_MUL: u8 = 20;
const BP_NEG: u8 = 30;
const BP_POW: u8 = 40;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, lbp, rbp) = match self.peek().tok {
                Tok::Op('+') => (BinOp::Add, BP_ADD, BP_ADD + 1),
                Tok::Op('-') => (BinOp::Sub, BP_ADD, BP_ADD + 1),
                Tok::Op('*') => (BinOp::Mul, BP_MUL, BP_MUL + 1),
                Tok::Op('/') => (BinOp::Div, BP_MUL, BP_MUL + 1),
                Tok::Op('^') => (BinOp::Pow, BP_POW + 1, BP_POW),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(rbp)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let tok = self.next();
        match tok.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('-') => {
                let inner = self.expr(BP_NEG)?;
                Ok(Expr::Neg(Box::new(inner)))
            }
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect_close(tok.offset)?;
                Ok(inner)
            }
            Tok::Ident(name) => self.ident(name, tok.offset),
            Tok::End => Err(ParseError::new(tok.offset, "unexpected end of input", OPERAND)),
            Tok::RParen => Err(ParseError::new(tok.offset, "unbalanced ')'", OPERAND)),
            _ => Err(ParseError::new(tok.offset, "unexpected token", OPERAND)),
        }
    }

    fn expect_close(&mut self, open_offset: usize) -> Result<(), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::RParen => Ok(()),
            Tok::End => Err(ParseError::new(
                t.offset,
                format!("unbalanced '(' opened at byte {open_offset}"),
                &["')'"],
            )),
            _ => Err(ParseError::new(t.offset, "unexpected token", &["operator", "')'"])),
        }
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        match name.as_str() {
            "t" => return Ok(Expr::Var(Var::T)),
            "w" => return Ok(Expr::Var(Var::W)),
            _ => {}
        }
        let func = Func::from_name(&name).ok_or_else(|| {
            ParseError::new(offset, format!("unknown identifier '{name}'"), &["'t'", "'w'", "function name"])
        })?;
        let open = self.next();
        if open.tok != Tok::LParen {
            return Err(ParseError::new(
                open.offset,
                format!("function '{name}' must be called"),
                &["'('"],
            ));
        }
        let mut args = vec![self.expr(0)?];
        while self.peek().tok == Tok::Comma {
            self.next();
            args.push(self.expr(0)?);
        }
        self.expect_close(open.offset)?;
        if args.len() != func.arity() {
            return Err(ParseError::new(
                offset,
                format!(
                    "function '{name}' takes {} argument(s), got {}",
                    func.arity(),
                    args.len()
                ),
                &[],
            ));
        }
        Ok(Expr::Call(func, args))
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    if toks.len() == 1 {
        return Err(ParseError::new(0, "empty expression", OPERAND));
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr(0)?;
    let t = p.peek().clone();
    match t.tok {
        Tok::End => Ok(e),
        Tok::RParen => Err(ParseError::new(t.offset, "unbalanced ')'", &["operator", "end of input"])),
        _ => Err(ParseError::new(t.offset, "unexpected token", &["operator", "end of input"])),
    }
}
