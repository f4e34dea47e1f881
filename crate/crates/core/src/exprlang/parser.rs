//! Recursive-descent parser for the scalar expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exp)?          right-associative
//! exp     := '-' exp | power
//! primary := number | var | func '(' expr ')' | '(' expr ')'
//! var     := 't' | 'x' digits | 'y' digits
//! ```

use super::ast::{BinOp, Expr, ExprAst, Func, Node, Var};
use super::ExprError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
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
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{lit}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: start,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((tok, start));
            i += c.len_utf8();
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self) -> ExprError {
        let what = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("operator `{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        };
        ExprError::Syntax {
            pos: self.pos(),
            msg: format!("unexpected {what}"),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            lhs = Expr {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.unary()?;
            lhs = Expr {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Op('-') {
            let (_, pos) = self.bump();
            let literal = matches!(self.peek(), Tok::Num(_));
            let inner = self.unary()?;
            // a minus sign directly on a number literal is part of the literal
            let node = match inner.node {
                Node::Const(c) if literal => Node::Const(-c),
                _ => Node::Neg(Box::new(inner)),
            };
            return Ok(Expr { node, pos });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            let (_, pos) = self.bump();
            let exp = self.exponent()?;
            return Ok(Expr {
                node: Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)),
                pos,
            });
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Op('-') {
            let (_, pos) = self.bump();
            let literal = matches!(self.peek(), Tok::Num(_));
            let inner = self.exponent()?;
            let node = match inner.node {
                Node::Const(c) if literal => Node::Const(-c),
                _ => Node::Neg(Box::new(inner)),
            };
            return Ok(Expr { node, pos });
        }
        self.power()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr {
                    node: Node::Const(v),
                    pos,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(ExprError::Syntax {
                            pos: self.pos(),
                            msg: format!("expected `(` after `{name}`"),
                        });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr {
                        node: Node::Call(func, Box::new(arg)),
                        pos,
                    });
                }
                let var = self.variable(&name, pos)?;
                Ok(Expr {
                    node: Node::Var(var),
                    pos,
                })
            }
            _ => Err(self.unexpected()),
        }
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Var, ExprError> {
        if name == "t" {
            return Ok(Var::T);
        }
        let (head, digits) = name.split_at(1);
        let idx = match (head, digits.parse::<usize>()) {
            ("x" | "y", Ok(i)) if !digits.starts_with('+') && i >= 1 => i,
            _ => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("unknown identifier `{name}`"),
                })
            }
        };
        if idx > self.n {
            return Err(ExprError::Dimension {
                pos,
                name: name.to_string(),
                n: self.n,
            });
        }
        Ok(if head == "x" { Var::X(idx - 1) } else { Var::Y(idx - 1) })
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos: self.pos(),
                msg: "expected `)`".into(),
            })
        }
    }
}

/// Parse `text` as an expression over `t`, `x1..xn`, `y1..yn`.
pub fn parse(text: &str, n: usize) -> Result<ExprAst, ExprError> {
    if n == 0 {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "dimension must be at least 1".into(),
        });
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, n };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(ExprAst { root, n })
}
