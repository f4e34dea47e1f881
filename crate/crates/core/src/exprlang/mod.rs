//! Scalar expressions in `t`, `x1..xn`, `y1..yn` with exact first and second
//! derivatives via truncated-Taylor forward-mode arithmetic.

mod ast;
mod eval;
mod parser;
mod taylor;

pub use ast::{BinOp, Expr, ExprAst, Func, Node, Var};
pub use eval::eval2;
pub(crate) use eval::pack;
pub use parser::parse;
pub use taylor::{tri_index, tri_len, Taylor2};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable `{name}` at {pos} exceeds dimension {n}")]
    Dimension { pos: usize, name: String, n: usize },
    #[error("domain error at {pos}: {msg}")]
    Domain { pos: usize, msg: String },
}
