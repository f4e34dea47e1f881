use std::fmt;

/// A variable of the jet coordinate system. Indices are 0-based internally;
/// the textual names are `t`, `x1..xn`, `y1..yn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X(usize),
    Y(usize),
}

impl Var {
    /// Slot of this variable in an environment laid out as `[t, x.., y..]`.
    pub fn slot(self, n: usize) -> usize {
        match self {
            Var::T => 0,
            Var::X(i) => 1 + i,
            Var::Y(i) => 1 + n + i,
        }
    }

    /// Inverse of [`Var::slot`].
    pub fn from_slot(slot: usize, n: usize) -> Var {
        if slot == 0 {
            Var::T
        } else if slot <= n {
            Var::X(slot - 1)
        } else {
            Var::Y(slot - 1 - n)
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// An expression tree node with the byte offset it was parsed from.
/// Equality is structural and ignores positions.
#[derive(Clone, Debug)]
pub struct Expr {
    pub node: Node,
    pub pos: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Binary(o1, a1, b1), Node::Binary(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (Node::Call(f1, a1), Node::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr { node, pos: 0 }
    }

    pub fn constant(c: f64) -> Self {
        Expr::new(Node::Const(c))
    }

    pub fn var(v: Var) -> Self {
        Expr::new(Node::Var(v))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::new(Node::Binary(op, Box::new(a), Box::new(b)))
    }

    pub fn call(f: Func, a: Expr) -> Self {
        Expr::new(Node::Call(f, Box::new(a)))
    }

    pub fn neg(a: Expr) -> Self {
        Expr::new(Node::Neg(Box::new(a)))
    }

    /// Largest 1-based spatial/velocity index used, or 0.
    pub fn max_index(&self) -> usize {
        match &self.node {
            Node::Const(_) | Node::Var(Var::T) => 0,
            Node::Var(Var::X(i)) | Node::Var(Var::Y(i)) => i + 1,
            Node::Neg(a) | Node::Call(_, a) => a.max_index(),
            Node::Binary(_, a, b) => a.max_index().max(b.max_index()),
        }
    }

    /// Calls `f` on every variable occurrence.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match &self.node {
            Node::Const(_) => {}
            Node::Var(v) => f(*v),
            Node::Neg(a) | Node::Call(_, a) => a.visit_vars(f),
            Node::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Integer value of a literal exponent (`3`, `-2`), if this node is one.
    pub fn integer_literal(&self) -> Option<i64> {
        match &self.node {
            Node::Const(c) if c.fract() == 0.0 && c.abs() < 1e9 => Some(*c as i64),
            Node::Neg(a) => a.integer_literal().map(|k| -k),
            _ => None,
        }
    }
}

// Printing is fully parenthesised, so re-parsing reproduces the tree exactly.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{:?}", c)
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) if matches!(a.node, Node::Const(_)) => write!(f, "(-({a}))"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed expression together with the dimension it was checked against.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprAst {
    pub root: Expr,
    pub n: usize,
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}
