use super::ast::{BinOp, Expr, ExprAst, Func, Node, Var};
use super::taylor::Taylor2;
use super::ExprError;
use crate::scalar::Scalar;

fn domain(pos: usize, msg: impl Into<String>) -> ExprError {
    ExprError::Domain { pos, msg: msg.into() }
}

fn eval_node<S: Scalar>(e: &Expr, env: &[S], n: usize) -> Result<S, ExprError> {
    let out = match &e.node {
        Node::Const(c) => S::cst(*c),
        Node::Var(v) => env[v.slot(n)].clone(),
        Node::Neg(a) => -eval_node(a, env, n)?,
        Node::Binary(op, a, b) => {
            let lhs = eval_node(a, env, n)?;
            match op {
                BinOp::Add => lhs + eval_node(b, env, n)?,
                BinOp::Sub => lhs - eval_node(b, env, n)?,
                BinOp::Mul => lhs * eval_node(b, env, n)?,
                BinOp::Div => {
                    let rhs = eval_node(b, env, n)?;
                    if rhs.re() == 0.0 {
                        return Err(domain(e.pos, "division by zero"));
                    }
                    lhs / rhs
                }
                BinOp::Pow => {
                    if let Some(k) = b.integer_literal() {
                        if k < 0 && lhs.re() == 0.0 {
                            return Err(domain(e.pos, "zero raised to a negative power"));
                        }
                        lhs.powi(k)
                    } else {
                        let rhs = eval_node(b, env, n)?;
                        if lhs.re() <= 0.0 {
                            return Err(domain(
                                e.pos,
                                format!("non-integer power of non-positive base {}", lhs.re()),
                            ));
                        }
                        lhs.powf(&rhs)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let x = eval_node(a, env, n)?;
            let v = x.re();
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => {
                    if v.cos() == 0.0 {
                        return Err(domain(e.pos, "tan at a pole"));
                    }
                    x.tan()
                }
                Func::Exp => x.exp(),
                Func::Log => {
                    if v <= 0.0 {
                        return Err(domain(e.pos, format!("log of non-positive value {v}")));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(domain(e.pos, format!("sqrt of negative value {v}")));
                    }
                    x.sqrt()
                }
                Func::Sinh => x.sinh(),
                Func::Cosh => x.cosh(),
            }
        }
    };
    if !out.re().is_finite() {
        return Err(domain(e.pos, "non-finite result"));
    }
    Ok(out)
}

impl ExprAst {
    /// Evaluate over an environment laid out as `[t, x1..xn, y1..yn]`.
    ///
    /// The scalar type decides what is carried along: `f64` gives the value,
    /// `Taylor2` gives value, gradient and Hessian over whatever the
    /// environment entries were seeded with.
    pub fn eval<S: Scalar>(&self, env: &[S]) -> Result<S, ExprError> {
        assert_eq!(
            env.len(),
            2 * self.n + 1,
            "environment must hold t, x1..x{n}, y1..y{n}",
            n = self.n
        );
        eval_node(&self.root, env, self.n)
    }

    pub fn eval_f64(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64, ExprError> {
        let env = pack(t, x, y);
        self.eval(&env)
    }
}

pub(crate) fn pack<T: Clone>(t: T, x: &[T], y: &[T]) -> Vec<T> {
    let mut env = Vec::with_capacity(1 + x.len() + y.len());
    env.push(t);
    env.extend_from_slice(x);
    env.extend_from_slice(y);
    env
}

/// Value, gradient and Hessian of `ast` at `(t, x, y)` with respect to
/// `seeds`, in the order given.
pub fn eval2(ast: &ExprAst, t: f64, x: &[f64], y: &[f64], seeds: &[Var]) -> Result<Taylor2, ExprError> {
    let n = ast.n;
    assert!(
        x.len() == n && y.len() == n,
        "point dimension must match expression dimension"
    );
    let k = seeds.len();
    let raw = pack(t, x, y);
    let mut env: Vec<Taylor2> = raw.iter().map(|&v| Taylor2::constant(v)).collect();
    for (i, s) in seeds.iter().enumerate() {
        let slot = s.slot(n);
        assert!(slot < env.len(), "seed {s} outside dimension {n}");
        env[slot] = Taylor2::variable(raw[slot], i, k);
    }
    let mut out = ast.eval(&env)?;
    // constants come back without derivative storage; normalise the shape
    if out.grad.len() != k {
        out.grad.resize(k, 0.0);
        out.hess.resize(super::taylor::tri_len(k), 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn square_of_velocity() {
        let e = parse("y1^2", 1).unwrap();
        let r = eval2(&e, 0.0, &[0.0], &[3.0], &[Var::Y(0)]).unwrap();
        assert_eq!((r.value, r.grad[0], r.hess[0]), (9.0, 6.0, 2.0));
    }

    #[test]
    fn time_identity() {
        let e = parse("t", 1).unwrap();
        let r = eval2(&e, 0.37, &[1.0], &[2.0], &[Var::T]).unwrap();
        assert_eq!((r.value, r.grad[0], r.hess[0]), (0.37, 1.0, 0.0));
    }

    #[test]
    fn exponential_time() {
        let e = parse("exp(2*t)", 1).unwrap();
        let r = eval2(&e, 0.5, &[0.0], &[0.0], &[Var::T]).unwrap();
        let eul = std::f64::consts::E;
        assert!((r.value - eul).abs() < 1e-15);
        assert!((r.grad[0] - 2.0 * eul).abs() < 1e-14);
        assert!((r.hess[0] - 4.0 * eul).abs() < 1e-14);
        // central differences, step 1e-5
        let f = |t: f64| e.eval_f64(t, &[0.0], &[0.0]).unwrap();
        let h = 1e-5;
        let fd1 = (f(0.5 + h) - f(0.5 - h)) / (2.0 * h);
        let fd2 = (f(0.5 + h) - 2.0 * f(0.5) + f(0.5 - h)) / (h * h);
        assert!((fd1 - r.grad[0]).abs() < 1e-8);
        assert!((fd2 - r.hess[0]).abs() < 1e-4);
    }

    #[test]
    fn constant_expression_has_shaped_derivatives() {
        let e = parse("3", 2).unwrap();
        let r = eval2(&e, 0.0, &[0.0, 0.0], &[0.0, 0.0], &[Var::Y(0), Var::Y(1)]).unwrap();
        assert_eq!(r.grad, vec![0.0, 0.0]);
        assert_eq!(r.hess, vec![0.0; 3]);
    }

    #[test]
    fn domain_errors_name_the_node() {
        let e = parse("1 + log(x1)", 1).unwrap();
        match e.eval_f64(0.0, &[-1.0], &[0.0]) {
            Err(ExprError::Domain { pos: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        let d = parse("y1 / x1", 1).unwrap();
        assert!(matches!(
            d.eval_f64(0.0, &[0.0], &[1.0]),
            Err(ExprError::Domain { pos: 3, .. })
        ));
        let p = parse("x1 ^ 0.5", 1).unwrap();
        assert!(matches!(
            p.eval_f64(0.0, &[-4.0], &[1.0]),
            Err(ExprError::Domain { .. })
        ));
        let s = parse("sqrt(x1)", 1).unwrap();
        assert!(matches!(
            s.eval_f64(0.0, &[-4.0], &[1.0]),
            Err(ExprError::Domain { .. })
        ));
    }

    #[test]
    fn integer_powers_of_negative_bases() {
        let e = parse("x1^3 + x1^-2", 1).unwrap();
        let r = eval2(&e, 0.0, &[-2.0], &[0.0], &[Var::X(0)]).unwrap();
        assert!((r.value - (-8.0 + 0.25)).abs() < 1e-15);
        assert!((r.grad[0] - (12.0 + 0.25)).abs() < 1e-14);
        assert!((r.hess[0] - (-12.0 + 6.0 / 16.0)).abs() < 1e-14);
    }

    #[test]
    fn mixed_partials_are_symmetric_and_correct() {
        let e = parse("sin(x1*y2) + t*y1^2", 2).unwrap();
        let seeds = [Var::T, Var::X(0), Var::Y(0), Var::Y(1)];
        let r = eval2(&e, 0.3, &[0.7, 0.0], &[1.1, -0.4], &seeds).unwrap();
        // d2/dx1 dy2 = cos(x1 y2) - x1 y2 sin(x1 y2)
        let u = 0.7 * -0.4;
        assert!((r.d2(1, 3) - (u.cos() - u * u.sin())).abs() < 1e-14);
        assert!((r.d2(0, 2) - 2.0 * 1.1).abs() < 1e-14);
    }
}
