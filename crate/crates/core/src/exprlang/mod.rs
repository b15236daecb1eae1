//! A small expression language for the scalar functions that define a
//! family instance: the potentials `psi_k(x)`, the conformal factor
//! `eta(x1..xn)` and an optional Hamiltonian.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are `x` (univariate context) or `x1..xn` (multivariate
//! context) plus the functions `sin cos exp log sqrt`. There is no implicit
//! multiplication.
//!
//! ```
//! use poisson_kit::exprlang::{Context, Expr};
//!
//! let e = Expr::parse("x^2/2", Context::Univariate).unwrap();
//! let de = e.differentiate(0).unwrap();
//! assert_eq!(de.eval(&[3.0]).unwrap(), 3.0);
//! ```

mod diff;
mod parser;

use std::fmt;

use thiserror::Error;

pub use parser::{ParseError, ParseErrorKind};

/// Variable naming scheme an expression was parsed under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Context {
    /// A single variable spelled `x`.
    Univariate,
    /// Variables `x1..xn`.
    Multivariate(usize),
}

impl Context {
    /// Number of coordinates a point must have.
    pub fn dims(self) -> usize {
        match self {
            Context::Univariate => 1,
            Context::Multivariate(n) => n,
        }
    }

    fn var_name(self, index: usize) -> String {
        match self {
            Context::Univariate => "x".to_string(),
            Context::Multivariate(_) => format!("x{}", index + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// Precedence of unary minus, between `*` and `^`.
const NEG_PRECEDENCE: u8 = 3;

/// Expression tree node. Variables are stored by zero-based index.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// A parsed scalar function together with its variable context.
///
/// Trees are immutable once built; evaluation is a pure function of the
/// tree and the point.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    node: Node,
    context: Context,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, expression expects {expected}")]
    PointLength { expected: usize, got: usize },
    #[error("{operation} fault in `{subexpression}` (argument {argument})")]
    Domain {
        operation: &'static str,
        subexpression: String,
        argument: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("variable index {index} is not valid for a {dims}-variable expression")]
pub struct InvalidVariable {
    pub index: usize,
    pub dims: usize,
}

impl Expr {
    pub fn parse(source: &str, context: Context) -> Result<Self, ParseError> {
        let node = parser::parse(source, context)?;
        Ok(Expr { node, context })
    }

    /// Wraps an already built tree. Variable indices are checked against
    /// the context.
    pub fn from_node(node: Node, context: Context) -> Result<Self, InvalidVariable> {
        let dims = context.dims();
        if let Some(index) = node.max_var().filter(|&i| i >= dims) {
            return Err(InvalidVariable { index, dims });
        }
        Ok(Expr { node, context })
    }

    pub fn constant(value: f64, context: Context) -> Self {
        Expr {
            node: Node::Const(value),
            context,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn context(&self) -> Context {
        self.context
    }

    /// Exact partial derivative with respect to variable `var` (zero-based).
    pub fn differentiate(&self, var: usize) -> Result<Expr, InvalidVariable> {
        let dims = self.context.dims();
        if var >= dims {
            return Err(InvalidVariable { index: var, dims });
        }
        Ok(Expr {
            node: diff::derivative(&self.node, var),
            context: self.context,
        })
    }

    /// All first partials, in variable order.
    pub fn gradient(&self) -> Vec<Expr> {
        (0..self.context.dims())
            .map(|v| Expr {
                node: diff::derivative(&self.node, v),
                context: self.context,
            })
            .collect()
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.node.depends_on(var)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let expected = self.context.dims();
        if point.len() != expected {
            return Err(EvalError::PointLength {
                expected,
                got: point.len(),
            });
        }
        self.node.eval(point, self.context)
    }

    /// Shorthand for univariate evaluation.
    pub fn eval1(&self, x: f64) -> Result<f64, EvalError> {
        self.eval(&[x])
    }

    /// Re-homes a univariate expression as a function of coordinate
    /// `index` in an `n`-variable context, e.g. `x^2` becomes `x3^2`.
    pub fn lift(&self, index: usize, n: usize) -> Result<Expr, InvalidVariable> {
        if index >= n {
            return Err(InvalidVariable { index, dims: n });
        }
        Ok(Expr {
            node: self.node.map_vars(&|_| index),
            context: Context::Multivariate(n),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.node, self.context)
    }
}

impl Node {
    fn depends_on(&self, var: usize) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) => *v == var,
            Node::Unary(_, a) => a.depends_on(var),
            Node::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(v) => Some(*v),
            Node::Unary(_, a) => a.max_var(),
            Node::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    fn map_vars(&self, f: &dyn Fn(usize) -> usize) -> Node {
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(v) => Node::Var(f(*v)),
            Node::Unary(op, a) => Node::Unary(*op, Box::new(a.map_vars(f))),
            Node::Binary(op, a, b) => {
                Node::Binary(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
        }
    }

    fn fault(&self, operation: &'static str, argument: f64, context: Context) -> EvalError {
        EvalError::Domain {
            operation,
            subexpression: NodeDisplay(self, context).to_string(),
            argument,
        }
    }

    fn eval(&self, point: &[f64], context: Context) -> Result<f64, EvalError> {
        let value = match self {
            Node::Const(c) => *c,
            Node::Var(v) => point[*v],
            Node::Unary(op, a) => {
                let u = a.eval(point, context)?;
                match op {
                    UnaryOp::Neg => -u,
                    UnaryOp::Sin => u.sin(),
                    UnaryOp::Cos => u.cos(),
                    UnaryOp::Exp => u.exp(),
                    UnaryOp::Log => {
                        if u <= 0.0 {
                            return Err(self.fault("log of non-positive", u, context));
                        }
                        u.ln()
                    }
                    UnaryOp::Sqrt => {
                        if u < 0.0 {
                            return Err(self.fault("sqrt of negative", u, context));
                        }
                        u.sqrt()
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let u = a.eval(point, context)?;
                let v = b.eval(point, context)?;
                match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                    BinaryOp::Div => {
                        if v == 0.0 {
                            return Err(self.fault("division by zero", v, context));
                        }
                        u / v
                    }
                    BinaryOp::Pow => {
                        let p = u.powf(v);
                        if p.is_nan() {
                            return Err(self.fault("power", u, context));
                        }
                        p
                    }
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.fault("overflow", value, context))
        }
    }
}

struct NodeDisplay<'a>(&'a Node, Context);

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1)
    }
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Binary(op, _, _) => op.precedence(),
        Node::Unary(UnaryOp::Neg, _) => NEG_PRECEDENCE,
        Node::Const(c) if c.is_sign_negative() => NEG_PRECEDENCE,
        _ => u8::MAX,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, node: &Node, context: Context, paren: bool) -> fmt::Result {
    if paren {
        f.write_str("(")?;
        write_node(f, node, context)?;
        f.write_str(")")
    } else {
        write_node(f, node, context)
    }
}

// Prints with the minimum parentheses the grammar needs to re-parse to the
// same tree shape.
fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, context: Context) -> fmt::Result {
    match node {
        Node::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(v) => f.write_str(&context.var_name(*v)),
        Node::Unary(UnaryOp::Neg, a) => {
            f.write_str("-")?;
            write_child(f, a, context, precedence(a) < NEG_PRECEDENCE)
        }
        Node::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_node(f, a, context)?;
            f.write_str(")")
        }
        Node::Binary(op, a, b) => {
            let p = op.precedence();
            let (left_paren, right_paren) = match op {
                BinaryOp::Add | BinaryOp::Mul => (precedence(a) < p, precedence(b) <= p),
                BinaryOp::Sub | BinaryOp::Div => (precedence(a) < p, precedence(b) <= p),
                // the base of `^` is an atom; the exponent is a factor
                BinaryOp::Pow => (precedence(a) <= p, precedence(b) < NEG_PRECEDENCE),
            };
            write_child(f, a, context, left_paren)?;
            write!(f, "{}", op.symbol())?;
            write_child(f, b, context, right_paren)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(s: &str) -> Expr {
        Expr::parse(s, Context::Univariate).unwrap()
    }

    fn multi(s: &str, n: usize) -> Expr {
        Expr::parse(s, Context::Multivariate(n)).unwrap()
    }

    #[test]
    fn eval_basic() {
        assert_eq!(uni("x^2/2").eval1(4.0).unwrap(), 8.0);
        let v = uni("exp(log(x))").eval1(2.5).unwrap();
        assert!((v - 2.5).abs() <= 1e-15);
        assert_eq!(multi("x1*x2 - x3", 3).eval(&[2.0, 3.0, 1.0]).unwrap(), 5.0);
    }

    #[test]
    fn domain_faults() {
        match uni("1/x").eval1(0.0) {
            Err(EvalError::Domain { operation, subexpression, .. }) => {
                assert_eq!(operation, "division by zero");
                assert_eq!(subexpression, "1/x");
            }
            other => panic!("expected fault, got {other:?}"),
        }
        assert!(matches!(uni("log(x)").eval1(-1.0), Err(EvalError::Domain { .. })));
        assert!(matches!(uni("log(x)").eval1(0.0), Err(EvalError::Domain { .. })));
        assert!(matches!(uni("2*sqrt(x-1)").eval1(0.5), Err(EvalError::Domain { .. })));
        assert!(matches!(uni("x^0.5").eval1(-4.0), Err(EvalError::Domain { .. })));
        assert!(matches!(uni("exp(exp(x))").eval1(10.0), Err(EvalError::Domain { .. })));
    }

    #[test]
    fn point_length_checked() {
        assert_eq!(
            multi("x1", 2).eval(&[1.0]),
            Err(EvalError::PointLength { expected: 2, got: 1 })
        );
    }

    #[test]
    fn derivative_examples() {
        let d = uni("x^2/2").differentiate(0).unwrap();
        for x in [-3.0, 0.0, 0.5, 7.0] {
            assert_eq!(d.eval1(x).unwrap(), x);
        }
        assert_eq!(uni("sin(x)").differentiate(0).unwrap().eval1(0.0).unwrap(), 1.0);
        let d = multi("x1*x2", 3).differentiate(1).unwrap();
        assert_eq!(d.eval(&[3.0, 5.0, 0.0]).unwrap(), 3.0);
        assert!(multi("x1", 2).differentiate(2).is_err());
        assert!(uni("x").differentiate(1).is_err());
    }

    #[test]
    fn power_rule_with_negative_base() {
        let d = uni("x^3").differentiate(0).unwrap();
        assert_eq!(d.eval1(-2.0).unwrap(), 12.0);
        // exponent depends on x: general rule through log
        let d = uni("x^x").differentiate(0).unwrap();
        let expected = 2f64.powf(2.0) * (2f64.ln() + 1.0);
        assert!((d.eval1(2.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn lift_renames_variable() {
        let e = uni("x^2/3").lift(2, 4).unwrap();
        assert_eq!(e.to_string(), "x3^2/3");
        assert_eq!(e.eval(&[0.0, 0.0, 3.0, 0.0]).unwrap(), 3.0);
    }

    #[test]
    fn display_reparses() {
        for src in [
            "x1 - (x2 - x3)",
            "-x1^2",
            "(-x1)^2",
            "2^-x1",
            "x1^x2^x3",
            "(x1^x2)^x3",
            "x1/(x2*x3)",
            "-(x1+x2)*x3",
            "sin(x1)^2 + cos(-x2)",
        ] {
            let e = multi(src, 3);
            let again = multi(&e.to_string(), 3);
            assert_eq!(e, again, "{src} printed as {e}");
        }
    }

    #[test]
    fn negative_constants_print_parenthesized_where_needed() {
        let node = Node::Binary(
            BinaryOp::Pow,
            Box::new(Node::Const(-2.0)),
            Box::new(Node::Var(0)),
        );
        let e = Expr::from_node(node, Context::Univariate).unwrap();
        assert_eq!(e.to_string(), "(-2)^x");
        assert_eq!(e.eval1(2.0).unwrap(), 4.0);
    }
}
