//! Symbolic differentiation with light constant folding.

use super::{BinaryOp, Node, UnaryOp};

fn is_const(n: &Node, v: f64) -> bool {
    matches!(n, Node::Const(c) if *c == v)
}

fn konst(v: f64) -> Node {
    Node::Const(v)
}

fn unary(op: UnaryOp, a: Node) -> Node {
    Node::Unary(op, Box::new(a))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => konst(-c),
        Node::Unary(UnaryOp::Neg, inner) => *inner,
        a => unary(UnaryOp::Neg, a),
    }
}

fn add(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => konst(x + y),
        (a, b) if is_const(&a, 0.0) => b,
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) => Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => konst(x - y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => neg(b),
        (a, b) => Node::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => konst(x * y),
        (a, _) if is_const(&a, 0.0) => konst(0.0),
        (_, b) if is_const(&b, 0.0) => konst(0.0),
        (a, b) if is_const(&a, 1.0) => b,
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) if is_const(&a, -1.0) => neg(b),
        (a, b) if is_const(&b, -1.0) => neg(a),
        (a, b) => Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (a, b) {
        (a, _) if is_const(&a, 0.0) => konst(0.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Node::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match (a, b) {
        (_, b) if is_const(&b, 0.0) => konst(1.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Node::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
    }
}

/// d(node)/d(x_var).
pub(super) fn derivative(node: &Node, var: usize) -> Node {
    if !node.depends_on(var) {
        return konst(0.0);
    }
    match node {
        Node::Const(_) => konst(0.0),
        Node::Var(v) => konst(if *v == var { 1.0 } else { 0.0 }),
        Node::Unary(op, a) => {
            let da = derivative(a, var);
            let u = (**a).clone();
            match op {
                UnaryOp::Neg => neg(da),
                UnaryOp::Sin => mul(unary(UnaryOp::Cos, u), da),
                UnaryOp::Cos => mul(neg(unary(UnaryOp::Sin, u)), da),
                UnaryOp::Exp => mul(unary(UnaryOp::Exp, u), da),
                UnaryOp::Log => div(da, u),
                UnaryOp::Sqrt => div(da, mul(konst(2.0), unary(UnaryOp::Sqrt, u))),
            }
        }
        Node::Binary(op, a, b) => {
            let u = (**a).clone();
            let v = (**b).clone();
            match op {
                BinaryOp::Add => add(derivative(a, var), derivative(b, var)),
                BinaryOp::Sub => sub(derivative(a, var), derivative(b, var)),
                BinaryOp::Mul => add(
                    mul(derivative(a, var), v),
                    mul(u, derivative(b, var)),
                ),
                BinaryOp::Div => {
                    let da = derivative(a, var);
                    let db = derivative(b, var);
                    if is_const(&db, 0.0) {
                        div(da, v)
                    } else {
                        div(
                            sub(mul(da, v.clone()), mul(u, db)),
                            mul(v.clone(), v),
                        )
                    }
                }
                BinaryOp::Pow => {
                    if !b.depends_on(var) {
                        // power rule; valid for negative bases as well
                        let lowered = match &v {
                            Node::Const(c) => konst(c - 1.0),
                            _ => sub(v.clone(), konst(1.0)),
                        };
                        mul(mul(v, pow(u, lowered)), derivative(a, var))
                    } else if !a.depends_on(var) {
                        mul(
                            mul(node.clone(), unary(UnaryOp::Log, u)),
                            derivative(b, var),
                        )
                    } else {
                        // u^v * (v' ln u + v u'/u)
                        let du = derivative(a, var);
                        let dv = derivative(b, var);
                        mul(
                            node.clone(),
                            add(
                                mul(dv, unary(UnaryOp::Log, u.clone())),
                                div(mul(v, du), u),
                            ),
                        )
                    }
                }
            }
        }
    }
}
