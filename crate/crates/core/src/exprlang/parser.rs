use thiserror::Error;

use super::{BinaryOp, Context, Node, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {expected}, found `{found}`")]
    Unexpected { expected: &'static str, found: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable `{name}` out of range for {n} variables")]
    VariableOutOfRange { name: String, n: usize },
    #[error("malformed number `{0}`")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((start, Tok::Op(c as char)));
                i += 1;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
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
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadNumber(text.to_string()),
                })?;
                out.push((start, Tok::Num(value)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(source[start..i].to_string())));
            }
            _ => {
                let ch = source[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnexpectedChar(ch),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    context: Context,
}

pub(super) fn parse(source: &str, context: Context) -> Result<Node, ParseError> {
    let toks = lex(source)?;
    if toks.is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: source.len(),
        context,
    };
    let node = p.expr()?;
    if let Some((offset, tok)) = p.toks.get(p.pos) {
        return Err(ParseError {
            offset: *offset,
            kind: ParseErrorKind::Unexpected {
                expected: "operator or end of input",
                found: tok.describe(),
            },
        });
    }
    Ok(node)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Tok::Op(c)) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(ParseError {
                offset: self.offset(),
                kind: ParseErrorKind::Unexpected {
                    expected: "`)`",
                    found: tok.describe(),
                },
            }),
            None => Err(ParseError {
                offset: self.end,
                kind: ParseErrorKind::UnexpectedEnd,
            }),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.factor()?;
            let op = if op == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.eat_op(&['-']).is_some() {
            let inner = self.factor()?;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.factor()?;
            return Ok(Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::UnexpectedEnd,
            });
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(op) = function(&name) {
                    match self.peek() {
                        Some(Tok::LParen) => self.pos += 1,
                        _ => {
                            return Err(ParseError {
                                offset: self.offset(),
                                kind: ParseErrorKind::Unexpected {
                                    expected: "`(` after function name",
                                    found: self
                                        .peek()
                                        .map_or_else(|| "end of input".into(), Tok::describe),
                                },
                            })
                        }
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Unary(op, Box::new(arg)));
                }
                self.variable(&name, offset).map(Node::Var)
            }
            other => Err(ParseError {
                offset,
                kind: ParseErrorKind::Unexpected {
                    expected: "number, variable, function or `(`",
                    found: other.describe(),
                },
            }),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<usize, ParseError> {
        let unknown = || ParseError {
            offset,
            kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
        };
        match self.context {
            Context::Univariate => {
                if name == "x" {
                    Ok(0)
                } else {
                    Err(unknown())
                }
            }
            Context::Multivariate(n) => {
                let digits = name.strip_prefix('x').ok_or_else(unknown)?;
                if digits.is_empty()
                    || !digits.bytes().all(|b| b.is_ascii_digit())
                    || (digits.len() > 1 && digits.starts_with('0'))
                {
                    return Err(unknown());
                }
                match digits.parse::<usize>() {
                    Ok(k) if k >= 1 && k <= n => Ok(k - 1),
                    _ => Err(ParseError {
                        offset,
                        kind: ParseErrorKind::VariableOutOfRange {
                            name: name.to_string(),
                            n,
                        },
                    }),
                }
            }
        }
    }
}

fn function(name: &str) -> Option<UnaryOp> {
    Some(match name {
        "sin" => UnaryOp::Sin,
        "cos" => UnaryOp::Cos,
        "exp" => UnaryOp::Exp,
        "log" => UnaryOp::Log,
        "sqrt" => UnaryOp::Sqrt,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Box<Node> {
        Box::new(Node::Const(v))
    }
    fn var(i: usize) -> Box<Node> {
        Box::new(Node::Var(i))
    }

    #[test]
    fn shapes() {
        assert_eq!(
            parse("x^2/2", Context::Univariate).unwrap(),
            Node::Binary(
                BinaryOp::Div,
                Box::new(Node::Binary(BinaryOp::Pow, var(0), c(2.0))),
                c(2.0)
            )
        );
        assert_eq!(
            parse("x1 - x2", Context::Multivariate(3)).unwrap(),
            Node::Binary(BinaryOp::Sub, var(0), var(1))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let m = Context::Multivariate(3);
        // `^` binds tighter than unary minus
        assert_eq!(
            parse("-x1^2", m).unwrap(),
            Node::Unary(
                UnaryOp::Neg,
                Box::new(Node::Binary(BinaryOp::Pow, var(0), c(2.0)))
            )
        );
        // right associative
        assert_eq!(
            parse("x1^x2^x3", m).unwrap(),
            Node::Binary(
                BinaryOp::Pow,
                var(0),
                Box::new(Node::Binary(BinaryOp::Pow, var(1), var(2)))
            )
        );
        // exponent may carry its own sign
        assert_eq!(
            parse("2^-x1", m).unwrap(),
            Node::Binary(BinaryOp::Pow, c(2.0), Box::new(Node::Unary(UnaryOp::Neg, var(0))))
        );
        // unary minus binds tighter than `*`
        assert_eq!(
            parse("-x1*x2", m).unwrap(),
            Node::Binary(BinaryOp::Mul, Box::new(Node::Unary(UnaryOp::Neg, var(0))), var(1))
        );
        // left associative subtraction
        assert_eq!(
            parse("x1-x2-x3", m).unwrap(),
            Node::Binary(
                BinaryOp::Sub,
                Box::new(Node::Binary(BinaryOp::Sub, var(0), var(1))),
                var(2)
            )
        );
    }

    #[test]
    fn numbers() {
        let u = Context::Univariate;
        assert_eq!(parse("1.5e-3", u).unwrap(), Node::Const(1.5e-3));
        assert_eq!(parse(".25", u).unwrap(), Node::Const(0.25));
        assert!(matches!(
            parse("1.2.3", u).unwrap_err().kind,
            ParseErrorKind::BadNumber(_)
        ));
    }

    #[test]
    fn no_implicit_multiplication() {
        let err = parse("2(x1-x2)", Context::Multivariate(3)).unwrap_err();
        assert_eq!(err.offset, 1);
        assert!(matches!(err.kind, ParseErrorKind::Unexpected { .. }));
        assert!(parse("2x", Context::Univariate).is_err());
    }

    #[test]
    fn identifier_errors() {
        let m = Context::Multivariate(3);
        assert_eq!(
            parse("x1 + y", m).unwrap_err(),
            ParseError {
                offset: 5,
                kind: ParseErrorKind::UnknownIdentifier("y".into())
            }
        );
        assert!(matches!(
            parse("x4", m).unwrap_err().kind,
            ParseErrorKind::VariableOutOfRange { n: 3, .. }
        ));
        assert!(matches!(
            parse("x0", m).unwrap_err().kind,
            ParseErrorKind::VariableOutOfRange { .. }
        ));
        assert!(matches!(
            parse("x", m).unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(_)
        ));
        assert!(matches!(
            parse("x1", Context::Univariate).unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(_)
        ));
        assert!(matches!(
            parse("tan(x)", Context::Univariate).unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(_)
        ));
    }

    #[test]
    fn structural_errors() {
        let u = Context::Univariate;
        assert_eq!(parse("   ", u).unwrap_err().kind, ParseErrorKind::Empty);
        assert_eq!(parse("(x", u).unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(parse("x+", u).unwrap_err().offset, 2);
        assert!(parse("sin x", u).is_err());
        assert_eq!(
            parse("x # 2", u).unwrap_err(),
            ParseError {
                offset: 2,
                kind: ParseErrorKind::UnexpectedChar('#')
            }
        );
    }
}
