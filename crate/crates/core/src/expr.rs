//! Arithmetic expressions over `x`, `u`, `p` (= `u_x`) and `norm` (= `||u||`).
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Functions: `sin cos tan tanh atan exp ln sqrt abs`. Constants: `pi`.

use crate::error::{Error, Result};

/// Evaluation point of a coefficient function.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub u: f64,
    pub p: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    X,
    U,
    P,
    Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "atan" | "arctan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Tanh => v.tanh(),
            Func::Atan => v.atan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, pt: &Point) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(Var::X) => pt.x,
            Node::Var(Var::U) => pt.u,
            Node::Var(Var::P) => pt.p,
            Node::Var(Var::Norm) => pt.norm,
            Node::Neg(a) => -a.eval(pt),
            Node::Add(a, b) => a.eval(pt) + b.eval(pt),
            Node::Sub(a, b) => a.eval(pt) - b.eval(pt),
            Node::Mul(a, b) => a.eval(pt) * b.eval(pt),
            Node::Div(a, b) => a.eval(pt) / b.eval(pt),
            Node::Pow(a, b) => {
                let e = b.eval(pt);
                let base = a.eval(pt);
                if e == e.trunc() && e.abs() <= 16.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Call(f, a) => f.apply(a.eval(pt)),
        }
    }

    fn uses(&self, var: Var) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(a) | Node::Call(_, a) => a.uses(var),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.uses(var) || b.uses(var),
        }
    }
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in {src:?} at token {}",
                parser.pos
            )));
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    #[inline]
    pub fn eval(&self, pt: &Point) -> f64 {
        self.root.eval(pt)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_norm(&self) -> bool {
        self.root.uses(Var::Norm)
    }

    pub fn uses_u(&self) -> bool {
        self.root.uses(Var::U)
    }

    pub fn uses_p(&self) -> bool {
        self.root.uses(Var::P)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|e| Error::Expression(format!("bad number {text:?}: {e}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!(
                "unexpected character {c:?} in {src:?}"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let f = Func::lookup(&name)
                        .ok_or_else(|| Error::Expression(format!("unknown function {name:?}")))?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Tok::RParen) => Ok(Node::Call(f, Box::new(arg))),
                        _ => Err(Error::Expression(format!("missing ')' after {name}("))),
                    }
                } else {
                    match name.as_str() {
                        "x" => Ok(Node::Var(Var::X)),
                        "u" => Ok(Node::Var(Var::U)),
                        "p" | "ux" | "u_x" => Ok(Node::Var(Var::P)),
                        "norm" => Ok(Node::Var(Var::Norm)),
                        "pi" => Ok(Node::Num(std::f64::consts::PI)),
                        _ => Err(Error::Expression(format!("unknown identifier {name:?}"))),
                    }
                }
            }
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, pt: Point) -> f64 {
        Expr::parse(src).unwrap().eval(&pt)
    }

    #[test]
    fn precedence_and_associativity() {
        let pt = Point::default();
        assert_eq!(eval("1 + 2 * 3", pt), 7.0);
        assert_eq!(eval("(1 + 2) * 3", pt), 9.0);
        assert_eq!(eval("8 / 4 / 2", pt), 1.0);
        assert_eq!(eval("2 ^ 3 ^ 2", pt), 512.0);
        assert_eq!(eval("-2 ^ 2", pt), -4.0);
        assert_eq!(eval("2 * -3", pt), -6.0);
        assert_eq!(eval("1.5e-3 * 2E3", pt), 3.0);
    }

    #[test]
    fn variables_and_functions() {
        let pt = Point {
            x: 0.5,
            u: 2.0,
            p: -1.0,
            norm: 3.0,
        };
        assert!((eval("-2*tanh(u)", pt) + 2.0 * 2.0f64.tanh()).abs() < 1e-15);
        assert_eq!(eval("1 + 1/(1+norm^2)", pt), 1.1);
        assert_eq!(eval("x + u + p + ux", pt), 0.5 + 2.0 - 1.0 - 1.0);
        assert!((eval("cos(pi)", pt) + 1.0).abs() < 1e-15);
        assert!((eval("2/pi*atan(norm+1)", pt) - 2.0 / std::f64::consts::PI * 4.0f64.atan()).abs() < 1e-15);
    }

    #[test]
    fn dependency_queries() {
        let e = Expr::parse("1 + 1/(1+norm^2)").unwrap();
        assert!(e.uses_norm() && !e.uses_u() && !e.uses_p());
        let e = Expr::parse("-tanh(u) + 0*p").unwrap();
        assert!(e.uses_u() && e.uses_p() && !e.uses_norm());
    }

    #[test]
    fn malformed_expressions_rejected() {
        for src in ["", "1 +", "foo", "sin 1", "(1 + 2", "1 ? 2", "bogus(1)", "1 2"] {
            assert!(Expr::parse(src).is_err(), "{src:?} should fail");
        }
    }
}
