//! Field expressions.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" unary)?
//! primary := number | "pi" | var | func "(" expr ")" | "(" expr ")"
//! var     := "x" | "y" | "z" | "t"
//! func    := "abs" | "sgn" | "sqrt" | "exp" | "ln" | "sin" | "cos"
//! ```
//!
//! `x`, `y`, `z` are coordinates 0, 1, 2; `t` is an alias of coordinate 2 for
//! the Heisenberg chart. `^` is right associative and binds tighter than unary
//! minus, so `-x^2` is `-(x^2)`. Derivatives come from forward-mode
//! second-order jets over the AST; `abs` and `sgn` use their almost-everywhere
//! derivatives.

use std::sync::Arc;

use super::ScalarField;
use crate::error::{AmvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sgn,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Parsed expression; cheap to clone.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Arc<Node>,
    source: String,
    arity: usize,
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "abs" => Func::Abs,
            "sgn" | "sign" => Func::Sgn,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    /// (f, f', f'') at v.
    fn eval3(self, v: f64) -> (f64, f64, f64) {
        match self {
            Func::Abs => (v.abs(), sgn(v), 0.0),
            Func::Sgn => (sgn(v), 0.0, 0.0),
            Func::Sqrt => {
                let s = v.sqrt();
                (s, 0.5 / s, -0.25 / (s * v))
            }
            Func::Exp => {
                let e = v.exp();
                (e, e, e)
            }
            Func::Ln => (v.ln(), 1.0 / v, -1.0 / (v * v)),
            Func::Sin => (v.sin(), v.cos(), -v.sin()),
            Func::Cos => (v.cos(), -v.sin(), -v.cos()),
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Abs => v.abs(),
            Func::Sgn => sgn(v),
            Func::Sqrt => v.sqrt(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, detail: impl Into<String>) -> Result<T> {
        Err(AmvError::Parse { offset: self.pos, detail: detail.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match name {
                    "x" => Ok(Node::Var(0)),
                    "y" => Ok(Node::Var(1)),
                    "z" | "t" => Ok(Node::Var(2)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    _ => match Func::from_name(name) {
                        Some(f) => {
                            if !self.eat(b'(') {
                                return self.err(format!("expected '(' after {name}"));
                            }
                            let arg = self.expr()?;
                            if !self.eat(b')') {
                                return self.err("expected ')'");
                            }
                            Ok(Node::Call(f, Box::new(arg)))
                        }
                        None => {
                            self.pos = start;
                            self.err(format!("unknown identifier '{name}'"))
                        }
                    },
                }
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut q = self.pos + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                while q < s.len() && s[q].is_ascii_digit() {
                    q += 1;
                }
                self.pos = q;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => Ok(Node::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("malformed number '{text}'"))
            }
        }
    }
}

fn max_var(node: &Node) -> Option<usize> {
    match node {
        Node::Num(_) => None,
        Node::Var(i) => Some(*i),
        Node::Neg(a) | Node::Call(_, a) => max_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            max_var(a).max(max_var(b))
        }
    }
}

/// Evaluates a variable-free subtree.
fn constant_value(node: &Node) -> Option<f64> {
    if max_var(node).is_some() {
        None
    } else {
        Some(eval(node, &[]))
    }
}

fn eval(node: &Node, p: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => p.get(*i).copied().unwrap_or(f64::NAN),
        Node::Neg(a) => -eval(a, p),
        Node::Add(a, b) => eval(a, p) + eval(b, p),
        Node::Sub(a, b) => eval(a, p) - eval(b, p),
        Node::Mul(a, b) => eval(a, p) * eval(b, p),
        Node::Div(a, b) => eval(a, p) / eval(b, p),
        Node::Pow(a, b) => {
            let base = eval(a, p);
            let e = eval(b, p);
            if e.fract() == 0.0 && e.abs() <= 64.0 {
                base.powi(e as i32)
            } else {
                base.powf(e)
            }
        }
        Node::Call(f, a) => f.apply(eval(a, p)),
    }
}

/// Scale of the summed terms, for roundoff floors.
fn magnitude(node: &Node, p: &[f64]) -> f64 {
    match node {
        Node::Num(v) => v.abs(),
        Node::Var(i) => p.get(*i).map(|v| v.abs()).unwrap_or(f64::NAN),
        Node::Neg(a) => magnitude(a, p),
        Node::Add(a, b) | Node::Sub(a, b) => magnitude(a, p) + magnitude(b, p),
        Node::Mul(a, b) => magnitude(a, p) * magnitude(b, p),
        Node::Div(a, b) => magnitude(a, p) / eval(b, p).abs(),
        Node::Pow(_, _) | Node::Call(_, _) => eval(node, p).abs(),
    }
}

/// Second-order jet: value, gradient, row-major Hessian.
#[derive(Debug, Clone)]
struct Jet {
    v: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Jet {
    fn constant(v: f64, n: usize) -> Self {
        Jet { v, g: vec![0.0; n], h: vec![0.0; n * n] }
    }

    fn var(i: usize, p: &[f64]) -> Self {
        let n = p.len();
        let mut j = Jet::constant(p.get(i).copied().unwrap_or(f64::NAN), n);
        if i < n {
            j.g[i] = 1.0;
        }
        j
    }

    fn lin(&self, a: f64, other: &Jet, b: f64) -> Jet {
        Jet {
            v: a * self.v + b * other.v,
            g: self.g.iter().zip(&other.g).map(|(x, y)| a * x + b * y).collect(),
            h: self.h.iter().zip(&other.h).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.g.len();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                h[k] = self.v * o.h[k] + o.v * self.h[k] + self.g[i] * o.g[j] + o.g[i] * self.g[j];
            }
        }
        Jet { v: self.v * o.v, g: self.g.iter().zip(&o.g).map(|(a, b)| self.v * b + o.v * a).collect(), h }
    }

    /// Chain rule for a scalar function with (f, f', f'') at self.v.
    fn compose(&self, (f0, f1, f2): (f64, f64, f64)) -> Jet {
        let n = self.g.len();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                h[k] = f1 * self.h[k] + f2 * self.g[i] * self.g[j];
            }
        }
        Jet { v: f0, g: self.g.iter().map(|a| f1 * a).collect(), h }
    }
}

fn jet(node: &Node, p: &[f64]) -> Jet {
    let n = p.len();
    match node {
        Node::Num(v) => Jet::constant(*v, n),
        Node::Var(i) => Jet::var(*i, p),
        Node::Neg(a) => {
            let ja = jet(a, p);
            let v = ja.v;
            ja.compose((-v, -1.0, 0.0))
        }
        Node::Add(a, b) => jet(a, p).lin(1.0, &jet(b, p), 1.0),
        Node::Sub(a, b) => jet(a, p).lin(1.0, &jet(b, p), -1.0),
        Node::Mul(a, b) => jet(a, p).mul(&jet(b, p)),
        Node::Div(a, b) => {
            let jb = jet(b, p);
            let v = jb.v;
            let recip = jb.compose((1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)));
            jet(a, p).mul(&recip)
        }
        Node::Pow(a, b) => {
            let ja = jet(a, p);
            match constant_value(b) {
                Some(k) => {
                    let u = ja.v;
                    let triple = if k.fract() == 0.0 && k.abs() <= 64.0 {
                        let ki = k as i32;
                        let d1 = if ki == 0 { 0.0 } else { k * u.powi(ki - 1) };
                        let d2 = if ki == 0 || ki == 1 { 0.0 } else { k * (k - 1.0) * u.powi(ki - 2) };
                        (u.powi(ki), d1, d2)
                    } else {
                        (u.powf(k), k * u.powf(k - 1.0), k * (k - 1.0) * u.powf(k - 2.0))
                    };
                    ja.compose(triple)
                }
                None => {
                    // a^b = exp(b ln a)
                    let lna = ja.compose(Func::Ln.eval3(ja.v));
                    let prod = jet(b, p).mul(&lna);
                    prod.compose(Func::Exp.eval3(prod.v))
                }
            }
        }
        Node::Call(f, a) => {
            let ja = jet(a, p);
            ja.compose(f.eval3(ja.v))
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut parser = Parser { src: src.as_bytes(), pos: 0 };
        let root = parser.expr()?;
        if parser.peek().is_some() {
            return parser.err("trailing input");
        }
        let arity = max_var(&root).map_or(0, |i| i + 1);
        Ok(Self { root: Arc::new(root), source: src.to_string(), arity })
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// Number of leading coordinates the expression reads.
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl ScalarField for Expr {
    fn value(&self, p: &[f64]) -> f64 {
        eval(&self.root, p)
    }
    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some(jet(&self.root, p).g)
    }
    fn hessian(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some(jet(&self.root, p).h)
    }
    fn magnitude(&self, p: &[f64]) -> f64 {
        magnitude(&self.root, p)
    }
    fn describe(&self) -> String {
        self.source.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str, p: &[f64]) -> f64 {
        Expr::parse(s).unwrap().value(p)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(v("1 + 2 * 3", &[]), 7.0);
        assert_eq!(v("-x^2", &[3.0]), -9.0);
        assert_eq!(v("2^3^2", &[]), 512.0);
        assert_eq!(v("(1 - 2) - 3", &[]), -4.0);
        assert_eq!(v("8 / 2 / 2", &[]), 2.0);
        assert_eq!(v("2 * -3", &[]), -6.0);
        assert_eq!(v("1.5e2 + 2E-1", &[]), 150.2);
    }

    #[test]
    fn coordinates_and_functions() {
        assert_eq!(v("x - 3*x*y + y^2", &[1.0, 2.0]), 1.0 - 6.0 + 4.0);
        assert_eq!(v("t", &[0.0, 0.0, 5.0]), 5.0);
        assert_eq!(v("abs(x) + sgn(y)", &[-2.0, -0.1]), 1.0);
        assert_eq!(v("sgn(0)", &[]), 0.0);
        assert!((v("cos(pi)", &[]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn arity_counts_highest_coordinate() {
        assert_eq!(Expr::parse("3").unwrap().arity(), 0);
        assert_eq!(Expr::parse("x^2").unwrap().arity(), 1);
        assert_eq!(Expr::parse("x + t").unwrap().arity(), 3);
    }

    #[test]
    fn parse_errors_report_offset() {
        match Expr::parse("x + * y") {
            Err(AmvError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("x y").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn jets_match_hand_derivatives() {
        let e = Expr::parse("x^2 - 3*x*y + y^2").unwrap();
        let p = [0.5, -2.0];
        assert_eq!(e.gradient(&p).unwrap(), vec![2.0 * 0.5 + 6.0, -1.5 - 4.0]);
        assert_eq!(e.hessian(&p).unwrap(), vec![2.0, -3.0, -3.0, 2.0]);

        let e = Expr::parse("exp(x) * sin(y) / (1 + x^2)").unwrap();
        let p = [0.3, 0.8];
        let g = e.gradient(&p).unwrap();
        let h = e.hessian(&p).unwrap();
        let d = 1e-5;
        for i in 0..2 {
            let mut a = p;
            let mut b = p;
            a[i] += d;
            b[i] -= d;
            let fd = (e.value(&a) - e.value(&b)) / (2.0 * d);
            assert!((fd - g[i]).abs() < 1e-8);
            let ga = e.gradient(&a).unwrap();
            let gb = e.gradient(&b).unwrap();
            for j in 0..2 {
                assert!(((ga[j] - gb[j]) / (2.0 * d) - h[i * 2 + j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn variable_exponent_uses_exp_log() {
        let e = Expr::parse("x^y").unwrap();
        let p = [2.0, 3.0];
        assert!((e.value(&p) - 8.0).abs() < 1e-14);
        let g = e.gradient(&p).unwrap();
        assert!((g[0] - 12.0).abs() < 1e-12);
        assert!((g[1] - 8.0 * 2f64.ln()).abs() < 1e-12);
    }
}
