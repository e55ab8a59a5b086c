//! Small arithmetic expression language for user-supplied model functions.
//!
//! Grammar: numbers, named variables, `pi`, `e`, binary `+ - * / ^`, unary
//! minus, parentheses and the functions `sin cos tan exp ln log sqrt abs
//! tanh sinh cosh atan sign min max`. `^` is right-associative and binds
//! tighter than unary minus, so `-u^2 = -(u^2)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::profile::ScalarFn;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(&'static str, Vec<Node>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

const UNARY: [&str; 13] =
    ["sin", "cos", "tan", "exp", "ln", "log", "sqrt", "abs", "tanh", "sinh", "cosh", "atan", "sign"];
const BINARY: [&str; 2] = ["min", "max"];

impl Expr {
    /// Parses `src`; identifiers must appear in `vars` (their index is the
    /// slot used by [`Expr::eval`]).
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, vars };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!("unexpected trailing input in `{src}`")));
        }
        Ok(Self { root: fold(root), source: src.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        eval(&self.root, vars)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    /// Single-variable closure (the expression must use only slot 0).
    pub fn into_fn(self) -> ScalarFn {
        Arc::new(move |x| eval(&self.root, &[x]))
    }
}

fn eval(node: &Node, vars: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval(a, vars),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, vars), eval(b, vars));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                '^' => pow(x, y),
                _ => unreachable!(),
            }
        }
        Node::Call(name, args) => {
            let x = eval(&args[0], vars);
            match *name {
                "sin" => x.sin(),
                "cos" => x.cos(),
                "tan" => x.tan(),
                "exp" => x.exp(),
                "ln" | "log" => x.ln(),
                "sqrt" => x.sqrt(),
                "abs" => x.abs(),
                "tanh" => x.tanh(),
                "sinh" => x.sinh(),
                "cosh" => x.cosh(),
                "atan" => x.atan(),
                "sign" => {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                "min" => x.min(eval(&args[1], vars)),
                "max" => x.max(eval(&args[1], vars)),
                _ => unreachable!(),
            }
        }
    }
}

fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

fn fold(node: Node) -> Node {
    match node {
        Node::Neg(a) => match fold(*a) {
            Node::Num(v) => Node::Num(-v),
            a => Node::Neg(Box::new(a)),
        },
        Node::Bin(op, a, b) => {
            let (a, b) = (fold(*a), fold(*b));
            if let (Node::Num(_), Node::Num(_)) = (&a, &b) {
                Node::Num(eval(&Node::Bin(op, Box::new(a), Box::new(b)), &[]))
            } else {
                Node::Bin(op, Box::new(a), Box::new(b))
            }
        }
        Node::Call(name, args) => {
            let args: Vec<Node> = args.into_iter().map(fold).collect();
            if args.iter().all(|a| matches!(a, Node::Num(_))) {
                Node::Num(eval(&Node::Call(name, args), &[]))
            } else {
                Node::Call(name, args)
            }
        }
        n => n,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
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
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expression(format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.peek().cloned().ok_or_else(|| Error::Expression("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Op(c) => Err(Error::Expression(format!("unexpected `{c}`"))),
            Tok::Ident(name) => {
                if let Some(f) = UNARY.iter().chain(BINARY.iter()).find(|f| **f == name) {
                    let arity = if BINARY.contains(f) { 2 } else { 1 };
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while args.len() < arity {
                        self.expect(',')?;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    return Ok(Node::Call(f, args));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expression(format!("unknown identifier `{name}`"))),
                }
            }
        }
    }
}
