//! A small arithmetic expression language for drift and diffusion fields.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | "x1" | "x2" | ... | "x" | "(" expr ")"
//! ```
//!
//! `x` is an alias for `x1`. `^` is right-associative and binds tighter than
//! unary minus, so `-x^2` is `-(x^2)`. Expressions compile to a postfix
//! program with constant folding; evaluation does not allocate.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const MAX_STACK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    PowI(i32),
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
}

/// A parsed, compiled scalar field over `x1, x2, ...`.
#[derive(Clone)]
pub struct Expr {
    source: String,
    program: Vec<Op>,
    arity: usize,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut parser = Parser {
            chars: source.char_indices().collect(),
            pos: 0,
        };
        let node = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.chars.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        let node = fold(node);
        let mut program = Vec::new();
        emit(&node, &mut program);
        if stack_depth(&program) > MAX_STACK {
            return Err(Error::Expression {
                column: 0,
                message: format!("expression nests deeper than {MAX_STACK}"),
            });
        }
        let arity = program
            .iter()
            .filter_map(|op| match op {
                Op::Var(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Ok(Self {
            source: source.trim().to_string(),
            program,
            arity,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format_number(value),
            program: vec![Op::Const(value)],
            arity: 0,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of coordinates the expression reads (highest `xk` index).
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// The value when the expression folds to a constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.program.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    /// Evaluates at `x`. Coordinates beyond `x.len()` read as zero.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut stack = [0.0f64; MAX_STACK];
        let mut top = 0usize;
        for op in &self.program {
            match *op {
                Op::Const(c) => {
                    stack[top] = c;
                    top += 1;
                }
                Op::Var(i) => {
                    stack[top] = x.get(i).copied().unwrap_or(0.0);
                    top += 1;
                }
                Op::Neg => stack[top - 1] = -stack[top - 1],
                Op::PowI(k) => stack[top - 1] = stack[top - 1].powi(k),
                binary => {
                    top -= 1;
                    let (a, b) = (stack[top - 1], stack[top]);
                    stack[top - 1] = apply(binary, a, b);
                }
            }
        }
        stack[0]
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.program == other.program
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
            Raw::Number(v) => Ok(Expr::constant(v)),
        }
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn apply(op: Op, a: f64, b: f64) -> f64 {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
        Op::Pow => a.powf(b),
        _ => unreachable!("not a binary operator"),
    }
}

fn fold(node: Node) -> Node {
    match node {
        Node::Neg(inner) => match fold(*inner) {
            Node::Num(v) => Node::Num(-v),
            other => Node::Neg(Box::new(other)),
        },
        Node::Bin(op, a, b) => {
            let (a, b) = (fold(*a), fold(*b));
            match (&a, &b, op) {
                (Node::Num(x), Node::Num(y), _) => Node::Num(apply(binary_op(op), *x, *y)),
                (Node::Num(z), _, '*') | (_, Node::Num(z), '*') if *z == 0.0 => Node::Num(0.0),
                (Node::Num(z), other, '+') | (other, Node::Num(z), '+') if *z == 0.0 => {
                    other.clone()
                }
                (other, Node::Num(one), '*') | (Node::Num(one), other, '*') if *one == 1.0 => {
                    other.clone()
                }
                _ => Node::Bin(op, Box::new(a), Box::new(b)),
            }
        }
        leaf => leaf,
    }
}

fn binary_op(c: char) -> Op {
    match c {
        '+' => Op::Add,
        '-' => Op::Sub,
        '*' => Op::Mul,
        '/' => Op::Div,
        '^' => Op::Pow,
        _ => unreachable!(),
    }
}

fn emit(node: &Node, out: &mut Vec<Op>) {
    match node {
        Node::Num(v) => out.push(Op::Const(*v)),
        Node::Var(i) => out.push(Op::Var(*i)),
        Node::Neg(inner) => {
            emit(inner, out);
            out.push(Op::Neg);
        }
        Node::Bin('^', base, exp) => {
            emit(base, out);
            match **exp {
                Node::Num(k) if k.fract() == 0.0 && k.abs() <= 64.0 => out.push(Op::PowI(k as i32)),
                _ => {
                    emit(exp, out);
                    out.push(Op::Pow);
                }
            }
        }
        Node::Bin(op, a, b) => {
            emit(a, out);
            emit(b, out);
            out.push(binary_op(*op));
        }
    }
}

fn stack_depth(program: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in program {
        match op {
            Op::Const(_) | Op::Var(_) => depth += 1,
            Op::Neg | Op::PowI(_) => {}
            _ => depth -= 1,
        }
        max = max.max(depth);
    }
    max
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn error(&self, message: &str) -> Error {
        let column = self
            .chars
            .get(self.pos)
            .map(|(i, _)| i + 1)
            .unwrap_or_else(|| self.chars.last().map(|(i, _)| i + 2).unwrap_or(1));
        Error::Expression {
            column,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some('x') => self.variable(),
            Some(_) => Err(self.error("expected a number, variable or '('")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let mut end = self.pos;
        let mut seen_exp = false;
        while end < self.chars.len() {
            let c = self.chars[end].1;
            let sign_after_exp =
                (c == '+' || c == '-') && seen_exp && matches!(self.chars[end - 1].1, 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || sign_after_exp {
                end += 1;
            } else if (c == 'e' || c == 'E') && !seen_exp {
                seen_exp = true;
                end += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..end].iter().map(|&(_, c)| c).collect();
        let value = text
            .parse::<f64>()
            .map_err(|_| self.error(&format!("malformed number '{text}'")))?;
        self.pos = end;
        Ok(Node::Num(value))
    }

    fn variable(&mut self) -> Result<Node> {
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(Node::Var(0));
        }
        let digits: String = self.chars[start..self.pos]
            .iter()
            .map(|&(_, c)| c)
            .collect();
        match digits.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Node::Var(k - 1)),
            _ => {
                self.pos = start;
                Err(self.error("variables are numbered from x1"))
            }
        }
    }
}
