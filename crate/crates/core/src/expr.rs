//! Scalar-field expressions: parsing, printing and jet evaluation.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := literal ('^' exponent)?          (right-associative, folded)
//! literal  := '-'? number | '(' '-'? number ')'
//! atom     := number | ident | func '(' expr ')' | '(' expr ')'
//! func     := sin | cos | exp | log | sqrt
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

use crate::jets::{EvalContext, EvalError, Jet2, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Expression tree. Subtrees are shared, so cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
    /// Power with a literal exponent.
    Pow(Arc<Expr>, f64),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at offset {offset}: expected {expected}\n  {excerpt}\n  {caret}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub excerpt: String,
    caret: String,
}

impl ParseError {
    fn new(source: &str, offset: usize, expected: impl Into<String>) -> Self {
        let offset = offset.min(source.len());
        let line_start = source[..offset].rfind('\n').map_or(0, |i| i + 1);
        let line_end = source[offset..]
            .find('\n')
            .map_or(source.len(), |i| offset + i);
        let excerpt = source[line_start..line_end].to_string();
        let caret = format!("{}^", " ".repeat(source[line_start..offset].chars().count()));
        Self {
            offset,
            expected: expected.into(),
            excerpt,
            caret,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer {
            src,
            toks: Vec::new(),
        };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == b'.' {
                i = lx.number(i)?;
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else if b"+-*/^()".contains(&c) {
                lx.toks.push((Tok::Sym(c as char), i));
                i += 1;
            } else {
                return Err(ParseError::new(src, i, "a number, identifier, operator or parenthesis"));
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }

    fn number(&mut self, start: usize) -> Result<usize, ParseError> {
        let bytes = self.src.as_bytes();
        let mut i = start;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i - s
        };
        let mut n = digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            n += digits(&mut i);
        }
        if n == 0 {
            return Err(ParseError::new(self.src, start, "digits"));
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if digits(&mut j) == 0 {
                return Err(ParseError::new(self.src, j, "exponent digits"));
            }
            i = j;
        }
        let value: f64 = self.src[start..i]
            .parse()
            .map_err(|_| ParseError::new(self.src, start, "a valid number"))?;
        self.toks.push((Tok::Num(value), start));
        Ok(i)
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> ParseError {
        ParseError::new(self.src, self.offset(), expected)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&format!("'{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            return Ok(Expr::Neg(Arc::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let p = self.exponent()?;
            return Ok(Expr::Pow(Arc::new(base), p));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, ParseError> {
        let p = self.literal()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let q = self.exponent()?;
            return Ok(p.powf(q));
        }
        Ok(p)
    }

    fn literal(&mut self) -> Result<f64, ParseError> {
        let parens = *self.peek() == Tok::Sym('(');
        if parens {
            self.bump();
        }
        let sign = if *self.peek() == Tok::Sym('-') {
            self.bump();
            -1.0
        } else {
            1.0
        };
        let v = match self.peek() {
            Tok::Num(v) => *v,
            _ => return Err(self.err("a literal number exponent")),
        };
        self.bump();
        if parens {
            self.expect_sym(')')?;
        }
        Ok(sign * v)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::Sym('(') {
                    let func = Func::from_name(&name).ok_or_else(|| {
                        ParseError::new(self.src, at, "a known function (sin, cos, exp, log, sqrt)")
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_sym(')')?;
                    Ok(Expr::Call(func, Arc::new(arg)))
                } else if Func::from_name(&name).is_some() {
                    Err(self.err("'(' after function name"))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            _ => Err(ParseError::new(
                self.src,
                at,
                "a number, variable, function call or '('",
            )),
        }
    }
}

/// Parses an expression string.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::run(source)?;
    let mut p = Parser {
        src: source,
        toks,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err("an operator or end of input"));
    }
    Ok(e)
}

/// Named jets that an expression is evaluated against.
#[derive(Debug, Clone)]
pub struct Env {
    dim: usize,
    names: Vec<String>,
    values: Vec<Jet2>,
}

impl Env {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_context(ctx: &EvalContext) -> Self {
        Self {
            dim: ctx.dim(),
            names: ctx.names().to_vec(),
            values: ctx.seeds(),
        }
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Jet2) {
        assert_eq!(value.dim(), self.dim, "jet dimension mismatch");
        let name = name.into();
        match self.names.iter().position(|n| *n == name) {
            Some(i) => self.values[i] = value,
            None => {
                self.names.push(name);
                self.values.push(value);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, name: &str) -> Option<&Jet2> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Bin(op, ..) => op.precedence(),
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(v) if *v < 0.0 => 3,
        _ => 5,
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v < 0.0 {
        write!(f, "-{}", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &Expr, parens: bool, f: &mut fmt::Formatter<'_>| {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => fmt_num(*v, f),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(a, precedence(a) < 3, f)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                wrap(a, precedence(a) < p, f)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, precedence(b) <= p, f)
            }
            Expr::Pow(a, p) => {
                wrap(a, precedence(a) <= 4, f)?;
                if *p < 0.0 {
                    write!(f, "^(-{})", -p)
                } else {
                    write!(f, "^{p}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Arc::new(arg))
    }

    pub fn powf(self, p: f64) -> Expr {
        match self {
            _ if p == 0.0 => Expr::Num(1.0),
            _ if p == 1.0 => self,
            Expr::Num(v) => Expr::Num(v.powf(p)),
            e => Expr::Pow(Arc::new(e), p),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Variable names referenced anywhere in the tree.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates with every context variable seeded as an active jet variable.
    pub fn eval(&self, ctx: &EvalContext) -> Result<Jet2, EvalError> {
        self.eval_in(&Env::from_context(ctx))
    }

    pub fn eval_in(&self, env: &Env) -> Result<Jet2, EvalError> {
        match self {
            Expr::Num(v) => Ok(Jet2::constant(*v, env.dim)),
            Expr::Var(n) => env
                .get(n)
                .cloned()
                .ok_or_else(|| EvalError::Unbound(n.clone())),
            Expr::Neg(a) => Ok(a.eval_in(env)?.scale(-1.0)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_in(env)?, b.eval_in(env)?);
                match op {
                    BinOp::Add => a.try_add(&b),
                    BinOp::Sub => a.try_sub(&b),
                    BinOp::Mul => a.try_mul(&b),
                    BinOp::Div => a.try_div(&b),
                }
            }
            Expr::Pow(a, p) => a.eval_in(env)?.pow(*p),
            Expr::Call(func, a) => {
                let a = a.eval_in(env)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Exp => Ok(a.exp()),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                }
            }
        }
    }

    /// Plain value at a point given by name lookup.
    pub fn value_in(&self, env: &Env) -> Result<f64, EvalError> {
        self.eval_in(env).map(|j| j.value())
    }

    /// Symbolic partial derivative with respect to `var`, with constant
    /// folding of zeros and ones so repeated differentiation stays small.
    pub fn derivative(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(n) => Expr::Num(if n == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => -a.derivative(var),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => da + db,
                    BinOp::Sub => da - db,
                    BinOp::Mul => da * b.clone() + a * db,
                    BinOp::Div => {
                        if db.is_zero() {
                            da / b
                        } else {
                            (da * b.clone() - a * db) / b.powf(2.0)
                        }
                    }
                }
            }
            Expr::Pow(a, p) => {
                let da = a.derivative(var);
                Expr::Num(*p) * a.as_ref().clone().powf(p - 1.0) * da
            }
            Expr::Call(func, a) => {
                let da = a.derivative(var);
                if da.is_zero() {
                    return Expr::Num(0.0);
                }
                let a = a.as_ref().clone();
                match func {
                    Func::Sin => Expr::call(Func::Cos, a) * da,
                    Func::Cos => -(Expr::call(Func::Sin, a) * da),
                    Func::Exp => Expr::call(Func::Exp, a) * da,
                    Func::Log => da / a,
                    Func::Sqrt => da / (Expr::Num(2.0) * Expr::call(Func::Sqrt, a)),
                }
            }
        }
    }

    /// Replaces variables by expressions.
    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(n) => map(n).unwrap_or_else(|| self.clone()),
            Expr::Neg(a) => -a.substitute(map),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.substitute(map), b.substitute(map));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(a, p) => a.substitute(map).powf(*p),
            Expr::Call(f, a) => Expr::call(*f, a.substitute(map)),
        }
    }
}

impl ScalarField for Expr {
    fn eval_at(&self, ctx: &EvalContext) -> Result<Jet2, EvalError> {
        self.eval(ctx)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Num(a + b),
            (Some(0.0), _) => rhs,
            (_, Some(0.0)) => self,
            _ => Expr::Bin(BinOp::Add, Arc::new(self), Arc::new(rhs)),
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Num(a - b),
            (Some(0.0), _) => -rhs,
            (_, Some(0.0)) => self,
            _ => Expr::Bin(BinOp::Sub, Arc::new(self), Arc::new(rhs)),
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Num(a * b),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
            (Some(1.0), _) => rhs,
            (_, Some(1.0)) => self,
            _ => Expr::Bin(BinOp::Mul, Arc::new(self), Arc::new(rhs)),
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::Num(a / b),
            (Some(0.0), _) => Expr::Num(0.0),
            (_, Some(1.0)) => self,
            _ => Expr::Bin(BinOp::Div, Arc::new(self), Arc::new(rhs)),
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(a) => a.as_ref().clone(),
            e => Expr::Neg(Arc::new(e)),
        }
    }
}
