//! A small expression language for the nonlinearities `f(t, u)`, drifts `g(t)`
//! and impulse functions `I(u)` that appear in problem configs.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | 't' | 'u' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | abs | sqrt
//! ```
//!
//! `-u^2` parses as `-(u^2)` and `2^-1` as `2^(-1)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} called outside its domain (argument {arg})")]
    DomainViolation { func: &'static str, arg: f64 },
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot differentiate `{0}` with respect to u")]
    NotDifferentiable(String),
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only when followed by digits
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
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: i,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((i, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "u" => Ok(Expr::Var(Var::U)),
                    _ => {
                        let Some(func) = Func::from_name(&name) else {
                            return Err(ExprError::UnknownIdentifier(name));
                        };
                        if self.peek() != Some(&Tok::LParen) {
                            return self.err(format!("expected `(` after `{name}`"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(&Tok::RParen) {
                            return self.err("expected `)`");
                        }
                        self.pos += 1;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            Tok::Op(c) => self.err(format!("unexpected operator `{c}`")),
            Tok::RParen => self.err("unexpected `)`"),
        }
    }
}

/// Parses an expression in `t` and `u`.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Fully parenthesized output; `parse(e.to_string())` rebuilds the same tree
/// for every tree with non-negative finite literals.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::U) => f.write_str("u"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({a} {c} {b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

fn pow(base: f64, exp: f64) -> Result<f64, EvalError> {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exp as i32));
    }
    if base < 0.0 {
        return Err(EvalError::DomainViolation {
            func: "^",
            arg: base,
        });
    }
    Ok(base.powf(exp))
}

impl Expr {
    /// Evaluates at `(t, u)`. Any non-finite intermediate is reported as an error.
    pub fn eval(&self, t: f64, u: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::U) => u,
            Expr::Neg(e) => -e.eval(t, u)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(t, u)?;
                let y = b.eval(t, u)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => pow(x, y)?,
                }
            }
            Expr::Call(func, e) => {
                let x = e.eval(t, u)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::DomainViolation {
                                func: "log",
                                arg: x,
                            });
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::DomainViolation {
                                func: "sqrt",
                                arg: x,
                            });
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// True when the tree mentions `u` anywhere.
    pub fn depends_on_u(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(Var::T) => false,
            Expr::Var(Var::U) => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on_u(),
            Expr::Bin(_, a, b) => a.depends_on_u() || b.depends_on_u(),
        }
    }

    /// Symbolic derivative with respect to `u`, with constant folding.
    pub fn diff_u(&self) -> Result<Expr, ExprError> {
        diff(self).map(|e| simplify(&e))
    }
}

// ---------------------------------------------------------------------------
// Differentiation

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn diff(e: &Expr) -> Result<Expr, ExprError> {
    if !e.depends_on_u() {
        return Ok(num(0.0));
    }
    Ok(match e {
        Expr::Num(_) | Expr::Var(Var::T) => num(0.0),
        Expr::Var(Var::U) => num(1.0),
        Expr::Neg(a) => Expr::Neg(Box::new(diff(a)?)),
        Expr::Bin(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                BinOp::Add => bin(BinOp::Add, diff(a)?, diff(b)?),
                BinOp::Sub => bin(BinOp::Sub, diff(a)?, diff(b)?),
                BinOp::Mul => bin(
                    BinOp::Add,
                    bin(BinOp::Mul, diff(a)?, b.clone()),
                    bin(BinOp::Mul, a.clone(), diff(b)?),
                ),
                BinOp::Div => bin(
                    BinOp::Div,
                    bin(
                        BinOp::Sub,
                        bin(BinOp::Mul, diff(a)?, b.clone()),
                        bin(BinOp::Mul, a.clone(), diff(b)?),
                    ),
                    bin(BinOp::Pow, b.clone(), num(2.0)),
                ),
                BinOp::Pow => {
                    if b.depends_on_u() {
                        if a.depends_on_u() {
                            return Err(ExprError::NotDifferentiable(
                                "^ with u-dependent base and exponent".into(),
                            ));
                        }
                        // a^b with constant base: a^b * log(a) * b'
                        bin(
                            BinOp::Mul,
                            bin(BinOp::Mul, e.clone(), call(Func::Log, a.clone())),
                            diff(b)?,
                        )
                    } else {
                        // b * a^(b - 1) * a'
                        let lowered = match b {
                            Expr::Num(c) => num(c - 1.0),
                            _ => bin(BinOp::Sub, b.clone(), num(1.0)),
                        };
                        bin(
                            BinOp::Mul,
                            bin(BinOp::Mul, b.clone(), bin(BinOp::Pow, a.clone(), lowered)),
                            diff(a)?,
                        )
                    }
                }
            }
        }
        Expr::Call(func, a) => {
            let inner = a.as_ref().clone();
            let outer = match func {
                Func::Sin => call(Func::Cos, inner),
                Func::Cos => Expr::Neg(Box::new(call(Func::Sin, inner))),
                Func::Exp => call(Func::Exp, inner),
                Func::Log => bin(BinOp::Div, num(1.0), inner),
                Func::Sqrt => bin(BinOp::Div, num(0.5), call(Func::Sqrt, inner)),
                Func::Abs => return Err(ExprError::NotDifferentiable("abs".into())),
            };
            bin(BinOp::Mul, outer, diff(a)?)
        }
    })
}

fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => match simplify(a) {
            Expr::Num(v) => num(-v),
            Expr::Neg(inner) => *inner,
            s => Expr::Neg(Box::new(s)),
        },
        Expr::Call(f, a) => {
            let s = simplify(a);
            let folded = call(*f, s);
            if let Expr::Call(_, ref inner) = folded {
                if let Expr::Num(_) = inner.as_ref() {
                    if let Ok(v) = folded.eval(0.0, 0.0) {
                        return num(v);
                    }
                }
            }
            folded
        }
        Expr::Bin(op, a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
                let folded = bin(*op, num(*x), num(*y));
                if let Ok(v) = folded.eval(0.0, 0.0) {
                    return num(v);
                }
                return folded;
            }
            let is = |e: &Expr, v: f64| matches!(e, Expr::Num(x) if *x == v);
            match op {
                BinOp::Add if is(&a, 0.0) => b,
                BinOp::Add | BinOp::Sub if is(&b, 0.0) => a,
                BinOp::Sub if is(&a, 0.0) => Expr::Neg(Box::new(b)),
                BinOp::Mul if is(&a, 0.0) || is(&b, 0.0) => num(0.0),
                BinOp::Mul if is(&a, 1.0) => b,
                BinOp::Mul if is(&b, 1.0) => a,
                BinOp::Div if is(&a, 0.0) => num(0.0),
                BinOp::Div if is(&b, 1.0) => a,
                BinOp::Pow if is(&b, 1.0) => a,
                BinOp::Pow if is(&b, 0.0) => num(1.0),
                _ => bin(*op, a, b),
            }
        }
    }
}
