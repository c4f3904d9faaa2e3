//! Scalar expression trees over chart variables.
//!
//! Every coefficient function of the engine (connection coefficients, anchor
//! components, structure functions, Lagrangians, curves) is an [`Expr`]. Trees
//! are immutable and cheap to clone; subtrees are shared through `Arc`.
//!
//! Two construction paths exist:
//!
//! - the parser builds the tree exactly as written, so that printing and
//!   re-parsing is the identity on the tree;
//! - the smart constructors ([`Expr::add`], [`Expr::mul`], ...) apply light
//!   constant folding (`0*f -> 0`, `f+0 -> f`, constant arithmetic) and are
//!   used by differentiation and every derived construction.
//!
//! Constants stored in a tree are never negative: a negative value is held as
//! `neg(c)`. This keeps every tree printable in the grammar.

mod env;
mod parse;
mod print;
mod random;

pub use env::Env;
pub use parse::{parse, parse_with, Vocabulary};
pub use random::RandomExpr;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A chart variable. Indices are zero-based internally and printed one-based
/// (`X(0)` is `x1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
    U,
    Param(Arc<str>),
}

impl Var {
    pub fn x(i: usize) -> Self {
        Var::X(i)
    }

    pub fn y(i: usize) -> Self {
        Var::Y(i)
    }

    pub fn param(name: &str) -> Self {
        Var::Param(Arc::from(name))
    }

    /// Classifies a printed name. `x3` is a base coordinate, `y2` a fibre
    /// coordinate, `u` the curve parameter; anything else is a parameter name.
    pub fn from_name(name: &str) -> Option<Var> {
        if name == "u" {
            return Some(Var::U);
        }
        let indexed = |prefix: char| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
                return None;
            }
            rest.parse::<usize>().ok().map(|i| i - 1)
        };
        if let Some(i) = indexed('x') {
            return Some(Var::X(i));
        }
        if let Some(i) = indexed('y') {
            return Some(Var::Y(i));
        }
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        if chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
            Some(Var::Param(Arc::from(name)))
        } else {
            None
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::U => f.write_str("u"),
            Var::Param(name) => f.write_str(name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub fn function(name: &str) -> Option<UnaryOp> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    /// Power with a constant, non-negative exponent.
    Pow(Arc<Expr>, f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: non-finite value in `{0}`")]
    NonFinite(String),
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::num(v)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::Var(v)
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    /// A numeric literal; negative values become `neg(|v|)`.
    pub fn num(v: f64) -> Expr {
        if v < 0.0 {
            Expr::Unary(UnaryOp::Neg, Arc::new(Expr::Const(-v)))
        } else {
            // normalises -0.0
            Expr::Const(v + 0.0)
        }
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn x(i: usize) -> Expr {
        Expr::Var(Var::X(i))
    }

    pub fn y(i: usize) -> Expr {
        Expr::Var(Var::Y(i))
    }

    pub fn u() -> Expr {
        Expr::Var(Var::U)
    }

    /// The constant value of `self`, if it is a literal or a negated literal.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Unary(UnaryOp::Neg, inner) => match inner.as_ref() {
                Expr::Const(c) => Some(-*c),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(v)
    }

    pub fn is_structural_zero(&self) -> bool {
        self.is_const(0.0)
    }

    fn folded(v: f64) -> Option<Expr> {
        v.is_finite().then(|| Expr::num(v))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::folded(x + y).unwrap_or_else(|| Expr::raw_binary(BinaryOp::Add, a, b)),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::raw_binary(BinaryOp::Add, a, b),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::folded(x - y).unwrap_or_else(|| Expr::raw_binary(BinaryOp::Sub, a, b)),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            _ => Expr::raw_binary(BinaryOp::Sub, a, b),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::folded(x * y).unwrap_or_else(|| Expr::raw_binary(BinaryOp::Mul, a, b)),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::raw_binary(BinaryOp::Mul, a, b),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => {
                Expr::folded(x / y).unwrap_or_else(|| Expr::raw_binary(BinaryOp::Div, a, b))
            }
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::raw_binary(BinaryOp::Div, a, b),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            return Expr::num(-c);
        }
        match a {
            Expr::Unary(UnaryOp::Neg, inner) => Arc::unwrap_or_clone(inner),
            other => Expr::Unary(UnaryOp::Neg, Arc::new(other)),
        }
    }

    /// `base^p` for a constant exponent. Negative exponents are rewritten as
    /// `1/base^|p|` so that every exponent stays non-negative.
    pub fn pow(base: Expr, p: f64) -> Expr {
        if p == 0.0 {
            return Expr::one();
        }
        if p == 1.0 {
            return base;
        }
        if p < 0.0 {
            return Expr::div(Expr::one(), Expr::pow(base, -p));
        }
        if let Some(c) = base.as_const() {
            if let Some(e) = Expr::folded(c.powf(p)).filter(|_| c >= 0.0 || p.fract() == 0.0) {
                return e;
            }
        }
        Expr::Pow(Arc::new(base), p)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        if let Some(c) = a.as_const() {
            if let Ok(v) = apply_unary(op, c) {
                if let Some(e) = Expr::folded(v) {
                    return e;
                }
            }
        }
        Expr::Unary(op, Arc::new(a))
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, a)
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, a)
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, a)
    }

    pub fn log(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Log, a)
    }

    pub fn sqrt(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sqrt, a)
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
        }
    }

    /// Sum of an iterator of terms, folded.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), Expr::add)
    }

    fn raw_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    /// Rebuilds the tree bottom-up through the folding constructors.
    pub fn fold(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.fold()),
            Expr::Binary(op, a, b) => {
                let (fa, fb) = (a.fold(), b.fold());
                // x - x folds to zero when both sides are the same tree
                if *op == BinaryOp::Sub && fa == fb {
                    return Expr::zero();
                }
                Expr::binary(*op, fa, fb)
            }
            Expr::Pow(b, p) => Expr::pow(b.fold(), *p),
        }
    }

    pub fn contains(&self, var: &Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == var,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.contains(var),
            Expr::Binary(_, a, b) => a.contains(var) || b.contains(var),
        }
    }

    /// Every distinct variable occurring in the tree, sorted.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Replaces every occurrence of `var` by `with`, folding on the way up.
    pub fn substitute(&self, var: &Var, with: &Expr) -> Expr {
        if !self.contains(var) {
            return self.clone();
        }
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => {
                if v == var {
                    with.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(var, with)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(var, with), b.substitute(var, with)),
            Expr::Pow(b, p) => Expr::pow(b.substitute(var, with), *p),
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.get(v).ok_or_else(|| ExprError::Unbound(v.to_string()))?,
            Expr::Unary(op, a) => apply_unary(*op, a.eval(env)?)?,
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(ExprError::Domain(format!("division by zero in `{self}`")));
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(b, p) => {
                let x = b.eval(env)?;
                if x < 0.0 && p.fract() != 0.0 {
                    return Err(ExprError::Domain(format!("negative base {x} to fractional power {p}")));
                }
                if x == 0.0 && *p < 0.0 {
                    return Err(ExprError::Domain("zero to a negative power".into()));
                }
                x.powf(*p)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite(self.to_string()))
        }
    }

    /// Exact symbolic derivative with respect to `var`.
    pub fn diff(&self, var: &Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(v) => {
                if v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(op, a) => {
                let da = a.diff(var);
                if da.is_structural_zero() {
                    return Expr::zero();
                }
                let a = a.as_ref().clone();
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Sin => Expr::mul(Expr::cos(a), da),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::sin(a), da)),
                    UnaryOp::Exp => Expr::mul(self.clone(), da),
                    UnaryOp::Log => Expr::div(da, a),
                    UnaryOp::Sqrt => Expr::div(da, Expr::mul(Expr::num(2.0), self.clone())),
                }
            }
            Expr::Binary(op, a, b) => {
                let (da, db) = (a.diff(var), b.diff(var));
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                    BinaryOp::Div => {
                        if db.is_structural_zero() {
                            Expr::div(da, b)
                        } else {
                            Expr::div(
                                Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                                Expr::pow(b, 2.0),
                            )
                        }
                    }
                }
            }
            Expr::Pow(b, p) => {
                let db = b.diff(var);
                if db.is_structural_zero() {
                    return Expr::zero();
                }
                let b = b.as_ref().clone();
                Expr::mul(Expr::mul(Expr::num(*p), Expr::pow(b, p - 1.0)), db)
            }
        }
    }

    /// Shorthand for `diff(&Var::Y(i))`.
    pub fn dy(&self, i: usize) -> Expr {
        self.diff(&Var::Y(i))
    }

    /// Shorthand for `diff(&Var::X(i))`.
    pub fn dx(&self, i: usize) -> Expr {
        self.diff(&Var::X(i))
    }
}

fn apply_unary(op: UnaryOp, x: f64) -> Result<f64, ExprError> {
    Ok(match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => {
            if x <= 0.0 {
                return Err(ExprError::Domain(format!("log of non-positive value {x}")));
            }
            x.ln()
        }
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
    })
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}
