//! Recursive-descent parser for the coefficient grammar.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := '-' term | factor (('*'|'/') factor)*
//! factor := base ('^' number)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
//! ```
//!
//! A leading minus on a term binds looser than `*` and `/`, so `-x1*y1` is
//! `neg(x1*y1)`. The tree is built exactly as written, without folding.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{BinaryOp, Expr, ExprError, UnaryOp, Var};

/// Which variable names the parser accepts.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    /// Number of base coordinates; `None` accepts any `x<i>`.
    pub n: Option<usize>,
    /// Number of fibre coordinates; `None` accepts any `y<i>`.
    pub k: Option<usize>,
    pub allow_u: bool,
    pub params: BTreeSet<String>,
}

impl Vocabulary {
    /// Accepts every `x<i>`, `y<i>` and `u`, no parameters.
    pub fn permissive() -> Self {
        Vocabulary { n: None, k: None, allow_u: true, params: BTreeSet::new() }
    }

    pub fn chart(n: usize, k: usize) -> Self {
        Vocabulary { n: Some(n), k: Some(k), allow_u: true, params: BTreeSet::new() }
    }

    pub fn with_params<I: IntoIterator<Item = String>>(mut self, params: I) -> Self {
        self.params.extend(params);
        self
    }

    fn admits(&self, var: &Var) -> bool {
        match var {
            Var::X(i) => self.n.map_or(true, |n| *i < n),
            Var::Y(i) => self.k.map_or(true, |k| *i < k),
            Var::U => self.allow_u,
            Var::Param(name) => self.params.contains(name.as_ref()),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    parse_with(text, &Vocabulary::permissive())
}

pub fn parse_with(text: &str, vocab: &Vocabulary) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, vocab };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vocab: &'a Vocabulary,
}

impl Parser<'_> {
    fn syntax(&self, message: String) -> ExprError {
        ExprError::Syntax { offset: self.pos, message }
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

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Arc::new(lhs), Arc::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            let inner = self.term()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Arc::new(inner)));
        }
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Arc::new(lhs), Arc::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.eat(b'^') {
            self.skip_ws();
            let p = self.number()?;
            return Ok(Expr::Pow(Arc::new(base), p));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`".into()));
                }
                Ok(e)
            }
            Some(b'-') => {
                self.pos += 1;
                let inner = self.base()?;
                Ok(Expr::Unary(UnaryOp::Neg, Arc::new(inner)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident_or_call(),
            Some(c) => Err(self.syntax(format!("unexpected `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.syntax("expected a number".into()));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| ExprError::Syntax { offset: start, message: format!("bad number `{text}`") })
    }

    fn ident_or_call(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
        if self.peek() == Some(b'(') {
            let op = UnaryOp::function(&name).ok_or(ExprError::UnknownFunction { name, offset: start })?;
            self.pos += 1;
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.syntax("expected `)`".into()));
            }
            return Ok(Expr::Unary(op, Arc::new(arg)));
        }
        match Var::from_name(&name) {
            Some(var) if self.vocab.admits(&var) => Ok(Expr::Var(var)),
            _ => Err(ExprError::UnknownVariable { name, offset: start }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    #[test]
    fn grammar_examples() {
        let e = parse("y1^2 + 3*x1").unwrap();
        let expected = node(
            BinaryOp::Add,
            Expr::Pow(Arc::new(Expr::y(0)), 2.0),
            node(BinaryOp::Mul, Expr::Const(3.0), Expr::x(0)),
        );
        assert_eq!(e, expected);

        let e = parse("exp(-x1*y1)").unwrap();
        let expected = Expr::Unary(
            UnaryOp::Exp,
            Arc::new(Expr::Unary(UnaryOp::Neg, Arc::new(node(BinaryOp::Mul, Expr::x(0), Expr::y(0))))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn syntax_error_offsets() {
        assert_eq!(parse("sin(").unwrap_err(), ExprError::Syntax { offset: 4, message: "unexpected end of input".into() });
        assert!(matches!(parse("1 + * 2"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("(x1"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse("x1 x2"), Err(ExprError::Syntax { offset: 3, .. })));
    }

    #[test]
    fn unknown_names() {
        assert_eq!(parse("tan(x1)").unwrap_err(), ExprError::UnknownFunction { name: "tan".into(), offset: 0 });
        assert_eq!(parse("2*z").unwrap_err(), ExprError::UnknownVariable { name: "z".into(), offset: 2 });
        let vocab = Vocabulary::chart(1, 1).with_params(["gamma".to_string()]);
        assert!(parse_with("gamma*y1 + x1", &vocab).is_ok());
        assert!(matches!(parse_with("x2", &vocab), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(parse_with("y2", &vocab), Err(ExprError::UnknownVariable { .. })));
    }

    #[test]
    fn precedence() {
        assert_eq!(parse("-x1^2").unwrap().to_string(), "-x1^2");
        let e = parse("2*-x1").unwrap();
        assert_eq!(e, node(BinaryOp::Mul, Expr::Const(2.0), Expr::Unary(UnaryOp::Neg, Arc::new(Expr::x(0)))));
        let e = parse("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&super::super::Env::new()).unwrap(), -4.0);
        let e = parse("8/4/2").unwrap();
        assert_eq!(e.eval(&super::super::Env::new()).unwrap(), 1.0);
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse(".5").unwrap(), Expr::Const(0.5));
    }
}
