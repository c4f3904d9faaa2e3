use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BinaryOp, Expr, UnaryOp, Var};

/// Seeded generator of expression trees.
///
/// `smooth` trees are total and smooth on all of ℝⁿ (no division, log or
/// sqrt) and are used as random coefficient functions in identity checks.
/// `raw_tree` exercises the whole grammar and is meant for parser tests.
pub struct RandomExpr {
    rng: ChaCha8Rng,
    vars: Vec<Var>,
}

impl RandomExpr {
    pub fn seeded(seed: u64) -> Self {
        RandomExpr { rng: ChaCha8Rng::seed_from_u64(seed), vars: vec![Var::X(0)] }
    }

    pub fn with_vars(mut self, vars: Vec<Var>) -> Self {
        assert!(!vars.is_empty(), "need at least one variable");
        self.vars = vars;
        self
    }

    fn constant(&mut self) -> f64 {
        // two decimals keep printed trees short
        (self.rng.gen_range(-2.0..2.0_f64) * 100.0).round() / 100.0
    }

    fn leaf(&mut self) -> Expr {
        if self.rng.gen_bool(0.65) {
            let i = self.rng.gen_range(0..self.vars.len());
            Expr::Var(self.vars[i].clone())
        } else {
            Expr::num(self.constant())
        }
    }

    /// A smooth, total tree of at most `depth` levels, built with folding.
    pub fn smooth(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.25) {
            return self.leaf();
        }
        match self.rng.gen_range(0..8) {
            0 | 1 => Expr::add(self.smooth(depth - 1), self.smooth(depth - 1)),
            2 => Expr::sub(self.smooth(depth - 1), self.smooth(depth - 1)),
            3 | 4 => Expr::mul(self.smooth(depth - 1), self.smooth(depth - 1)),
            5 => Expr::sin(self.smooth(depth - 1)),
            6 => Expr::cos(self.smooth(depth - 1)),
            _ => {
                // bounded argument keeps values moderate
                let inner = Expr::sin(self.smooth(depth - 1));
                if self.rng.gen_bool(0.5) {
                    Expr::exp(inner)
                } else {
                    Expr::pow(inner, self.rng.gen_range(2..4) as f64)
                }
            }
        }
    }

    /// An unfolded tree over the full grammar.
    pub fn raw_tree(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return match self.rng.gen_range(0..3) {
                0 => Expr::Const(self.constant().abs()),
                _ => self.leaf_var(),
            };
        }
        match self.rng.gen_range(0..11) {
            0 => self.raw_binary(BinaryOp::Add, depth),
            1 => self.raw_binary(BinaryOp::Sub, depth),
            2 => self.raw_binary(BinaryOp::Mul, depth),
            3 => self.raw_binary(BinaryOp::Div, depth),
            4 => Expr::Pow(Arc::new(self.raw_tree(depth - 1)), self.rng.gen_range(0..5) as f64 * 0.5),
            5 => Expr::Unary(UnaryOp::Neg, Arc::new(self.raw_tree(depth - 1))),
            n => {
                let op = [UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp, UnaryOp::Log, UnaryOp::Sqrt][n - 6];
                Expr::Unary(op, Arc::new(self.raw_tree(depth - 1)))
            }
        }
    }

    fn leaf_var(&mut self) -> Expr {
        let i = self.rng.gen_range(0..self.vars.len());
        Expr::Var(self.vars[i].clone())
    }

    fn raw_binary(&mut self, op: BinaryOp, depth: usize) -> Expr {
        Expr::Binary(op, Arc::new(self.raw_tree(depth - 1)), Arc::new(self.raw_tree(depth - 1)))
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.gen_range(-1.0..1.0)
    }
}
