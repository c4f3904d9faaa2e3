use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

// Binding levels. A child printed in a slot demanding `level` is wrapped in
// parentheses when its own level is lower.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const RIGHT_OF_PRODUCT: u8 = 3;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PRODUCT,
        // a leading minus is only safe where a whole term may start
        Expr::Unary(UnaryOp::Neg, _) => SUM,
        Expr::Pow(..) => 4,
        Expr::Const(_) | Expr::Var(_) | Expr::Unary(..) => ATOM,
    }
}

fn write_at(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if level(e) < min {
        f.write_str("(")?;
        write_expr(e, f)?;
        f.write_str(")")
    } else {
        write_expr(e, f)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(v) => write!(f, "{v}"),
        Expr::Unary(UnaryOp::Neg, a) => {
            f.write_str("-")?;
            write_at(a, PRODUCT, f)
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_expr(a, f)?;
            f.write_str(")")
        }
        Expr::Binary(op, a, b) => {
            let (sym, lhs, rhs) = match op {
                BinaryOp::Add => (" + ", SUM, PRODUCT),
                BinaryOp::Sub => (" - ", SUM, PRODUCT),
                BinaryOp::Mul => ("*", PRODUCT, RIGHT_OF_PRODUCT),
                BinaryOp::Div => ("/", PRODUCT, RIGHT_OF_PRODUCT),
            };
            write_at(a, lhs, f)?;
            f.write_str(sym)?;
            write_at(b, rhs, f)
        }
        Expr::Pow(b, p) => {
            write_at(b, ATOM, f)?;
            write!(f, "^{p}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}
