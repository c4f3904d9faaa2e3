//! Coordinate-level engine for generalised ρ-connections on affine bundles.
//!
//! Every geometric object is held in one chart as arrays of [`expr::Expr`]
//! coefficient functions. Derivatives are exact (symbolic); identities are
//! checked by sampling at low-discrepancy points; transport problems are
//! integrated with fixed-step RK4.

pub mod algebroid;
pub mod berwald;
pub mod bundle;
pub mod connection;
pub mod expr;
pub mod sample;
pub mod transport;
pub mod verify;

use sample::SampleError;
use verify::Point;

pub use bundle::{AdmissibleCurve, AnchorSpec, ChartSpec, EPoint, ProlongedSection, TildeSection, TildeVector};
pub use connection::{AffineSplit, Connection};
pub use expr::{parse, Env, Expr, ExprError, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("connection is not affine: Γ^{alpha}_{a} has a non-zero second fibre derivative at {}", sample::format_point(witness))]
    NotAffine { alpha: usize, a: usize, witness: Point },
    #[error("not in prolongation: base part differs from ρ(v) by {residual:e}")]
    NotInProlongation { residual: f64 },
    #[error("curve is not admissible: residual {residual:e} at u = {u}")]
    NotAdmissible { residual: f64, u: f64 },
    #[error("initial point is off the curve: |π(e) − c_M(a)| = {residual:e}")]
    InitialPointMismatch { residual: f64 },
    #[error("integration produced a non-finite state at u = {u}")]
    NonFinite { u: f64 },
    #[error("Lagrangian is not regular: Hessian condition number {condition:e} at {}", sample::format_point(witness))]
    Regularity { condition: f64, witness: Point },
}
