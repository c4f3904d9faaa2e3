//! Parallel transport, linear parallel transport and Lie transport by
//! fixed-step classical RK4.

use std::fmt::Write as _;

use crate::bundle::{check_admissible, AdmissibleCurve, EPoint, DEFAULT_ADMISSIBLE_NODES};
use crate::connection::{AffineSplit, Connection};
use crate::expr::{Env, Expr, ExprError};
use crate::sample::SampleBox;
use crate::verify::{Residual, Verification};
use crate::Error;

/// Tolerance for `π(e) = c_M(a)`.
pub const INITIAL_POINT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportConfig {
    pub h_step: f64,
    pub tol_report: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { h_step: 1e-3, tol_report: 1e-8 }
    }
}

impl TransportConfig {
    pub fn with_step(mut self, h_step: f64) -> Self {
        self.h_step = h_step;
        self
    }

    /// Number of steps and the actual step on `[a, b]`: the requested step
    /// is shrunk so that a whole number of steps covers the span exactly.
    pub fn grid(&self, a: f64, b: f64) -> Result<(usize, f64), Error> {
        if !(self.h_step > 0.0) || !self.h_step.is_finite() {
            return Err(Error::Config(format!("step must be positive, got {}", self.h_step)));
        }
        let span = b - a;
        if !(span >= 0.0) {
            return Err(Error::Config(format!("integration span [{a}, {b}] is reversed")));
        }
        if span == 0.0 {
            return Ok((0, 0.0));
        }
        let steps = (span / self.h_step - 1e-9).ceil().max(1.0) as usize;
        Ok((steps, span / steps as f64))
    }
}

/// Nodes `u_0..u_N` with a point of the base and a fibre vector at each.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCurve {
    pub u: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl DiscreteCurve {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn last(&self) -> EPoint {
        EPoint::new(self.x.last().cloned().unwrap_or_default(), self.y.last().cloned().unwrap_or_default())
    }

    /// Columns `u, x1..xn, y1..yk`.
    pub fn to_csv(&self) -> String {
        let n = self.x.first().map_or(0, Vec::len);
        let k = self.y.first().map_or(0, Vec::len);
        let mut out = String::from("u");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        for a in 1..=k {
            write!(out, ",y{a}").unwrap();
        }
        out.push('\n');
        for ((u, x), y) in self.u.iter().zip(&self.x).zip(&self.y) {
            write!(out, "{u}").unwrap();
            for v in x.iter().chain(y) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// One classical RK4 step of `y' = f(u, y)`.
pub fn rk4_step<F>(f: &mut F, u: f64, y: &[f64], h: f64) -> Result<Vec<f64>, Error>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, Error>,
{
    let shifted = |k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(yi, ki)| yi + c * ki).collect() };
    let k1 = f(u, y)?;
    let k2 = f(u + 0.5 * h, &shifted(&k1, 0.5 * h))?;
    let k3 = f(u + 0.5 * h, &shifted(&k2, 0.5 * h))?;
    let k4 = f(u + h, &shifted(&k3, h))?;
    Ok((0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrates `y' = f(u, y)` from `a` with `steps` steps of size `h`,
/// returning the state at every node. Non-finite states are errors.
pub fn rk4<F>(mut f: F, a: f64, y0: Vec<f64>, h: f64, steps: usize) -> Result<Vec<Vec<f64>>, Error>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, Error>,
{
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0);
    for j in 0..steps {
        let u = a + j as f64 * h;
        let next = rk4_step(&mut f, u, &out[j], h).map_err(|e| match e {
            Error::Expr(ExprError::NonFinite(_)) => Error::NonFinite { u },
            other => other,
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { u: u + h });
        }
        out.push(next);
    }
    Ok(out)
}

fn nodes(a: f64, h: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|j| a + j as f64 * h).collect()
}

fn require_admissible(conn: &Connection, c: &AdmissibleCurve) -> Result<(), Error> {
    let report = check_admissible(c, &conn.anchor, DEFAULT_ADMISSIBLE_NODES)?;
    if !report.passed {
        return Err(Error::NotAdmissible { residual: report.max_residual, u: report.worst_u });
    }
    Ok(())
}

/// The horizontal lift `c^h_e` of `c` through `e`, sampled on `[a, to_u]`.
///
/// The base part is pinned to `c_M(u)`; only the fibre equation
/// `ẏ^α = −Γ^α_a(c_M(u), y) c^a(u)` is integrated.
pub fn horizontal_lift_curve(
    conn: &Connection,
    c: &AdmissibleCurve,
    e: &EPoint,
    to_u: f64,
    cfg: &TransportConfig,
) -> Result<DiscreteCurve, Error> {
    require_admissible(conn, c)?;
    let start = c.base_at(c.domain.0)?;
    let residual = start.iter().zip(&e.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !(residual <= INITIAL_POINT_TOL) {
        return Err(Error::InitialPointMismatch { residual });
    }
    let (steps, h) = cfg.grid(c.domain.0, to_u)?;
    let ys = rk4(
        |u, y| {
            let env = Env::at(&c.base_at(u)?, y);
            conn.fibre_velocity(&env, &c.components_at(u)?)
        },
        c.domain.0,
        e.y.clone(),
        h,
        steps,
    )?;
    let u = nodes(c.domain.0, h, steps);
    let x = u.iter().map(|&t| c.base_at(t)).collect::<Result<_, _>>()?;
    Ok(DiscreteCurve { u, x, y: ys })
}

/// Endpoint of the horizontal lift: the parallel translate of `e` along `c`.
pub fn parallel_translate(
    conn: &Connection,
    c: &AdmissibleCurve,
    e: &EPoint,
    to_u: f64,
    cfg: &TransportConfig,
) -> Result<EPoint, Error> {
    Ok(horizontal_lift_curve(conn, c, e, to_u, cfg)?.last())
}

/// `η̇^α = −Γ^α_{aβ}(x(u)) η^β c^a(u)` along a curve given pointwise.
fn linear_transport_with<C>(
    split: &AffineSplit,
    mut curve: C,
    a: f64,
    eta: &[f64],
    to_u: f64,
    cfg: &TransportConfig,
) -> Result<Vec<Vec<f64>>, Error>
where
    C: FnMut(f64) -> Result<(Vec<f64>, Vec<f64>), Error>,
{
    let (steps, h) = cfg.grid(a, to_u)?;
    rk4(
        |u, eta| {
            let (x, ca) = curve(u)?;
            let env = Env::new().with_x(x);
            let mut out = vec![0.0; eta.len()];
            for (alpha, row) in split.gamma1.iter().enumerate() {
                for (g1, cv) in row.iter().zip(&ca) {
                    for (g, e) in g1.iter().zip(eta) {
                        out[alpha] -= g.eval(&env)? * e * cv;
                    }
                }
            }
            Ok(out)
        },
        a,
        eta.to_vec(),
        h,
        steps,
    )
}

/// Parallel transport of `ē` in `Ē` for the linear part of an affine split.
pub fn linear_parallel_translate(
    split: &AffineSplit,
    c: &AdmissibleCurve,
    ebar: &[f64],
    to_u: f64,
    cfg: &TransportConfig,
) -> Result<Vec<f64>, Error> {
    let path = linear_transport_with(split, |u| Ok((c.base_at(u)?, c.components_at(u)?)), c.domain.0, ebar, to_u, cfg)?;
    Ok(path.last().cloned().unwrap_or_default())
}

/// The flow of `h(s)` from `e` together with the transported vertical vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LieTransport {
    pub curve: DiscreteCurve,
    pub eta: Vec<Vec<f64>>,
}

impl LieTransport {
    pub fn end(&self) -> Vec<f64> {
        self.eta.last().cloned().unwrap_or_default()
    }
}

/// `J^α_β = s^a ∂Γ^α_a/∂y^β`, the fibre Jacobian of `Γ s`.
fn fibre_jacobian(conn: &Connection, s: &[Expr]) -> Vec<Vec<Expr>> {
    let gs = conn.gamma_contract(s);
    gs.iter().map(|g| (0..conn.k()).map(|b| g.dy(b)).collect()).collect()
}

fn eval_all(exprs: &[Expr], env: &Env) -> Result<Vec<f64>, Error> {
    Ok(exprs.iter().map(|e| e.eval(env)).collect::<Result<_, _>>()?)
}

/// Lie transport of the vertical vector `v(e, ē)` along the flow of `h(s)`
/// over `[0, span]`.
///
/// Integrates the base flow `ẋ = ρ(x)s(x)`, the fibre flow
/// `ẏ = −Γ(x, y)s(x)` and the variational equation `η̇ = −J(x, y) η`.
/// Since the initial variation has no base part, neither does the
/// transported one, so only the fibre block of the variational system is
/// carried.
pub fn lie_transport_curve(
    conn: &Connection,
    s: &[Expr],
    e: &EPoint,
    ebar: &[f64],
    span: f64,
    cfg: &TransportConfig,
) -> Result<LieTransport, Error> {
    let (n, k) = (conn.n(), conn.k());
    let field = conn.horizontal_field(s);
    let jac = fibre_jacobian(conn, s);
    let (steps, h) = cfg.grid(0.0, span)?;
    let state0: Vec<f64> = e.x.iter().chain(&e.y).chain(ebar).copied().collect();
    let states = rk4(
        |_, z| {
            let env = Env::at(&z[..n], &z[n..n + k]);
            let mut out = eval_all(&field.x, &env)?;
            out.extend(eval_all(&field.y, &env)?);
            let eta = &z[n + k..];
            for row in &jac {
                let mut d = 0.0;
                for (j, e) in row.iter().zip(eta) {
                    d -= j.eval(&env)? * e;
                }
                out.push(d);
            }
            Ok(out)
        },
        0.0,
        state0,
        h,
        steps,
    )?;
    let curve = DiscreteCurve {
        u: nodes(0.0, h, steps),
        x: states.iter().map(|z| z[..n].to_vec()).collect(),
        y: states.iter().map(|z| z[n..n + k].to_vec()).collect(),
    };
    let eta = states.iter().map(|z| z[n + k..].to_vec()).collect();
    Ok(LieTransport { curve, eta })
}

pub fn lie_transport(
    conn: &Connection,
    s: &[Expr],
    e: &EPoint,
    ebar: &[f64],
    span: f64,
    cfg: &TransportConfig,
) -> Result<Vec<f64>, Error> {
    Ok(lie_transport_curve(conn, s, e, ebar, span, cfg)?.end())
}

/// The base integral curve of `ρ(s)` from `x0`, tabulated at half steps so
/// that every RK4 stage time of a step-`h` integration is a table node.
struct HalfStepBase {
    x: Vec<Vec<f64>>,
    half: f64,
}

impl HalfStepBase {
    fn new(conn: &Connection, s: &[Expr], x0: &[f64], h: f64, steps: usize) -> Result<Self, Error> {
        let rho_s = conn.anchor.image(s);
        let half = 0.5 * h;
        let x = rk4(|_, x| eval_all(&rho_s, &Env::new().with_x(x.to_vec())), 0.0, x0.to_vec(), half, 2 * steps)?;
        Ok(HalfStepBase { x, half })
    }

    fn at(&self, u: f64) -> &[f64] {
        let j = (u / self.half).round() as usize;
        &self.x[j.min(self.x.len() - 1)]
    }
}

/// Lie transport computed on the pulled-back bundle `c_M*E`.
///
/// The base curve `c_M` (the integral curve of `ρ(s)`) is tabulated first;
/// then the autonomous field `Λ_c = ∂_u − c^a(u) Γ^α_a(c_M(u), y) ∂_{y^α}` on
/// `(u, y)` is integrated together with its fibre variational equation.
pub fn lie_transport_suspended(
    conn: &Connection,
    s: &[Expr],
    e: &EPoint,
    ebar: &[f64],
    span: f64,
    cfg: &TransportConfig,
) -> Result<Vec<f64>, Error> {
    let k = conn.k();
    let (steps, h) = cfg.grid(0.0, span)?;
    let base = HalfStepBase::new(conn, s, &e.x, h, steps)?;
    let jac = fibre_jacobian(conn, s);
    let gs = conn.gamma_contract(s);
    // state (u, y, η); the suspension makes the system autonomous
    let state0: Vec<f64> = std::iter::once(0.0).chain(e.y.iter().copied()).chain(ebar.iter().copied()).collect();
    let states = rk4(
        |_, z| {
            let env = Env::at(base.at(z[0]), &z[1..=k]);
            let mut out = vec![1.0];
            for g in &gs {
                out.push(-g.eval(&env)?);
            }
            let eta = &z[1 + k..];
            for row in &jac {
                let mut d = 0.0;
                for (j, e) in row.iter().zip(eta) {
                    d -= j.eval(&env)? * e;
                }
                out.push(d);
            }
            Ok(out)
        },
        0.0,
        state0,
        h,
        steps,
    )?;
    Ok(states.last().map(|z| z[1 + k..].to_vec()).unwrap_or_default())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) })
}

fn witness_at(u: f64) -> crate::verify::Point {
    [("u".to_string(), u)].into_iter().collect()
}

/// Compares `c^h_{e1} − c^h_{e2}` with the linear transport of `e1 − e2`.
///
/// For a non-affine connection the comparison uses the linearisation of `Γ`
/// at the fibre origin and is expected to fail; the report then carries the
/// note `not affine`.
pub fn verify_prop1(
    conn: &Connection,
    c: &AdmissibleCurve,
    e1: &EPoint,
    e2: &EPoint,
    cfg: &TransportConfig,
    sampler: &SampleBox,
) -> Result<Verification, Error> {
    if max_abs_diff(&e1.x, &e2.x) > INITIAL_POINT_TOL {
        return Err(Error::Config("prop1 needs two points in the same fibre".into()));
    }
    let mut out = Verification::new();
    let split = if conn.is_affine(sampler)? {
        conn.affine_split(sampler)?
    } else {
        out.note("not affine");
        conn.candidate_split()
    };
    let b = c.domain.1;
    let lift1 = horizontal_lift_curve(conn, c, e1, b, cfg)?;
    let lift2 = horizontal_lift_curve(conn, c, e2, b, cfg)?;
    let ebar: Vec<f64> = e1.y.iter().zip(&e2.y).map(|(p, q)| p - q).collect();
    let eta = linear_transport_with(&split, |u| Ok((c.base_at(u)?, c.components_at(u)?)), c.domain.0, &ebar, b, cfg)?;
    let mut worst = (0.0, c.domain.0);
    for (j, u) in lift1.u.iter().enumerate() {
        let d: Vec<f64> = lift1.y[j].iter().zip(&lift2.y[j]).map(|(p, q)| p - q).collect();
        let r = max_abs_diff(&d, &eta[j]);
        if r > worst.0 || r.is_nan() {
            worst = (r, *u);
        }
    }
    out.push(Residual::at_most("transport_residual", worst.0, cfg.tol_report, Some(witness_at(worst.1))));
    Ok(out)
}

/// Compares Lie transport computed directly on `E` with the suspended
/// computation on `c_M*E`; for affine connections both are also compared
/// with linear parallel transport along the base flow.
pub fn verify_prop4(
    conn: &Connection,
    s: &[Expr],
    e: &EPoint,
    ebar: &[f64],
    span: f64,
    cfg: &TransportConfig,
    sampler: &SampleBox,
) -> Result<Verification, Error> {
    let direct = lie_transport_curve(conn, s, e, ebar, span, cfg)?;
    let suspended = lie_transport_suspended(conn, s, e, ebar, span, cfg)?;
    let mut out = Verification::new();
    let at_end = Some(witness_at(span));
    out.push(Residual::at_most("direct_vs_suspended", max_abs_diff(&direct.end(), &suspended), cfg.tol_report, at_end.clone()));
    if conn.is_affine(sampler)? {
        let split = conn.affine_split(sampler)?;
        let (steps, h) = cfg.grid(0.0, span)?;
        let base = HalfStepBase::new(conn, s, &e.x, h, steps)?;
        let curve = |u: f64| {
            let x = base.at(u).to_vec();
            let ca = eval_all(s, &Env::new().with_x(x.clone()))?;
            Ok((x, ca))
        };
        let linear = linear_transport_with(&split, curve, 0.0, ebar, span, cfg)?;
        let linear = linear.last().cloned().unwrap_or_default();
        out.push(Residual::at_most("direct_vs_linear", max_abs_diff(&direct.end(), &linear), cfg.tol_report, at_end));
    } else {
        out.note("not affine");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{AnchorSpec, ChartSpec};
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn one_dim(gamma: &str) -> Connection {
        Connection::new(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1), vec![vec![p(gamma)]]).unwrap()
    }

    fn unit_curve() -> AdmissibleCurve {
        AdmissibleCurve::new(vec![p("u")], vec![p("1")], (0.0, 1.0))
    }

    fn origin(y: f64) -> EPoint {
        EPoint::new(vec![0.0], vec![y])
    }

    #[test]
    fn grid_covers_span() {
        let cfg = TransportConfig::default();
        assert_eq!(cfg.grid(0.0, 1.0).unwrap().0, 1000);
        let (n, h) = cfg.with_step(0.3).grid(0.0, 1.0).unwrap();
        assert_eq!(n, 4);
        assert_eq!(h, 0.25);
        assert!(cfg.with_step(0.0).grid(0.0, 1.0).is_err());
    }

    #[test]
    fn flat_lift_is_constant() {
        let conn = Connection::flat(ChartSpec::new(1, 2, 1), AnchorSpec::identity(1));
        let e = EPoint::new(vec![0.0], vec![0.4, -1.5]);
        let out = parallel_translate(&conn, &unit_curve(), &e, 1.0, &TransportConfig::default()).unwrap();
        assert_eq!(out, EPoint::new(vec![1.0], vec![0.4, -1.5]));
    }

    #[test]
    fn lift_errors() {
        let conn = one_dim("y1");
        let cfg = TransportConfig::default();
        let bad = AdmissibleCurve::new(vec![p("u")], vec![p("2")], (0.0, 1.0));
        assert!(matches!(parallel_translate(&conn, &bad, &origin(1.0), 1.0, &cfg), Err(Error::NotAdmissible { .. })));
        let off = EPoint::new(vec![0.5], vec![1.0]);
        assert!(matches!(
            parallel_translate(&conn, &unit_curve(), &off, 1.0, &cfg),
            Err(Error::InitialPointMismatch { .. })
        ));
        // y' = y^3 blows up at u = 1/2
        let conn = one_dim("-y1^3");
        let long = AdmissibleCurve::new(vec![p("u")], vec![p("1")], (0.0, 2.0));
        assert!(matches!(parallel_translate(&conn, &long, &origin(1.0), 2.0, &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn csv_columns() {
        let conn = one_dim("y1");
        let curve = horizontal_lift_curve(&conn, &unit_curve(), &origin(1.0), 1.0, &TransportConfig::default().with_step(0.5))
            .unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("u,x1,y1"));
        assert_eq!(lines.next(), Some("0,0,1"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn linear_transport_examples() {
        let zero = AffineSplit { gamma0: vec![vec![Expr::zero()]], gamma1: vec![vec![vec![Expr::zero()]]] };
        let cfg = TransportConfig::default();
        assert_eq!(linear_parallel_translate(&zero, &unit_curve(), &[0.3], 1.0, &cfg).unwrap(), vec![0.3]);
        let split = one_dim("2*y1").affine_split(&SampleBox::chart(1, 1, -1.0, 1.0, 8, 0)).unwrap();
        assert_eq!(linear_parallel_translate(&split, &unit_curve(), &[0.0], 1.0, &cfg).unwrap(), vec![0.0]);
        // ∫c¹ over [0, 1] with c¹ = 2u is 1
        let c = AdmissibleCurve::new(vec![p("u^2")], vec![p("2*u")], (0.0, 1.0));
        let eta = linear_parallel_translate(&split, &c, &[1.5], 1.0, &cfg).unwrap();
        assert!((eta[0] - 1.5 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn lie_transport_flat_and_linear() {
        let flat = Connection::flat(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1));
        let cfg = TransportConfig::default();
        assert_eq!(lie_transport(&flat, &[Expr::one()], &origin(0.3), &[0.7], 1.0, &cfg).unwrap(), vec![0.7]);
        let a = lie_transport(&one_dim("y1^2"), &[Expr::one()], &origin(1.0), &[0.3], 1.0, &cfg).unwrap()[0];
        let b = lie_transport(&one_dim("y1^2"), &[Expr::one()], &origin(1.0), &[0.5], 1.0, &cfg).unwrap()[0];
        let ab = lie_transport(&one_dim("y1^2"), &[Expr::one()], &origin(1.0), &[0.8], 1.0, &cfg).unwrap()[0];
        assert!((a + b - ab).abs() < 1e-9);
    }

    #[test]
    fn prop1_and_prop4_basic() {
        let cfg = TransportConfig::default();
        let sampler = SampleBox::chart(1, 1, -2.0, 2.0, 32, 0);
        let r = verify_prop1(&one_dim("1 + 2*y1"), &unit_curve(), &origin(1.0), &origin(-0.5), &cfg, &sampler).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = verify_prop1(&one_dim("y1^2"), &unit_curve(), &origin(1.0), &origin(0.0), &cfg, &sampler).unwrap();
        assert!(!r.passed());
        assert_eq!(r.notes, vec!["not affine".to_string()]);
        let r = verify_prop4(&one_dim("x1*y1 + 1"), &[p("1 + cos(x1)")], &origin(0.5), &[1.0], 1.0, &cfg, &sampler).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.residuals.len(), 2);
    }
}
