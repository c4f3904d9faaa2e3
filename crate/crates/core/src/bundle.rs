//! Local-coordinate model of the affine bundle `E -> M`, its model vector
//! bundle, the extended bundle `Ẽ`, and the anchored bundle `V`.
//!
//! Coordinates: `x^i` on the base (`i < n`), `y^α` on the fibre of `E`
//! (`α < k`), `v^a` on the fibre of `V` (`a < ℓ`). In anchored-in-`E` mode
//! `V = Ẽ`, `ℓ = k + 1`, and slot `0` of every `V`-indexed array is the
//! `e_0` direction while slot `α + 1` is `e_α`.

use serde::{Deserialize, Serialize};

use crate::expr::{Env, Expr, Var};
use crate::sample::SampleError;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    #[serde(default)]
    pub anchored_in_e: bool,
}

impl ChartSpec {
    pub fn new(n: usize, k: usize, l: usize) -> Self {
        ChartSpec { n, k, l, anchored_in_e: false }
    }

    /// `V = Ẽ` with `ℓ = k + 1`.
    pub fn anchored(n: usize, k: usize) -> Self {
        ChartSpec { n, k, l: k + 1, anchored_in_e: true }
    }

    pub fn base_vars(&self) -> impl Iterator<Item = Var> {
        (0..self.n).map(Var::X)
    }

    pub fn fibre_vars(&self) -> impl Iterator<Item = Var> {
        (0..self.k).map(Var::Y)
    }
}

/// Anchor components `ρ^i_a(x)`, stored as `rho[i][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSpec {
    pub rho: Vec<Vec<Expr>>,
}

impl AnchorSpec {
    pub fn new(rho: Vec<Vec<Expr>>) -> Self {
        AnchorSpec { rho }
    }

    /// `ρ^i_a = δ^i_a` (requires `n = ℓ`).
    pub fn identity(n: usize) -> Self {
        let rho = (0..n).map(|i| (0..n).map(|a| if i == a { Expr::one() } else { Expr::zero() }).collect()).collect();
        AnchorSpec { rho }
    }

    pub fn zero(n: usize, l: usize) -> Self {
        AnchorSpec { rho: vec![vec![Expr::zero(); l]; n] }
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn l(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    /// `ρ(x)·v` evaluated at `env`.
    pub fn apply(&self, env: &Env, v: &[f64]) -> Result<Vec<f64>, Error> {
        self.rho
            .iter()
            .map(|row| {
                row.iter().zip(v).try_fold(0.0, |acc, (r, va)| Ok(acc + r.eval(env)? * va))
            })
            .collect()
    }

    /// The vector field `ρ(s)` on `M` as component expressions.
    pub fn image(&self, s: &[Expr]) -> Vec<Expr> {
        self.rho
            .iter()
            .map(|row| Expr::sum(row.iter().zip(s).map(|(r, sa)| Expr::mul(r.clone(), sa.clone()))))
            .collect()
    }
}

/// A point of `E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        EPoint { x, y }
    }

    pub fn env(&self) -> Env {
        Env::at(&self.x, &self.y)
    }
}

/// A point of `V` over a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct VPoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// An element of `Ẽ_m` in the basis `(e_0, e_α)`: `y0 = λ(ẽ)`.
///
/// `y0 = 1` is a point of `E`, `y0 = 0` a vector of `Ē`; other values are
/// general elements of `Ẽ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeVector {
    pub y0: f64,
    pub w: Vec<f64>,
}

impl TildeVector {
    pub fn new(y0: f64, w: Vec<f64>) -> Self {
        TildeVector { y0, w }
    }

    pub fn lambda(&self) -> f64 {
        self.y0
    }
}

/// A tangent vector to `E` in coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub xdot: Vec<f64>,
    pub ydot: Vec<f64>,
}

/// A section of `π*π̃` in the basis `(e_0, ē_α)`: `X = x0·e_0 + xa^α·ē_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeSection {
    pub x0: Expr,
    pub xa: Vec<Expr>,
}

impl TildeSection {
    pub fn new(x0: Expr, xa: Vec<Expr>) -> Self {
        TildeSection { x0, xa }
    }

    /// The canonical section `𝓘 = e_0 + y^α e_α`.
    pub fn canonical(k: usize) -> Self {
        TildeSection { x0: Expr::one(), xa: (0..k).map(Expr::y).collect() }
    }

    /// `σ = e_0 + σ^α ē_α` for a section of `π`.
    pub fn from_e(sigma: &[Expr]) -> Self {
        TildeSection { x0: Expr::one(), xa: sigma.to_vec() }
    }

    /// A section of `π*Ē` (no `e_0` part).
    pub fn from_ebar(sigma: &[Expr]) -> Self {
        TildeSection { x0: Expr::zero(), xa: sigma.to_vec() }
    }

    pub fn zero(k: usize) -> Self {
        TildeSection { x0: Expr::zero(), xa: vec![Expr::zero(); k] }
    }

    pub fn k(&self) -> usize {
        self.xa.len()
    }

    pub fn scale(&self, f: &Expr) -> Self {
        TildeSection {
            x0: Expr::mul(f.clone(), self.x0.clone()),
            xa: self.xa.iter().map(|c| Expr::mul(f.clone(), c.clone())).collect(),
        }
    }

    pub fn plus(&self, other: &TildeSection) -> Self {
        TildeSection {
            x0: Expr::add(self.x0.clone(), other.x0.clone()),
            xa: self.xa.iter().zip(&other.xa).map(|(a, b)| Expr::add(a.clone(), b.clone())).collect(),
        }
    }

    pub fn minus(&self, other: &TildeSection) -> Self {
        TildeSection {
            x0: Expr::sub(self.x0.clone(), other.x0.clone()),
            xa: self.xa.iter().zip(&other.xa).map(|(a, b)| Expr::sub(a.clone(), b.clone())).collect(),
        }
    }

    /// All components, `x0` first.
    pub fn components(&self) -> impl Iterator<Item = &Expr> {
        std::iter::once(&self.x0).chain(self.xa.iter())
    }

    pub fn eval(&self, env: &Env) -> Result<TildeVector, Error> {
        Ok(TildeVector {
            y0: self.x0.eval(env)?,
            w: self.xa.iter().map(|c| c.eval(env)).collect::<Result<_, _>>()?,
        })
    }

    /// True when no component depends on the fibre coordinates.
    pub fn is_basic(&self) -> bool {
        self.components().all(|c| c.variables().iter().all(|v| !matches!(v, Var::Y(_))))
    }
}

/// Section of `V` with components `s^a(x)`.
pub type SectionV = Vec<Expr>;
/// Section of `E` with components `σ^α(x)` (implicit `e_0` coefficient 1).
pub type SectionE = Vec<Expr>;
/// Section of `Ē` with components `σ̄^α(x)`.
pub type SectionEbar = Vec<Expr>;

/// A curve `c` in `V`: base curve `c_M(u)` and components `c^a(u)` on `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleCurve {
    pub cm: Vec<Expr>,
    pub ca: Vec<Expr>,
    pub domain: (f64, f64),
}

impl AdmissibleCurve {
    pub fn new(cm: Vec<Expr>, ca: Vec<Expr>, domain: (f64, f64)) -> Self {
        AdmissibleCurve { cm, ca, domain }
    }

    pub fn base_at(&self, u: f64) -> Result<Vec<f64>, Error> {
        let env = Env::new().with_u(u);
        Ok(self.cm.iter().map(|c| c.eval(&env)).collect::<Result<_, _>>()?)
    }

    pub fn components_at(&self, u: f64) -> Result<Vec<f64>, Error> {
        let env = Env::new().with_u(u);
        Ok(self.ca.iter().map(|c| c.eval(&env)).collect::<Result<_, _>>()?)
    }
}

/// Components `(1, y(e))` of `𝓘(e)`.
pub fn canonical_section(e: &EPoint) -> TildeVector {
    TildeVector { y0: 1.0, w: e.y.clone() }
}

/// `ϑ_e(ẽ) = ẽ − λ(ẽ)·e`; the result always lies in `Ē`.
pub fn theta_map(e: &EPoint, te: &TildeVector) -> TildeVector {
    TildeVector { y0: 0.0, w: te.w.iter().zip(&e.y).map(|(w, y)| w - te.y0 * y).collect() }
}

/// Splits `X = f·𝓘 + ϑ(X)`, returning `f = x0` and `ϑ(X)` with components
/// `X^α − x0·y^α`.
pub fn tilde_decompose(x: &TildeSection) -> (Expr, TildeSection) {
    let xbar = x
        .xa
        .iter()
        .enumerate()
        .map(|(a, c)| Expr::sub(c.clone(), Expr::mul(x.x0.clone(), Expr::y(a))))
        .collect();
    (x.x0.clone(), TildeSection { x0: Expr::zero(), xa: xbar })
}

/// Reassembles `f·𝓘 + X̄` into `(e_0, ē)` components.
pub fn tilde_reassemble(f: &Expr, xbar: &TildeSection) -> TildeSection {
    TildeSection::canonical(xbar.k()).scale(f).plus(xbar)
}

/// Vertical lift of `(e, ẽ)`: `ẋ = 0`, `ẏ = w − y0·y(e)`.
pub fn vertical_lift(e: &EPoint, te: &TildeVector) -> Tangent {
    Tangent { xdot: vec![0.0; e.x.len()], ydot: theta_map(e, te).w }
}

/// Maximum over Chebyshev–Lobatto nodes of `|ċ_M − ρ(c_M)·c|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub max_residual: f64,
    pub worst_u: f64,
    pub nodes: usize,
    pub passed: bool,
}

pub const ADMISSIBLE_TOL: f64 = 1e-9;
pub const DEFAULT_ADMISSIBLE_NODES: usize = 33;

/// Chebyshev–Lobatto nodes on `[a, b]`, endpoints included.
pub fn chebyshev_nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
    let m = (count - 1) as f64;
    (0..count)
        .map(|j| {
            let t = (std::f64::consts::PI * j as f64 / m).cos();
            0.5 * (a + b) - 0.5 * (b - a) * t
        })
        .collect()
}

pub fn check_admissible(c: &AdmissibleCurve, anchor: &AnchorSpec, nodes: usize) -> Result<AdmissibilityReport, Error> {
    if nodes < 2 {
        return Err(Error::Config(format!("admissibility check needs at least 2 nodes, got {nodes}")));
    }
    if c.cm.len() != anchor.n() || c.ca.len() != anchor.l() {
        return Err(Error::Config(format!(
            "curve has {} base and {} fibre components, anchor is {}x{}",
            c.cm.len(),
            c.ca.len(),
            anchor.n(),
            anchor.l()
        )));
    }
    let velocity: Vec<Expr> = c.cm.iter().map(|x| x.diff(&Var::U)).collect();
    let mut report = AdmissibilityReport { max_residual: 0.0, worst_u: c.domain.0, nodes, passed: true };
    for u in chebyshev_nodes(c.domain.0, c.domain.1, nodes) {
        let env_u = Env::new().with_u(u);
        let at_node = |source| Error::Sample(SampleError { source, point: env_u.bindings() });
        let xm: Vec<f64> = c.cm.iter().map(|e| e.eval(&env_u)).collect::<Result<_, _>>().map_err(at_node)?;
        let ca: Vec<f64> = c.ca.iter().map(|e| e.eval(&env_u)).collect::<Result<_, _>>().map_err(at_node)?;
        let env_x = Env::new().with_x(xm).with_u(u);
        let rho_c = anchor.apply(&env_x, &ca).map_err(|e| match e {
            Error::Expr(source) => at_node(source),
            other => other,
        })?;
        for (vel, rc) in velocity.iter().zip(rho_c) {
            let r = (vel.eval(&env_u).map_err(at_node)? - rc).abs();
            if r > report.max_residual || r.is_nan() {
                report.max_residual = r;
                report.worst_u = u;
            }
        }
    }
    report.passed = report.max_residual <= ADMISSIBLE_TOL;
    Ok(report)
}

/// A single chart-validation failure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChartIssue {
    /// Location, e.g. `anchor[0][1]`.
    pub at: String,
    pub message: String,
}

pub fn validate_chart(spec: &ChartSpec, anchor: &AnchorSpec) -> Result<(), Vec<ChartIssue>> {
    let mut issues = Vec::new();
    let mut issue = |at: String, message: &str| issues.push(ChartIssue { at, message: message.to_string() });
    if spec.n == 0 {
        issue("chart.n".into(), "base dimension must be at least 1");
    }
    if spec.k == 0 {
        issue("chart.k".into(), "fibre dimension must be at least 1");
    }
    if spec.l == 0 {
        issue("chart.l".into(), "V-fibre dimension must be at least 1");
    }
    if spec.anchored_in_e && spec.l != spec.k + 1 {
        issue("chart.l".into(), "anchored_in_E requires l = k + 1");
    }
    if anchor.rho.len() != spec.n {
        issue("anchor".into(), "anchor must have n rows");
    }
    for (i, row) in anchor.rho.iter().enumerate() {
        if row.len() != spec.l {
            issue(format!("anchor[{i}]"), "anchor row must have l entries");
        }
        for (a, entry) in row.iter().enumerate() {
            for var in entry.variables() {
                let msg = match var {
                    Var::Y(_) => "anchor depends on fibre variable",
                    Var::U => "anchor depends on curve parameter",
                    Var::X(j) if j >= spec.n => "anchor uses a base coordinate outside the chart",
                    Var::Param(_) => "anchor contains an unbound parameter",
                    Var::X(_) => continue,
                };
                issue(format!("anchor[{i}][{a}]"), msg);
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// A vector field on `E`: `ẋ^i ∂/∂x^i + ẏ^α ∂/∂y^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: Vec<Expr>,
    pub y: Vec<Expr>,
}

impl VectorField {
    pub fn new(x: Vec<Expr>, y: Vec<Expr>) -> Self {
        VectorField { x, y }
    }

    pub fn vertical(n: usize, y: Vec<Expr>) -> Self {
        VectorField { x: vec![Expr::zero(); n], y }
    }

    /// The derivative `X(f)`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let xs = self.x.iter().enumerate().map(|(i, c)| Expr::mul(c.clone(), f.dx(i)));
        let ys = self.y.iter().enumerate().map(|(a, c)| Expr::mul(c.clone(), f.dy(a)));
        Expr::sum(xs.chain(ys))
    }

    /// `[X, Y]^J = X(Y^J) − Y(X^J)`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        let comp = |a: &Expr, b: &Expr| Expr::sub(self.apply(b), other.apply(a));
        VectorField {
            x: self.x.iter().zip(&other.x).map(|(a, b)| comp(a, b)).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| comp(a, b)).collect(),
        }
    }

    pub fn eval(&self, env: &Env) -> Result<Tangent, Error> {
        Ok(Tangent {
            xdot: self.x.iter().map(|c| c.eval(env)).collect::<Result<_, _>>()?,
            ydot: self.y.iter().map(|c| c.eval(env)).collect::<Result<_, _>>()?,
        })
    }
}

/// `v(X̃)` for a section of `π*π̃`: the vertical field with `ẏ^α = X^α − x0·y^α`.
pub fn vertical_field(n: usize, x: &TildeSection) -> VectorField {
    VectorField::vertical(n, tilde_decompose(x).1.xa)
}

/// A section of the prolonged bundle in the coordinate basis:
/// `𝓩 = z^a 𝓧_a + v^α 𝓥_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedSection {
    pub z: Vec<Expr>,
    pub v: Vec<Expr>,
}

impl ProlongedSection {
    pub fn new(z: Vec<Expr>, v: Vec<Expr>) -> Self {
        ProlongedSection { z, v }
    }

    pub fn zero(l: usize, k: usize) -> Self {
        ProlongedSection { z: vec![Expr::zero(); l], v: vec![Expr::zero(); k] }
    }

    /// `𝓧_a`.
    pub fn x_basis(l: usize, k: usize, a: usize) -> Self {
        let mut s = Self::zero(l, k);
        s.z[a] = Expr::one();
        s
    }

    /// `𝓥_α`.
    pub fn v_basis(l: usize, k: usize, alpha: usize) -> Self {
        let mut s = Self::zero(l, k);
        s.v[alpha] = Expr::one();
        s
    }

    pub fn l(&self) -> usize {
        self.z.len()
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn scale(&self, f: &Expr) -> Self {
        let m = |c: &Expr| Expr::mul(f.clone(), c.clone());
        ProlongedSection { z: self.z.iter().map(m).collect(), v: self.v.iter().map(m).collect() }
    }

    pub fn plus(&self, o: &Self) -> Self {
        let add = |(a, b): (&Expr, &Expr)| Expr::add(a.clone(), b.clone());
        ProlongedSection { z: self.z.iter().zip(&o.z).map(add).collect(), v: self.v.iter().zip(&o.v).map(add).collect() }
    }

    pub fn minus(&self, o: &Self) -> Self {
        let sub = |(a, b): (&Expr, &Expr)| Expr::sub(a.clone(), b.clone());
        ProlongedSection { z: self.z.iter().zip(&o.z).map(sub).collect(), v: self.v.iter().zip(&o.v).map(sub).collect() }
    }

    pub fn components(&self) -> impl Iterator<Item = &Expr> {
        self.z.iter().chain(self.v.iter())
    }

    /// The anchor image `ρ¹(𝓩) = z^a ρ^i_a ∂/∂x^i + v^α ∂/∂y^α`.
    pub fn anchor_field(&self, anchor: &AnchorSpec) -> VectorField {
        VectorField { x: anchor.image(&self.z), y: self.v.clone() }
    }
}
