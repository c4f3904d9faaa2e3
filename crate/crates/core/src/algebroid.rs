//! Affine Lie algebroids in coordinates, pseudo-SODEs and their connections.
//!
//! Index layout: `V = Ẽ`, so every `ℓ = k + 1` array has the `e_0` direction
//! in slot `0` and `e_α` in slot `α + 1`. The extended anchor is
//! `ρ̃(e_0) = ρ^i_0 ∂_{x^i}`, `ρ̃(e_α) = ρ^i_α ∂_{x^i}`.

use nalgebra::DMatrix;

use crate::berwald::{covariant_d, Variant};
use crate::bundle::{AnchorSpec, ChartSpec, ProlongedSection, TildeSection, VectorField};
use crate::connection::{AdaptedSection, Connection};
use crate::expr::{Env, Expr, RandomExpr, Var};
use crate::sample::{SampleBox, SampleError};
use crate::transport::{rk4, TransportConfig};
use crate::verify::{sweep, MaxTracker, Point, Residual, Verification};
use crate::Error;

/// Hessians with a larger condition number are treated as singular.
pub const REGULARITY_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidSpec {
    pub chart: ChartSpec,
    pub anchor: AnchorSpec,
    /// `c[γ][α][β] = C^γ_{αβ}`.
    pub c: Vec<Vec<Vec<Expr>>>,
    /// `c0[γ][β] = C^γ_{0β}`.
    pub c0: Vec<Vec<Expr>>,
}

/// The pseudo-SODE `Γ = 𝓧_0 + y^α 𝓧_α + f^α 𝓥_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoSode {
    pub f: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianSpec {
    pub l: Expr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JacobiMode {
    #[default]
    Sampled,
    /// Every Jacobi sum must fold to the constant zero.
    Symbolic,
}

impl AlgebroidSpec {
    pub fn new(n: usize, k: usize, anchor: AnchorSpec, c: Vec<Vec<Vec<Expr>>>, c0: Vec<Vec<Expr>>) -> Result<Self, Error> {
        let chart = ChartSpec::anchored(n, k);
        if anchor.n() != n || anchor.l() != k + 1 {
            return Err(Error::Config(format!("algebroid anchor must be {}x{}", n, k + 1)));
        }
        if c.len() != k || c.iter().any(|m| m.len() != k || m.iter().any(|r| r.len() != k)) {
            return Err(Error::Config(format!("structure functions C must be {k}x{k}x{k}")));
        }
        if c0.len() != k || c0.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("structure functions C0 must be {k}x{k}")));
        }
        for e in c.iter().flatten().flatten().chain(c0.iter().flatten()) {
            if let Some(v) = e.variables().into_iter().find(|v| !matches!(v, Var::X(i) if *i < n)) {
                return Err(Error::Config(format!("structure function `{e}` depends on `{v}`")));
            }
        }
        Ok(AlgebroidSpec { chart, anchor, c, c0 })
    }

    /// `C ≡ 0` with the given anchor.
    pub fn abelian(n: usize, k: usize, anchor: AnchorSpec) -> Result<Self, Error> {
        Self::new(n, k, anchor, vec![vec![vec![Expr::zero(); k]; k]; k], vec![vec![Expr::zero(); k]; k])
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn k(&self) -> usize {
        self.chart.k
    }

    pub fn l(&self) -> usize {
        self.chart.l
    }

    /// `C^γ_{ab}` on the full layout (`a, b ∈ 0..=k`, `γ < k`).
    pub fn structure(&self, gamma: usize, a: usize, b: usize) -> Expr {
        match (a, b) {
            (0, 0) => Expr::zero(),
            (0, b) => self.c0[gamma][b - 1].clone(),
            (a, 0) => Expr::neg(self.c0[gamma][a - 1].clone()),
            (a, b) => self.c[gamma][a - 1][b - 1].clone(),
        }
    }

    /// `ρ̃(e_a)` as a vector field on `M`.
    fn anchor_of(&self, a: usize) -> VectorField {
        VectorField::new(self.anchor.rho.iter().map(|row| row[a].clone()).collect(), vec![])
    }

    /// Components `δ` of the Jacobi sum `Σ_cyc [[e_a, e_b], e_c]`, using
    /// `[[e_a, e_b], e_c] = (C^γ_{ab} C^δ_{γc} − ρ̃(e_c)(C^δ_{ab})) e_δ`.
    pub fn jacobi_expr(&self, a: usize, b: usize, c: usize) -> Vec<Expr> {
        let k = self.k();
        let term = |a: usize, b: usize, c: usize| -> Vec<Expr> {
            let rc = self.anchor_of(c);
            (0..k)
                .map(|d| {
                    let quad = Expr::sum((0..k).map(|g| Expr::mul(self.structure(g, a, b), self.structure(d, g + 1, c))));
                    Expr::sub(quad, rc.apply(&self.structure(d, a, b)))
                })
                .collect()
        };
        let (t1, t2, t3) = (term(a, b, c), term(b, c, a), term(c, a, b));
        (0..k).map(|d| Expr::sum([t1[d].clone(), t2[d].clone(), t3[d].clone()])).collect()
    }

    /// `C^γ_{ab} ρ^i_γ − [ρ̃e_a, ρ̃e_b]^i`, component `i`.
    pub fn anchor_compatibility_expr(&self, a: usize, b: usize) -> Vec<Expr> {
        let (ra, rb) = (self.anchor_of(a), self.anchor_of(b));
        let bracket = ra.bracket(&rb);
        (0..self.n())
            .map(|i| {
                let lhs = Expr::sum((0..self.k()).map(|g| Expr::mul(self.structure(g, a, b), self.anchor.rho[i][g + 1].clone())));
                Expr::sub(lhs, bracket.x[i].clone())
            })
            .collect()
    }
}

fn with_indices(mut p: Option<Point>, idx: &[(&str, usize)]) -> Option<Point> {
    if let Some(p) = p.as_mut() {
        for (name, v) in idx {
            p.insert((*name).to_string(), *v as f64);
        }
    }
    p
}

/// Antisymmetry, anchor compatibility and Jacobi residuals on basis
/// elements. Witness points carry the offending indices (`0` is `e_0`).
pub fn validate_algebroid(spec: &AlgebroidSpec, sampler: &SampleBox, mode: JacobiMode, tol: f64) -> Result<Verification, Error> {
    let (k, l) = (spec.k(), spec.l());
    let points = sampler.points(&Env::new());
    let mut out = Verification::new();

    let mut anti = MaxTracker::new();
    for g in 0..k {
        for a in 0..k {
            for b in a..k {
                let e = Expr::add(spec.c[g][a][b].clone(), spec.c[g][b][a].clone());
                let t = sweep([&e], &points)?;
                if anti.witness.is_none() || t.value > anti.value || t.value.is_nan() {
                    anti = MaxTracker { value: t.value, witness: with_indices(t.witness, &[("gamma", g + 1), ("a", a + 1), ("b", b + 1)]) };
                }
            }
        }
    }
    out.push(anti.at_most("antisymmetry", tol));

    let mut compat = MaxTracker::new();
    for a in 0..l {
        for b in a + 1..l {
            let t = sweep(&spec.anchor_compatibility_expr(a, b), &points)?;
            if compat.witness.is_none() || t.value > compat.value || t.value.is_nan() {
                compat = MaxTracker { value: t.value, witness: with_indices(t.witness, &[("a", a), ("b", b)]) };
            }
        }
    }
    out.push(compat.at_most("anchor_compatibility", tol));

    let mut jacobi = MaxTracker::new();
    let mut structural = true;
    for a in 0..l {
        for b in a + 1..l {
            for c in b + 1..l {
                let sum = spec.jacobi_expr(a, b, c);
                structural &= sum.iter().all(|e| e.fold().is_structural_zero());
                let t = sweep(&sum, &points)?;
                if jacobi.witness.is_none() || t.value > jacobi.value || t.value.is_nan() {
                    jacobi = MaxTracker { value: t.value, witness: with_indices(t.witness, &[("a", a), ("b", b), ("c", c)]) };
                }
            }
        }
    }
    let mut r = jacobi.at_most("jacobi", tol);
    if mode == JacobiMode::Symbolic && !structural {
        r.passed = false;
        out.note("jacobi: not a structural zero");
    }
    out.push(r);
    Ok(out)
}

/// `S(Z) = (ζ^α − ζ^0 y^α) 𝓥_α`.
pub fn vertical_endomorphism(z: &ProlongedSection) -> ProlongedSection {
    let k = z.k();
    let v = (0..k).map(|a| Expr::sub(z.z[a + 1].clone(), Expr::mul(z.z[0].clone(), Expr::y(a)))).collect();
    ProlongedSection { z: vec![Expr::zero(); z.l()], v }
}

/// The prolonged algebroid bracket on coordinate-basis sections.
pub fn prolonged_bracket(spec: &AlgebroidSpec, z1: &ProlongedSection, z2: &ProlongedSection) -> ProlongedSection {
    let (k, l) = (spec.k(), spec.l());
    let (f1, f2) = (z1.anchor_field(&spec.anchor), z2.anchor_field(&spec.anchor));
    let z = (0..l)
        .map(|b| {
            let derivative = Expr::sub(f1.apply(&z2.z[b]), f2.apply(&z1.z[b]));
            if b == 0 {
                return derivative;
            }
            let mut terms = Vec::new();
            for a in 0..l {
                for c in 0..l {
                    let s = spec.structure(b - 1, a, c);
                    if !s.is_structural_zero() {
                        terms.push(Expr::mul(Expr::mul(z1.z[a].clone(), z2.z[c].clone()), s));
                    }
                }
            }
            Expr::add(Expr::sum(terms), derivative)
        })
        .collect();
    let v = (0..k).map(|b| Expr::sub(f1.apply(&z2.v[b]), f2.apply(&z1.v[b]))).collect();
    ProlongedSection { z, v }
}

pub fn pseudo_sode_build(sode: &PseudoSode) -> ProlongedSection {
    let k = sode.f.len();
    let z = std::iter::once(Expr::one()).chain((0..k).map(Expr::y)).collect();
    ProlongedSection { z, v: sode.f.clone() }
}

/// `Γ^α_β = −½(∂f^α/∂y^β + y^γ C^α_{γβ} + C^α_{0β})`,
/// `Γ^α_0 = −f^α + ½ y^β (∂f^α/∂y^β + C^α_{0β})`.
pub fn sode_connection(spec: &AlgebroidSpec, sode: &PseudoSode) -> Result<Connection, Error> {
    let k = spec.k();
    if sode.f.len() != k {
        return Err(Error::Config(format!("pseudo-SODE needs {k} components, got {}", sode.f.len())));
    }
    let half = Expr::num(0.5);
    let gamma = (0..k)
        .map(|alpha| {
            let f = &sode.f[alpha];
            let g0 = {
                let inner = (0..k).map(|b| Expr::mul(Expr::y(b), Expr::add(f.dy(b), spec.c0[alpha][b].clone())));
                Expr::sub(Expr::mul(half.clone(), Expr::sum(inner)), f.clone())
            };
            let linear = (0..k).map(|b| {
                let yc = Expr::sum((0..k).map(|g| Expr::mul(Expr::y(g), spec.c[alpha][g][b].clone())));
                Expr::neg(Expr::mul(half.clone(), Expr::sum([f.dy(b), yc, spec.c0[alpha][b].clone()])))
            });
            std::iter::once(g0).chain(linear).collect()
        })
        .collect();
    Connection::new(spec.chart, spec.anchor.clone(), gamma)
}

/// `d_Γ S(Z) = [Γ, S(Z)] − S([Γ, Z])`.
pub fn d_gamma_s(spec: &AlgebroidSpec, gamma: &ProlongedSection, z: &ProlongedSection) -> ProlongedSection {
    prolonged_bracket(spec, gamma, &vertical_endomorphism(z))
        .minus(&vertical_endomorphism(&prolonged_bracket(spec, gamma, z)))
}

/// `P_H(Z) = ½(Z − d_Γ S(Z) + ⟨Z, 𝓧^0⟩ Γ)`.
pub fn horizontal_projector(spec: &AlgebroidSpec, sode: &PseudoSode, z: &ProlongedSection) -> ProlongedSection {
    let gamma = pseudo_sode_build(sode);
    z.minus(&d_gamma_s(spec, &gamma, z)).plus(&gamma.scale(&z.z[0])).scale(&Expr::num(0.5))
}

/// Result of [`lagrangian_sode`].
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianSode {
    pub sode: PseudoSode,
    /// Largest Hessian condition number over the sample box.
    pub max_condition: f64,
}

/// Determinant by cofactor expansion along the first row.
fn determinant(m: &[Vec<Expr>]) -> Expr {
    match m.len() {
        0 => Expr::one(),
        1 => m[0][0].clone(),
        n => Expr::sum((0..n).map(|j| {
            let term = Expr::mul(m[0][j].clone(), determinant(&minor(m, 0, j)));
            if j % 2 == 0 {
                term
            } else {
                Expr::neg(term)
            }
        })),
    }
}

fn minor(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, e)| e.clone()).collect())
        .collect()
}

/// `adj(m)[i][j] = (−1)^{i+j} det(minor(m, j, i))`.
fn adjugate(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = m.len();
    if n == 1 {
        return vec![vec![Expr::one()]];
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = determinant(&minor(m, j, i));
                    if (i + j) % 2 == 0 {
                        d
                    } else {
                        Expr::neg(d)
                    }
                })
                .collect()
        })
        .collect()
}

/// The 1-norm condition number of `g`, or infinity when LU finds it singular.
pub fn condition_number(g: &DMatrix<f64>) -> f64 {
    let norm1 = |m: &DMatrix<f64>| m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    match g.clone().lu().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => norm1(g) * norm1(&inv),
        _ => f64::INFINITY,
    }
}

/// `f^α = g^{αβ}(ρ^i_β ∂L/∂x^i + (C^γ_{μβ} y^μ + C^γ_{0β}) ∂L/∂y^γ − (ρ^i_0 + ρ^i_μ y^μ) ∂²L/∂x^i∂y^β)`.
///
/// The inverse Hessian enters symbolically through its adjugate and
/// determinant. Regularity is checked at every sample point.
pub fn lagrangian_sode(spec: &AlgebroidSpec, lag: &LagrangianSpec, sampler: &SampleBox) -> Result<LagrangianSode, Error> {
    let (n, k) = (spec.n(), spec.k());
    let l = &lag.l;
    let ly: Vec<Expr> = (0..k).map(|a| l.dy(a)).collect();
    let hessian: Vec<Vec<Expr>> = (0..k).map(|a| (0..k).map(|b| ly[a].dy(b)).collect()).collect();

    let mut max_condition = 0.0f64;
    for env in sampler.points(&Env::new()) {
        let mut g = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] = hessian[a][b].eval(&env).map_err(|source| SampleError { source, point: env.bindings() })?;
            }
        }
        let cond = condition_number(&g);
        if !(cond <= REGULARITY_LIMIT) {
            return Err(Error::Regularity { condition: cond, witness: env.bindings() });
        }
        max_condition = max_condition.max(cond);
    }

    let rho = &spec.anchor.rho;
    let rhs: Vec<Expr> = (0..k)
        .map(|b| {
            let t1 = Expr::sum((0..n).map(|i| Expr::mul(rho[i][b + 1].clone(), l.dx(i))));
            let t2 = Expr::sum((0..k).map(|g| {
                let coeff = Expr::add(
                    Expr::sum((0..k).map(|m| Expr::mul(spec.c[g][m][b].clone(), Expr::y(m)))),
                    spec.c0[g][b].clone(),
                );
                Expr::mul(coeff, ly[g].clone())
            }));
            let t3 = Expr::sum((0..n).map(|i| {
                let velocity =
                    Expr::add(rho[i][0].clone(), Expr::sum((0..k).map(|m| Expr::mul(rho[i][m + 1].clone(), Expr::y(m)))));
                Expr::mul(velocity, ly[b].dx(i))
            }));
            Expr::sub(Expr::add(t1, t2), t3)
        })
        .collect();
    let det = determinant(&hessian);
    let adj = adjugate(&hessian);
    let f = (0..k)
        .map(|a| {
            let num = Expr::sum((0..k).map(|b| Expr::mul(adj[a][b].clone(), rhs[b].clone())));
            Expr::div(num, det.clone())
        })
        .collect();
    Ok(LagrangianSode { sode: PseudoSode { f }, max_condition })
}

fn tilde_from_z(z: &ProlongedSection) -> TildeSection {
    TildeSection { x0: z.z[0].clone(), xa: z.z[1..].to_vec() }
}

fn adapted_vertical(conn: &Connection, z: &ProlongedSection) -> TildeSection {
    TildeSection::from_ebar(&conn.to_adapted(z).w)
}

/// `z^a 𝓗_a` and `w^α 𝓥_α` for the splitting of `conn`.
pub fn split_projections(conn: &Connection, z: &ProlongedSection) -> (ProlongedSection, ProlongedSection) {
    let adapted = conn.to_adapted(z);
    let horizontal = conn.to_coordinates(&AdaptedSection::new(adapted.z.clone(), vec![Expr::zero(); conn.k()]));
    let vertical = ProlongedSection::new(vec![Expr::zero(); conn.l()], adapted.w);
    (horizontal, vertical)
}

/// `V X = (X^α − X^0 y^α) 𝓥_α`.
pub fn vertical_lift_section(x: &TildeSection, l: usize) -> ProlongedSection {
    let v = x.xa.iter().enumerate().map(|(a, c)| Expr::sub(c.clone(), Expr::mul(x.x0.clone(), Expr::y(a)))).collect();
    ProlongedSection { z: vec![Expr::zero(); l], v }
}

/// `H X = X^0 𝓗_0 + X^α 𝓗_α` for the splitting of `conn`.
pub fn horizontal_lift_section(conn: &Connection, x: &TildeSection) -> ProlongedSection {
    let z: Vec<Expr> = x.components().cloned().collect();
    conn.to_coordinates(&AdaptedSection::new(z, vec![Expr::zero(); conn.k()]))
}

/// The Berwald derivatives written with algebroid brackets:
///
/// - plain: `[P_H Z, V X]_V + [P_V Z, H X]_H + ρ̃¹(P_H Z)(X^0) 𝓘`
/// - hat: `[P_H Z, V X]_V + [P_V Z, H X̄]_H + ρ̃¹(Z)(X^0) 𝓘`, `X̄ = X − X^0 𝓘`
pub fn berwald_direct(spec: &AlgebroidSpec, conn: &Connection, z: &ProlongedSection, x: &TildeSection, variant: Variant) -> TildeSection {
    let (l, k) = (spec.l(), spec.k());
    let (ph, pv) = split_projections(conn, z);
    let first = adapted_vertical(conn, &prolonged_bracket(spec, &ph, &vertical_lift_section(x, l)));
    let canonical = TildeSection::canonical(k);
    let (lifted, driver) = match variant {
        Variant::Plain => (x.clone(), &ph),
        Variant::Hat => (x.minus(&canonical.scale(&x.x0)), z),
    };
    let second = tilde_from_z(&prolonged_bracket(spec, &pv, &horizontal_lift_section(conn, &lifted)));
    let third = canonical.scale(&driver.anchor_field(&spec.anchor).apply(&x.x0));
    first.plus(&second).plus(&third)
}

fn tilde_diffs(a: &TildeSection, b: &TildeSection) -> Vec<Expr> {
    a.components().zip(b.components()).map(|(p, q)| Expr::sub(p.clone(), q.clone())).collect()
}

fn prolonged_diffs(a: &ProlongedSection, b: &ProlongedSection) -> Vec<Expr> {
    a.components().zip(b.components()).map(|(p, q)| Expr::sub(p.clone(), q.clone())).collect()
}

fn random_vars(n: usize, k: usize) -> Vec<Var> {
    (0..n).map(Var::X).chain((0..k).map(Var::Y)).collect()
}

/// Compares [`berwald_direct`] with the table-based `covariant_d` over the
/// family `Z ∈ {F 𝓗_a, F 𝓥_α}`, `X ∈ {G 𝓘, G ē_β, G σ}` with random smooth
/// coefficients `F, G` and random basic `σ`.
pub fn verify_direct_formulae(spec: &AlgebroidSpec, conn: &Connection, sampler: &SampleBox, tol: f64) -> Result<Verification, Error> {
    let (n, k, l) = (spec.n(), spec.k(), spec.l());
    if conn.chart != spec.chart || conn.anchor != spec.anchor {
        return Err(Error::Config("connection and algebroid must share the chart and anchor".into()));
    }
    let mut rng = RandomExpr::seeded(sampler.seed).with_vars(random_vars(n, k));
    let mut base_rng = RandomExpr::seeded(sampler.seed ^ 0x5eed).with_vars((0..n).map(Var::X).collect());

    let mut family_z = Vec::new();
    for a in 0..l {
        family_z.push(AdaptedSection::horizontal(l, k, a).scale(&rng.smooth(2)));
    }
    for alpha in 0..k {
        family_z.push(AdaptedSection::vertical(l, k, alpha).scale(&rng.smooth(2)));
    }
    let mut family_x = vec![TildeSection::canonical(k).scale(&rng.smooth(2))];
    for b in 0..k {
        let mut e = vec![Expr::zero(); k];
        e[b] = Expr::one();
        family_x.push(TildeSection::from_ebar(&e).scale(&rng.smooth(2)));
    }
    let sigma: Vec<Expr> = (0..k).map(|_| base_rng.smooth(2)).collect();
    family_x.push(TildeSection::from_e(&sigma).scale(&rng.smooth(2)));

    let points = sampler.points(&Env::new());
    let mut out = Verification::new();
    for variant in [Variant::Plain, Variant::Hat] {
        let mut diffs = Vec::new();
        for z in &family_z {
            let zc = conn.to_coordinates(z);
            for x in &family_x {
                diffs.extend(tilde_diffs(&berwald_direct(spec, conn, &zc, x, variant), &covariant_d(conn, variant, z, x)));
            }
        }
        out.push(sweep(&diffs, &points)?.at_most(format!("direct_vs_tables_{}", variant.name()), tol));
    }
    Ok(out)
}

/// `[𝓗_a, 𝓥_α] = ∂Γ^δ_a/∂y^α 𝓥_δ` and
/// `[𝓗_a, 𝓗_b] = C^δ_{ab} 𝓗_δ + (C^δ_{ab} Γ^γ_δ + ρ̃¹(𝓗_b)(Γ^γ_a) − ρ̃¹(𝓗_a)(Γ^γ_b)) 𝓥_γ`.
pub fn verify_hvbrackets(spec: &AlgebroidSpec, conn: &Connection, sampler: &SampleBox, tol: f64) -> Result<Verification, Error> {
    let (k, l) = (spec.k(), spec.l());
    let basis = conn.horizontal_basis();
    let points = sampler.points(&Env::new());
    let mut hv = Vec::new();
    let mut hh = Vec::new();
    for a in 0..l {
        for alpha in 0..k {
            let lhs = prolonged_bracket(spec, &basis[a], &ProlongedSection::v_basis(l, k, alpha));
            let rhs = ProlongedSection::new(vec![Expr::zero(); l], (0..k).map(|d| conn.gamma[d][a].dy(alpha)).collect());
            hv.extend(prolonged_diffs(&lhs, &rhs));
        }
        for b in 0..l {
            let lhs = prolonged_bracket(spec, &basis[a], &basis[b]);
            let (fa, fb) = (basis[a].anchor_field(&spec.anchor), basis[b].anchor_field(&spec.anchor));
            let mut rhs = ProlongedSection::zero(l, k);
            for d in 0..k {
                rhs = rhs.plus(&basis[d + 1].scale(&spec.structure(d, a, b)));
            }
            let extra: Vec<Expr> = (0..k)
                .map(|g| {
                    let cg = Expr::sum((0..k).map(|d| Expr::mul(spec.structure(d, a, b), conn.gamma[g][d + 1].clone())));
                    Expr::sum([cg, fb.apply(&conn.gamma[g][a]), Expr::neg(fa.apply(&conn.gamma[g][b]))])
                })
                .collect();
            rhs = rhs.plus(&ProlongedSection::new(vec![Expr::zero(); l], extra));
            hh.extend(prolonged_diffs(&lhs, &rhs));
        }
    }
    let mut out = Verification::new();
    out.push(sweep(&hv, &points)?.at_most("bracket_h_v", tol));
    out.push(sweep(&hh, &points)?.at_most("bracket_h_h", tol));
    Ok(out)
}

/// The pseudo-SODE identities: `S² = 0`, the eigen-relations of `d_Γ S`,
/// the projector properties of `P_H` and the connection-coefficient identity
/// `Γ^α_0 + y^β Γ^α_β + f^α = 0`.
pub fn verify_sode_suite(spec: &AlgebroidSpec, sode: &PseudoSode, sampler: &SampleBox, tol: f64) -> Result<Verification, Error> {
    let (n, k, l) = (spec.n(), spec.k(), spec.l());
    let conn = sode_connection(spec, sode)?;
    let gamma = pseudo_sode_build(sode);
    let points = sampler.points(&Env::new());
    let mut rng = RandomExpr::seeded(sampler.seed).with_vars(random_vars(n, k));
    let mut base_rng = RandomExpr::seeded(sampler.seed ^ 0xba5e).with_vars((0..n).map(Var::X).collect());
    let random_z: Vec<ProlongedSection> = (0..3)
        .map(|_| ProlongedSection::new((0..l).map(|_| rng.smooth(2)).collect(), (0..k).map(|_| rng.smooth(2)).collect()))
        .collect();
    let sigma_bar: Vec<Expr> = (0..k).map(|_| base_rng.smooth(2)).collect();
    let x_bar = TildeSection::from_ebar(&sigma_bar);
    let v_sigma = vertical_lift_section(&x_bar, l);
    let h_sigma = horizontal_lift_section(&conn, &x_bar);

    let mut out = Verification::new();
    let mut check = |label: &str, exprs: Vec<Expr>| -> Result<(), Error> {
        out.push(sweep(&exprs, &points)?.at_most(label, tol));
        Ok(())
    };

    let mut s2 = Vec::new();
    let mut sh = Vec::new();
    for z in &random_z {
        s2.extend(vertical_endomorphism(&vertical_endomorphism(z)).components().cloned());
        let x = TildeSection { x0: z.z[0].clone(), xa: z.z[1..].to_vec() };
        let (_, theta) = crate::bundle::tilde_decompose(&x);
        sh.extend(prolonged_diffs(&vertical_endomorphism(&horizontal_lift_section(&conn, &x)), &vertical_lift_section(&theta, l)));
    }
    check("s_squared", s2)?;
    check("s_of_horizontal_lift", sh)?;
    check("s_of_gamma", vertical_endomorphism(&gamma).components().cloned().collect())?;

    check("dgs_vertical", prolonged_diffs(&d_gamma_s(spec, &gamma, &v_sigma), &v_sigma))?;
    check("dgs_horizontal", prolonged_diffs(&d_gamma_s(spec, &gamma, &h_sigma), &h_sigma.scale(&Expr::num(-1.0))))?;
    check("dgs_gamma", d_gamma_s(spec, &gamma, &gamma).components().cloned().collect())?;

    let mut idem = Vec::new();
    let mut complement = Vec::new();
    for z in &random_z {
        let ph = horizontal_projector(spec, sode, z);
        idem.extend(prolonged_diffs(&horizontal_projector(spec, sode, &ph), &ph));
        let (_, pv) = split_projections(&conn, z);
        complement.extend(prolonged_diffs(&ph.plus(&pv), z));
    }
    check("ph_idempotent", idem)?;
    check("ph_plus_pv", complement)?;
    check("ph_gamma", prolonged_diffs(&horizontal_projector(spec, sode, &gamma), &gamma))?;
    let mut kernel = Vec::new();
    for alpha in 0..k {
        kernel.extend(horizontal_projector(spec, sode, &ProlongedSection::v_basis(l, k, alpha)).components().cloned());
    }
    check("ph_vertical_kernel", kernel)?;
    let mut fixed = Vec::new();
    for h in conn.horizontal_basis() {
        fixed.extend(prolonged_diffs(&horizontal_projector(spec, sode, &h), &h));
    }
    check("ph_fixes_horizontal_basis", fixed)?;

    let identity: Vec<Expr> = (0..k)
        .map(|a| {
            let yg = Expr::sum((0..k).map(|b| Expr::mul(Expr::y(b), conn.gamma[a][b + 1].clone())));
            Expr::sum([conn.gamma[a][0].clone(), yg, sode.f[a].clone()])
        })
        .collect();
    check("gamma0_identity", identity)?;
    Ok(out)
}

/// True for the classical setting `n = k`, `ρ^i_0 = 0`, `ρ^i_α = δ^i_α`, `C ≡ 0`.
pub fn is_classical(spec: &AlgebroidSpec) -> bool {
    let (n, k) = (spec.n(), spec.k());
    n == k
        && spec.c.iter().flatten().flatten().chain(spec.c0.iter().flatten()).all(|e| e.fold().is_structural_zero())
        && (0..n).all(|i| {
            spec.anchor.rho[i][0].fold().is_structural_zero()
                && (0..k).all(|a| spec.anchor.rho[i][a + 1].fold().is_const(if i == a { 1.0 } else { 0.0 }))
        })
}

/// Euler–Lagrange oracle in the classical setting.
///
/// Integrates `ẋ = y`, `ẏ = f(x, y)` from `(x0, y0)` and checks
/// `d/dt ∂L/∂y^α = ∂L/∂x^α` along the solution, the time derivative taken by
/// five-point central differences on the RK4 nodes.
pub fn verify_euler_lagrange(
    spec: &AlgebroidSpec,
    lag: &LagrangianSpec,
    sode: &PseudoSode,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    cfg: &TransportConfig,
    tol: f64,
) -> Result<Verification, Error> {
    if !is_classical(spec) {
        return Err(Error::Config("the Euler-Lagrange oracle needs the classical setting (rho = identity, C = 0)".into()));
    }
    let k = spec.k();
    let (steps, h) = cfg.grid(0.0, t_end)?;
    if steps < 4 {
        return Err(Error::Config("the Euler-Lagrange oracle needs at least 4 steps".into()));
    }
    let state0: Vec<f64> = x0.iter().chain(y0).copied().collect();
    let states = rk4(
        |_, s| {
            let env = Env::at(&s[..k], &s[k..]);
            let mut out = s[k..].to_vec();
            for f in &sode.f {
                out.push(f.eval(&env)?);
            }
            Ok(out)
        },
        0.0,
        state0,
        h,
        steps,
    )?;
    let ly: Vec<Expr> = (0..k).map(|a| lag.l.dy(a)).collect();
    let lx: Vec<Expr> = (0..k).map(|a| lag.l.dx(a)).collect();
    let envs: Vec<Env> = states.iter().map(|s| Env::at(&s[..k], &s[k..])).collect();
    let momenta: Vec<Vec<f64>> = envs.iter().map(|env| ly.iter().map(|e| e.eval(env)).collect()).collect::<Result<_, _>>()?;
    let mut worst = MaxTracker::new();
    for j in 2..=steps - 2 {
        for a in 0..k {
            let p = |i: usize| momenta[i][a];
            let dp = (-p(j + 2) + 8.0 * p(j + 1) - 8.0 * p(j - 1) + p(j - 2)) / (12.0 * h);
            let force = lx[a].eval(&envs[j])?;
            worst.observe_point(dp - force, || {
                let mut w = envs[j].bindings();
                w.insert("t".into(), j as f64 * h);
                w
            });
        }
    }
    let mut out = Verification::new();
    out.push(worst.at_most("euler_lagrange", tol));
    Ok(out)
}

/// The Hessian condition number as a residual bounded by [`REGULARITY_LIMIT`].
pub fn regularity_residual(result: &Result<LagrangianSode, Error>) -> Result<Residual, Error> {
    match result {
        Ok(l) => Ok(Residual::at_most("hessian_condition", l.max_condition, REGULARITY_LIMIT, None)),
        Err(Error::Regularity { condition, witness }) => {
            Ok(Residual::at_most("hessian_condition", *condition, REGULARITY_LIMIT, Some(witness.clone())))
        }
        Err(e) => Err(e.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn classical(n: usize) -> AlgebroidSpec {
        let rho = (0..n).map(|i| (0..=n).map(|a| if a == i + 1 { Expr::one() } else { Expr::zero() }).collect()).collect();
        AlgebroidSpec::abelian(n, n, AnchorSpec::new(rho)).unwrap()
    }

    fn sampler(n: usize, k: usize) -> SampleBox {
        SampleBox::chart(n, k, -1.0, 1.0, 32, 9)
    }

    fn assert_zero(exprs: impl IntoIterator<Item = Expr>, b: &SampleBox) {
        let exprs: Vec<Expr> = exprs.into_iter().collect();
        let t = sweep(&exprs, &b.points(&Env::new())).unwrap();
        assert!(t.value <= 1e-12, "residual {} at {:?}", t.value, t.witness);
    }

    #[test]
    fn validate_examples() {
        let b = sampler(1, 2);
        let spec = AlgebroidSpec::abelian(1, 2, AnchorSpec::new(vec![vec![p("1"), p("2"), p("0")]])).unwrap();
        assert!(validate_algebroid(&spec, &b, JacobiMode::Sampled, 1e-9).unwrap().passed());

        let mut c0 = vec![vec![Expr::zero(); 2]; 2];
        c0[0][1] = Expr::one();
        let spec = AlgebroidSpec::new(1, 2, AnchorSpec::zero(1, 3), vec![vec![vec![Expr::zero(); 2]; 2]; 2], c0).unwrap();
        assert!(validate_algebroid(&spec, &b, JacobiMode::Symbolic, 1e-9).unwrap().passed());

        let mut c = vec![vec![vec![Expr::zero(); 2]; 2]; 2];
        c[0][0][1] = p("x1");
        c[0][1][0] = p("-x1");
        let spec = AlgebroidSpec::new(1, 2, AnchorSpec::zero(1, 3), c, vec![vec![Expr::zero(); 2]; 2]).unwrap();
        assert!(validate_algebroid(&spec, &b, JacobiMode::Sampled, 1e-9).unwrap().passed());
    }

    #[test]
    fn validate_reports_failures() {
        let b = sampler(1, 2);
        let mut c = vec![vec![vec![Expr::zero(); 2]; 2]; 2];
        c[1][0][1] = p("1");
        let spec = AlgebroidSpec::new(1, 2, AnchorSpec::zero(1, 3), c, vec![vec![Expr::zero(); 2]; 2]).unwrap();
        let r = validate_algebroid(&spec, &b, JacobiMode::Sampled, 1e-9).unwrap();
        let anti = r.get("antisymmetry").unwrap();
        assert!(!anti.passed);
        let w = anti.witness.as_ref().unwrap();
        assert_eq!((w["gamma"], w["a"], w["b"]), (2.0, 1.0, 2.0));

        // [e_0, e_1] = e_1 while ρ̃(e_0) = ∂x and ρ̃(e_1) = x ∂x: anchor fails
        let mut c0 = vec![vec![Expr::zero()]];
        c0[0][0] = p("2");
        let spec = AlgebroidSpec::new(1, 1, AnchorSpec::new(vec![vec![p("1"), p("x1")]]), vec![vec![vec![Expr::zero()]]], c0).unwrap();
        let r = validate_algebroid(&spec, &sampler(1, 1), JacobiMode::Sampled, 1e-9).unwrap();
        assert!(!r.get("anchor_compatibility").unwrap().passed);
    }

    #[test]
    fn vertical_endomorphism_examples() {
        let sode = PseudoSode { f: vec![p("x1*y2"), p("sin(y1)")] };
        assert_zero(vertical_endomorphism(&pseudo_sode_build(&sode)).components().cloned(), &sampler(1, 2));
        let s = vertical_endomorphism(&ProlongedSection::x_basis(3, 2, 1));
        assert_eq!(s, ProlongedSection::v_basis(3, 2, 0));
        let s = vertical_endomorphism(&ProlongedSection::x_basis(3, 2, 0));
        assert_eq!(s.v, vec![p("-y1"), p("-y2")]);
    }

    #[test]
    fn bracket_examples() {
        let spec = classical(1);
        let v = ProlongedSection::v_basis(2, 1, 0);
        assert!(prolonged_bracket(&spec, &v, &v).components().all(Expr::is_structural_zero));
        // Γ¹_1 = y1: [𝓗_1, 𝓥_1] = 𝓥_1
        let conn = Connection::new(spec.chart, spec.anchor.clone(), vec![vec![Expr::zero(), p("y1")]]).unwrap();
        let h1 = &conn.horizontal_basis()[1];
        let b = prolonged_bracket(&spec, h1, &v);
        assert!(b.z.iter().all(Expr::is_structural_zero));
        assert_eq!(b.v[0].as_const(), Some(1.0));
    }

    #[test]
    fn sode_examples() {
        let spec = classical(1);
        let gamma = pseudo_sode_build(&PseudoSode { f: vec![Expr::zero()] });
        assert_eq!(gamma, ProlongedSection::new(vec![Expr::one(), p("y1")], vec![Expr::zero()]));
        let conn = sode_connection(&spec, &PseudoSode { f: vec![Expr::zero()] }).unwrap();
        assert!(conn.gamma.iter().flatten().all(|e| e.fold().is_structural_zero()));

        let conn = sode_connection(&spec, &PseudoSode { f: vec![p("-y1")] }).unwrap();
        let b = sampler(1, 1);
        assert_zero([Expr::sub(conn.gamma[0][1].clone(), p("0.5")), Expr::sub(conn.gamma[0][0].clone(), p("0.5*y1"))], &b);

        let spec = AlgebroidSpec::new(1, 1, spec.anchor.clone(), vec![vec![vec![Expr::zero()]]], vec![vec![p("0.8")]]).unwrap();
        let conn = sode_connection(&spec, &PseudoSode { f: vec![Expr::zero()] }).unwrap();
        assert_zero([Expr::sub(conn.gamma[0][1].clone(), p("-0.4")), Expr::sub(conn.gamma[0][0].clone(), p("0.4*y1"))], &b);
    }

    #[test]
    fn projector_examples() {
        let spec = classical(1);
        let sode = PseudoSode { f: vec![p("-y1 - sin(x1)")] };
        let b = sampler(1, 1);
        let gamma = pseudo_sode_build(&sode);
        assert_zero(prolonged_diffs(&horizontal_projector(&spec, &sode, &gamma), &gamma), &b);
        assert_zero(horizontal_projector(&spec, &sode, &ProlongedSection::v_basis(2, 1, 0)).components().cloned(), &b);
    }

    #[test]
    fn lagrangian_examples() {
        let spec = classical(1);
        let b = sampler(1, 1);
        let free = lagrangian_sode(&spec, &LagrangianSpec { l: p("0.5*y1^2") }, &b).unwrap();
        assert_zero(free.sode.f.clone(), &b);
        let osc = lagrangian_sode(&spec, &LagrangianSpec { l: p("0.5*y1^2 - 0.5*x1^2") }, &b).unwrap();
        assert_zero([Expr::add(osc.sode.f[0].clone(), p("x1"))], &b);
        let degenerate = lagrangian_sode(&spec, &LagrangianSpec { l: p("y1") }, &b);
        assert!(matches!(degenerate, Err(Error::Regularity { .. })));
        assert!(!regularity_residual(&degenerate).unwrap().passed);
        assert!(regularity_residual(&Ok(free)).unwrap().passed);
    }

    #[test]
    fn adjugate_inverts() {
        let m = vec![vec![p("2"), p("x1")], vec![p("1"), p("3")]];
        let det = determinant(&m);
        let adj = adjugate(&m);
        let env = Env::new().with_x(vec![0.5]);
        for i in 0..2 {
            for j in 0..2 {
                let prod: f64 = (0..2).map(|t| adj[i][t].eval(&env).unwrap() * m[t][j].eval(&env).unwrap()).sum();
                let expected = if i == j { det.eval(&env).unwrap() } else { 0.0 };
                assert!((prod - expected).abs() < 1e-14);
            }
        }
    }
}
