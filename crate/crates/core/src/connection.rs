//! ρ-connections given by their coefficients `Γ^α_a(x, y)`.

use crate::bundle::{
    vertical_field, AnchorSpec, ChartSpec, EPoint, ProlongedSection, Tangent, TildeSection,
    VectorField,
};
use crate::expr::{Env, Expr, Var};
use crate::sample::{is_zero, SampleBox, SampleError};
use crate::verify::{sweep, Residual, Verification};
use crate::Error;

/// Tolerance of the `ẋ(Q) = ρ(e)·v` precondition of [`Connection::connection_map_k`].
pub const PROLONGATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Connection {
    pub chart: ChartSpec,
    pub anchor: AnchorSpec,
    /// `gamma[α][a] = Γ^α_a`.
    pub gamma: Vec<Vec<Expr>>,
}

/// `Γ^α_a = Γ^α_{a0}(x) + Γ^α_{aβ}(x) y^β`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSplit {
    /// `gamma0[α][a] = Γ^α_{a0}`.
    pub gamma0: Vec<Vec<Expr>>,
    /// `gamma1[α][a][β] = Γ^α_{aβ}`.
    pub gamma1: Vec<Vec<Vec<Expr>>>,
}

impl AffineSplit {
    /// The coefficients `Γ^α_{a0} + Γ^α_{aβ} y^β`.
    pub fn reassemble(&self) -> Vec<Vec<Expr>> {
        self.gamma0
            .iter()
            .zip(&self.gamma1)
            .map(|(row0, row1)| {
                row0.iter()
                    .zip(row1)
                    .map(|(g0, g1)| {
                        let linear = g1.iter().enumerate().map(|(b, c)| Expr::mul(c.clone(), Expr::y(b)));
                        Expr::add(g0.clone(), Expr::sum(linear))
                    })
                    .collect()
            })
            .collect()
    }
}

/// A prolonged section in the adapted basis: `Z = z^a 𝓗_a + w^α 𝓥_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedSection {
    pub z: Vec<Expr>,
    pub w: Vec<Expr>,
}

impl AdaptedSection {
    pub fn new(z: Vec<Expr>, w: Vec<Expr>) -> Self {
        AdaptedSection { z, w }
    }

    /// `𝓗_a`.
    pub fn horizontal(l: usize, k: usize, a: usize) -> Self {
        let mut z = vec![Expr::zero(); l];
        z[a] = Expr::one();
        AdaptedSection { z, w: vec![Expr::zero(); k] }
    }

    /// `𝓥_α`.
    pub fn vertical(l: usize, k: usize, alpha: usize) -> Self {
        let mut w = vec![Expr::zero(); k];
        w[alpha] = Expr::one();
        AdaptedSection { z: vec![Expr::zero(); l], w }
    }

    pub fn scale(&self, f: &Expr) -> Self {
        let m = |c: &Expr| Expr::mul(f.clone(), c.clone());
        AdaptedSection { z: self.z.iter().map(m).collect(), w: self.w.iter().map(m).collect() }
    }

    pub fn plus(&self, o: &Self) -> Self {
        let add = |(a, b): (&Expr, &Expr)| Expr::add(a.clone(), b.clone());
        AdaptedSection { z: self.z.iter().zip(&o.z).map(add).collect(), w: self.w.iter().zip(&o.w).map(add).collect() }
    }

    pub fn is_horizontal(&self) -> bool {
        self.w.iter().all(Expr::is_structural_zero)
    }
}

impl Connection {
    pub fn new(chart: ChartSpec, anchor: AnchorSpec, gamma: Vec<Vec<Expr>>) -> Result<Self, Error> {
        if gamma.len() != chart.k || gamma.iter().any(|row| row.len() != chart.l) {
            return Err(Error::Config(format!("connection coefficients must be a {}x{} array", chart.k, chart.l)));
        }
        if anchor.n() != chart.n || anchor.l() != chart.l {
            return Err(Error::Config(format!("anchor must be a {}x{} array", chart.n, chart.l)));
        }
        for (alpha, row) in gamma.iter().enumerate() {
            for (a, g) in row.iter().enumerate() {
                for v in g.variables() {
                    let ok = match v {
                        Var::X(i) => i < chart.n,
                        Var::Y(b) => b < chart.k,
                        _ => false,
                    };
                    if !ok {
                        return Err(Error::Config(format!("connection[{alpha}][{a}] uses variable `{v}` outside the chart")));
                    }
                }
            }
        }
        Ok(Connection { chart, anchor, gamma })
    }

    /// `Γ ≡ 0`.
    pub fn flat(chart: ChartSpec, anchor: AnchorSpec) -> Self {
        Connection { gamma: vec![vec![Expr::zero(); chart.l]; chart.k], chart, anchor }
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

    /// `Γ^α_a(e)` evaluated.
    pub fn gamma_at(&self, env: &Env) -> Result<Vec<Vec<f64>>, Error> {
        self.gamma
            .iter()
            .map(|row| row.iter().map(|g| g.eval(env).map_err(Error::from)).collect())
            .collect()
    }

    /// `−Γ^α_a(x, y) v^a`.
    pub fn fibre_velocity(&self, env: &Env, v: &[f64]) -> Result<Vec<f64>, Error> {
        self.gamma
            .iter()
            .map(|row| row.iter().zip(v).try_fold(0.0, |acc, (g, va)| Ok(acc - g.eval(env)? * va)))
            .collect()
    }

    /// `h(e, v) = (ρ^i_a v^a, −Γ^α_a v^a)`.
    pub fn h_apply(&self, e: &EPoint, v: &[f64]) -> Result<Tangent, Error> {
        let env = e.env();
        Ok(Tangent { xdot: self.anchor.apply(&env, v)?, ydot: self.fibre_velocity(&env, v)? })
    }

    /// `𝓗_a = 𝓧_a − Γ^α_a 𝓥_α` in coordinate-basis components.
    pub fn horizontal_basis(&self) -> Vec<ProlongedSection> {
        (0..self.l())
            .map(|a| {
                let mut s = ProlongedSection::x_basis(self.l(), self.k(), a);
                s.v = self.gamma.iter().map(|row| Expr::neg(row[a].clone())).collect();
                s
            })
            .collect()
    }

    /// Coordinate-basis components of an adapted section: `Z^α = w^α − z^a Γ^α_a`.
    pub fn to_coordinates(&self, z: &AdaptedSection) -> ProlongedSection {
        let v = self
            .gamma
            .iter()
            .zip(&z.w)
            .map(|(row, w)| Expr::sub(w.clone(), self.contract(row, &z.z)))
            .collect();
        ProlongedSection { z: z.z.clone(), v }
    }

    /// Adapted components of a coordinate-basis section: `w^α = Z^α + z^a Γ^α_a`.
    pub fn to_adapted(&self, z: &ProlongedSection) -> AdaptedSection {
        let w = self
            .gamma
            .iter()
            .zip(&z.v)
            .map(|(row, v)| Expr::add(v.clone(), self.contract(row, &z.z)))
            .collect();
        AdaptedSection { z: z.z.clone(), w }
    }

    fn contract(&self, row: &[Expr], s: &[Expr]) -> Expr {
        Expr::sum(row.iter().zip(s).map(|(g, sa)| Expr::mul(g.clone(), sa.clone())))
    }

    /// `Γ^α_a s^a` for a section `s` of `V` (or any coefficient vector).
    pub fn gamma_contract(&self, s: &[Expr]) -> Vec<Expr> {
        self.gamma.iter().map(|row| self.contract(row, s)).collect()
    }

    /// The vector field `h(s) = ρ^i_a s^a ∂_{x^i} − Γ^α_a s^a ∂_{y^α}` on `E`.
    pub fn horizontal_field(&self, s: &[Expr]) -> VectorField {
        VectorField { x: self.anchor.image(s), y: self.gamma_contract(s).into_iter().map(Expr::neg).collect() }
    }

    /// The anchor image `ρ¹(Z) = z^a(ρ^i_a ∂_{x^i} − Γ^α_a ∂_{y^α}) + w^α ∂_{y^α}` of an adapted section.
    pub fn anchor_field(&self, z: &AdaptedSection) -> VectorField {
        self.to_coordinates(z).anchor_field(&self.anchor)
    }

    /// `K^α = ẏ^α(Q) + Γ^α_a(e) v^a` for `(v, Q)` in the prolongation at `e`.
    pub fn connection_map_k(&self, e: &EPoint, v: &[f64], q: &Tangent) -> Result<Vec<f64>, Error> {
        let env = e.env();
        let rho_v = self.anchor.apply(&env, v)?;
        let residual = rho_v.iter().zip(&q.xdot).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !(residual <= PROLONGATION_TOL) {
            return Err(Error::NotInProlongation { residual });
        }
        let minus_gv = self.fibre_velocity(&env, v)?;
        Ok(q.ydot.iter().zip(minus_gv).map(|(yd, g)| yd - g).collect())
    }

    /// Every second fibre derivative `∂²Γ^α_a/∂y^β∂y^γ`, tagged with `(α, a)`.
    fn second_fibre_derivatives(&self) -> Vec<(usize, usize, Expr)> {
        let mut out = Vec::new();
        for (alpha, row) in self.gamma.iter().enumerate() {
            for (a, g) in row.iter().enumerate() {
                for b in 0..self.k() {
                    let gb = g.dy(b);
                    for c in b..self.k() {
                        out.push((alpha, a, gb.dy(c)));
                    }
                }
            }
        }
        out
    }

    /// True when every second fibre derivative of `Γ` folds to zero or
    /// vanishes at every sample point.
    pub fn is_affine(&self, sampler: &SampleBox) -> Result<bool, Error> {
        for (_, _, d2) in self.second_fibre_derivatives() {
            if !is_zero(&d2, sampler, &Env::new())? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `Γ_{a0} = Γ|_{y=0}`, `Γ_{aβ} = ∂Γ/∂y^β` (which is then fibre-independent).
    ///
    /// Fails with [`Error::NotAffine`] naming the first offending
    /// coefficient and the sample point of its largest second derivative.
    pub fn affine_split(&self, sampler: &SampleBox) -> Result<AffineSplit, Error> {
        let points = sampler.points(&Env::new());
        for (alpha, a, d2) in self.second_fibre_derivatives() {
            if is_zero(&d2, sampler, &Env::new())? {
                continue;
            }
            let worst = sweep([&d2], &points)?;
            return Err(Error::NotAffine { alpha, a, witness: worst.witness.unwrap_or_default() });
        }
        Ok(self.candidate_split())
    }

    /// The split `(Γ|_{y=0}, ∂Γ/∂y|_{y=0})` without any affineness check. For
    /// an affine connection this is its affine split; otherwise it is the
    /// linearisation at the zero of the fibre chart.
    pub fn candidate_split(&self) -> AffineSplit {
        let at_origin = |e: &Expr| (0..self.k()).fold(e.clone(), |acc, b| acc.substitute(&Var::Y(b), &Expr::zero()));
        let gamma0 = self.gamma.iter().map(|row| row.iter().map(at_origin).collect()).collect();
        let gamma1 = self
            .gamma
            .iter()
            .map(|row| row.iter().map(|g| (0..self.k()).map(|b| at_origin(&g.dy(b))).collect()).collect())
            .collect();
        AffineSplit { gamma0, gamma1 }
    }

    /// `(∇_s σ)^α = (ρ^i_a ∂σ^α/∂x^i + Γ^α_{a0} + Γ^α_{aβ} σ^β) s^a`.
    pub fn nabla(&self, split: &AffineSplit, s: &[Expr], sigma: &[Expr]) -> Vec<Expr> {
        self.covariant(split, s, sigma, true)
    }

    /// `(∇̄_s σ̄)^α = (ρ^i_a ∂σ̄^α/∂x^i + Γ^α_{aβ} σ̄^β) s^a`.
    pub fn nabla_bar(&self, split: &AffineSplit, s: &[Expr], sigma: &[Expr]) -> Vec<Expr> {
        self.covariant(split, s, sigma, false)
    }

    fn covariant(&self, split: &AffineSplit, s: &[Expr], sigma: &[Expr], affine_part: bool) -> Vec<Expr> {
        let rho_s = self.anchor.image(s);
        (0..self.k())
            .map(|alpha| {
                let derivative = Expr::sum(rho_s.iter().enumerate().map(|(i, r)| Expr::mul(r.clone(), sigma[alpha].dx(i))));
                let coefficients = s.iter().enumerate().map(|(a, sa)| {
                    let linear =
                        Expr::sum(sigma.iter().enumerate().map(|(b, sb)| Expr::mul(split.gamma1[alpha][a][b].clone(), sb.clone())));
                    let c = if affine_part { Expr::add(split.gamma0[alpha][a].clone(), linear) } else { linear };
                    Expr::mul(c, sa.clone())
                });
                Expr::add(derivative, Expr::sum(coefficients))
            })
            .collect()
    }

    /// `[h s, v X]` as a vector field on `E`.
    pub fn bracket_hv(&self, s: &[Expr], x: &TildeSection) -> VectorField {
        self.horizontal_field(s).bracket(&vertical_field(self.n(), x))
    }

    /// `∇̃_s X = [h s, v X]_v + ρ(s)(X^0) 𝓘` for a basic section `X` of `π̃`.
    pub fn nabla_tilde(&self, s: &[Expr], x: &TildeSection) -> TildeSection {
        let b = self.bracket_hv(s, x).y;
        let g = VectorField::new(self.anchor.image(s), vec![Expr::zero(); self.k()]).apply(&x.x0);
        let xa = b.into_iter().enumerate().map(|(a, ba)| Expr::add(ba, Expr::mul(g.clone(), Expr::y(a)))).collect();
        TildeSection { x0: g, xa }
    }

    /// Checks that `[hs, vσ]` and `[hs, vσ̄]` are vertical and that their
    /// vertical parts are `∇_s σ` and `∇̄_s σ̄`.
    pub fn verify_prop5(
        &self,
        s: &[Expr],
        sigma: &[Expr],
        sigma_bar: &[Expr],
        sampler: &SampleBox,
        tol: f64,
    ) -> Result<Verification, Error> {
        let split = self.affine_split(sampler)?;
        let points = sampler.points(&Env::new());
        let b_sigma = self.bracket_hv(s, &TildeSection::from_e(sigma));
        let b_bar = self.bracket_hv(s, &TildeSection::from_ebar(sigma_bar));
        let nabla = self.nabla(&split, s, sigma);
        let nabla_bar = self.nabla_bar(&split, s, sigma_bar);
        let diff = |a: &[Expr], b: &[Expr]| -> Vec<Expr> {
            a.iter().zip(b).map(|(p, q)| Expr::sub(p.clone(), q.clone())).collect()
        };
        let mut out = Verification::new();
        out.push(sweep(b_sigma.x.iter().chain(&b_bar.x), &points)?.at_most("bracket_verticality", tol));
        out.push(sweep(&diff(&nabla, &b_sigma.y), &points)?.at_most("nabla_vs_bracket", tol));
        out.push(sweep(&diff(&nabla_bar, &b_bar.y), &points)?.at_most("nabla_bar_vs_bracket", tol));
        Ok(out)
    }

    /// Checks `h(e, s(π e)) = Tσ(ρ(s)) − [hs, vσ](e)` at `e = σ(x)` and its
    /// `Ē` analogue with the linear connection and `σ̄`.
    pub fn verify_hish(
        &self,
        s: &[Expr],
        sigma: &[Expr],
        sigma_bar: &[Expr],
        base: &SampleBox,
        fibre: &SampleBox,
        tol: f64,
    ) -> Result<Verification, Error> {
        let split = self.affine_split(fibre)?;
        let linear = Connection {
            chart: self.chart,
            anchor: self.anchor.clone(),
            gamma: split
                .gamma1
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|g1| Expr::sum(g1.iter().enumerate().map(|(b, c)| Expr::mul(c.clone(), Expr::y(b)))))
                        .collect()
                })
                .collect(),
        };
        let mut out = Verification::new();
        for (label, conn, section, x0) in
            [("hish", self, sigma, Expr::one()), ("ovhisovh", &linear, sigma_bar, Expr::zero())]
        {
            let x = TildeSection::new(x0, section.to_vec());
            let bracket = self.bracket_hv(s, &x);
            let rho_s = self.anchor.image(s);
            let tangent_sigma: Vec<Expr> = section
                .iter()
                .map(|c| Expr::sum(rho_s.iter().enumerate().map(|(i, r)| Expr::mul(r.clone(), c.dx(i)))))
                .collect();
            let h = conn.horizontal_field(s);
            let mut worst = crate::verify::MaxTracker::new();
            for env_x in base.points(&Env::new()) {
                let y: Vec<f64> = section.iter().map(|c| c.eval(&env_x)).collect::<Result<_, _>>().map_err(|source| {
                    SampleError { source, point: env_x.bindings() }
                })?;
                let env = Env::at(env_x.x(), &y);
                let located = |source| SampleError { source, point: env.bindings() };
                for i in 0..self.n() {
                    let lhs = h.x[i].eval(&env).map_err(located)?;
                    let rhs = rho_s[i].eval(&env).map_err(located)? - bracket.x[i].eval(&env).map_err(located)?;
                    worst.observe(lhs - rhs, &env);
                }
                for a in 0..self.k() {
                    let lhs = h.y[a].eval(&env).map_err(located)?;
                    let rhs = tangent_sigma[a].eval(&env).map_err(located)? - bracket.y[a].eval(&env).map_err(located)?;
                    worst.observe(lhs - rhs, &env);
                }
            }
            out.push(worst.at_most(label, tol));
        }
        Ok(out)
    }
}

/// Residual of `Γ − reassemble(split)` over the sample box.
pub fn split_residual(conn: &Connection, split: &AffineSplit, sampler: &SampleBox) -> Result<Residual, Error> {
    let diffs: Vec<Expr> = conn
        .gamma
        .iter()
        .flatten()
        .zip(split.reassemble().iter().flatten())
        .map(|(a, b)| Expr::sub(a.clone(), b.clone()))
        .collect();
    Ok(sweep(&diffs, &sampler.points(&Env::new()))?.at_most("affine_split_reassembly", crate::sample::ZERO_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn one_dim(gamma: &str) -> Connection {
        Connection::new(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1), vec![vec![p(gamma)]]).unwrap()
    }

    fn sampler() -> SampleBox {
        SampleBox::chart(1, 1, -1.0, 1.0, 64, 7)
    }

    #[test]
    fn h_apply_examples() {
        let flat = Connection::flat(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1));
        let e = EPoint::new(vec![0.2], vec![0.7]);
        assert_eq!(flat.h_apply(&e, &[2.0]).unwrap(), Tangent { xdot: vec![2.0], ydot: vec![0.0] });
        let conn = one_dim("y1");
        let e = EPoint::new(vec![0.0], vec![2.0]);
        assert_eq!(conn.h_apply(&e, &[0.0]).unwrap(), Tangent { xdot: vec![0.0], ydot: vec![0.0] });
        assert_eq!(conn.h_apply(&e, &[3.0]).unwrap(), Tangent { xdot: vec![3.0], ydot: vec![-6.0] });
    }

    #[test]
    fn horizontal_basis_examples() {
        let conn = one_dim("y1");
        let basis = conn.horizontal_basis();
        assert_eq!(basis[0].z, vec![Expr::one()]);
        assert_eq!(basis[0].v, vec![p("-y1")]);
        let flat = Connection::flat(ChartSpec::new(2, 1, 2), AnchorSpec::identity(2));
        for (a, h) in flat.horizontal_basis().iter().enumerate() {
            assert_eq!(h, &ProlongedSection::x_basis(2, 1, a));
        }
    }

    #[test]
    fn connection_map_examples() {
        let conn = one_dim("y1");
        let e = EPoint::new(vec![0.0], vec![2.0]);
        let q = Tangent { xdot: vec![1.0], ydot: vec![0.0] };
        assert_eq!(conn.connection_map_k(&e, &[1.0], &q).unwrap(), vec![2.0]);
        let h = conn.h_apply(&e, &[1.5]).unwrap();
        assert_eq!(conn.connection_map_k(&e, &[1.5], &h).unwrap(), vec![0.0]);
        let vertical = Tangent { xdot: vec![0.0], ydot: vec![4.5] };
        assert_eq!(conn.connection_map_k(&e, &[0.0], &vertical).unwrap(), vec![4.5]);
        assert!(matches!(conn.connection_map_k(&e, &[2.0], &q), Err(Error::NotInProlongation { .. })));
    }

    #[test]
    fn affineness_examples() {
        let conn = one_dim("3 + 2*y1");
        assert!(conn.is_affine(&sampler()).unwrap());
        let split = conn.affine_split(&sampler()).unwrap();
        assert_eq!(split.gamma0[0][0].as_const(), Some(3.0));
        assert_eq!(split.gamma1[0][0][0].as_const(), Some(2.0));

        let conn = one_dim("y1^2");
        assert!(!conn.is_affine(&sampler()).unwrap());
        match conn.affine_split(&sampler()) {
            Err(Error::NotAffine { alpha: 0, a: 0, witness }) => assert!(witness.contains_key("y1")),
            other => panic!("expected NotAffine, got {other:?}"),
        }

        let flat = Connection::flat(ChartSpec::new(1, 2, 1), AnchorSpec::identity(1));
        let split = flat.affine_split(&SampleBox::chart(1, 2, -1.0, 1.0, 16, 0)).unwrap();
        assert!(split.gamma0.iter().flatten().all(Expr::is_structural_zero));
        assert!(split.gamma1.iter().flatten().flatten().all(Expr::is_structural_zero));
    }

    #[test]
    fn nabla_examples() {
        let conn = one_dim("y1");
        let split = conn.affine_split(&sampler()).unwrap();
        let n = conn.nabla(&split, &[Expr::one()], &[p("x1")]);
        for x in [-0.5, 0.0, 1.3] {
            let env = Env::at(&[x], &[]);
            assert_eq!(n[0].eval(&env).unwrap(), 1.0 + x);
        }
        assert!(conn.nabla_bar(&split, &[p("x1")], &[Expr::zero()])[0].is_structural_zero());
    }

    #[test]
    fn nabla_tilde_examples() {
        let flat = Connection::flat(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1));
        // X = x1·σ with σ¹ = 0: the bracket gives −y1·ē_1, plus 1·𝓘 leaves e_0
        let x = TildeSection::new(p("x1"), vec![Expr::zero()]);
        let out = flat.nabla_tilde(&[Expr::one()], &x);
        for (xv, yv) in [(0.3, -0.2), (1.0, 2.0)] {
            let env = Env::at(&[xv], &[yv]);
            assert_eq!(out.x0.eval(&env).unwrap(), 1.0);
            assert_eq!(out.xa[0].eval(&env).unwrap(), 0.0);
        }
        let conn = one_dim("x1 + 2*y1");
        let split = conn.affine_split(&sampler()).unwrap();
        let s = [p("cos(x1)")];
        let sigma = [p("sin(x1)")];
        let out = conn.nabla_tilde(&s, &TildeSection::from_e(&sigma));
        let nabla = conn.nabla(&split, &s, &sigma);
        let out_bar = conn.nabla_tilde(&s, &TildeSection::from_ebar(&sigma));
        let nabla_bar = conn.nabla_bar(&split, &s, &sigma);
        for env in sampler().points(&Env::new()) {
            assert_eq!(out.x0.eval(&env).unwrap(), 0.0);
            assert!((out.xa[0].eval(&env).unwrap() - nabla[0].eval(&env).unwrap()).abs() < 1e-13);
            assert!((out_bar.xa[0].eval(&env).unwrap() - nabla_bar[0].eval(&env).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn prop5_examples() {
        let conn = one_dim("x1 + 2*y1");
        let r = conn.verify_prop5(&[Expr::one()], &[p("sin(x1)")], &[p("x1^2")], &sampler(), 1e-12).unwrap();
        assert!(r.passed(), "{r:?}");
        let conn = one_dim("y1^2");
        assert!(matches!(
            conn.verify_prop5(&[Expr::one()], &[p("sin(x1)")], &[p("x1")], &sampler(), 1e-12),
            Err(Error::NotAffine { .. })
        ));
    }

    #[test]
    fn hish_reconstruction() {
        let conn = Connection::new(
            ChartSpec::new(2, 2, 2),
            AnchorSpec::new(vec![vec![p("1"), p("x2")], vec![p("0"), p("cos(x1)")]]),
            vec![vec![p("x1*y2"), p("1 + y1")], vec![p("sin(x2)"), p("x1*x2*y1 - y2")]],
        )
        .unwrap();
        let base = SampleBox::base(2, -1.0, 1.0, 32, 1);
        let fibre = SampleBox::chart(2, 2, -1.0, 1.0, 32, 1);
        let r = conn
            .verify_hish(&[p("x2"), p("1")], &[p("x1^2"), p("exp(x2)")], &[p("x2"), p("sin(x1)")], &base, &fibre, 1e-10)
            .unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn adapted_round_trip() {
        let conn = one_dim("x1*y1");
        let z = AdaptedSection::new(vec![p("y1")], vec![p("x1")]);
        let back = conn.to_adapted(&conn.to_coordinates(&z));
        for env in sampler().points(&Env::new()) {
            assert!((back.w[0].eval(&env).unwrap() - z.w[0].eval(&env).unwrap()).abs() < 1e-15);
        }
    }
}
