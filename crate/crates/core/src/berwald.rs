//! The Berwald-type connections `(D, D̄)` and `(D̂, D̂̄)` induced by a ρ-connection.
//!
//! Both are given by coefficient tables on the adapted basis `{𝓗_a, 𝓥_α}`:
//!
//! - `D_{𝓗_a} e_0 = (Γ^γ_a − y^β ∂Γ^γ_a/∂y^β) ē_γ`
//! - `D̄_{𝓗_a} ē_β = ∂Γ^γ_a/∂y^β ē_γ`
//! - `D̄_{𝓥_α} ē_β = 0`
//! - `D_{𝓥_α} e_0 = 0` (plain) or `−ē_α` (hat)
//!
//! and extended to all of `π*π̃` by the Leibniz rule with the anchor field
//! `ρ¹(Z)`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::bundle::{EPoint, TildeSection};
use crate::connection::{AdaptedSection, Connection};
use crate::expr::{Env, Expr};
use crate::sample::SampleBox;
use crate::transport::{lie_transport, rk4, DiscreteCurve, TransportConfig};
use crate::verify::{sweep, MaxTracker, Residual, Verification};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Hat,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Hat => "hat",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BerwaldTable {
    pub variant: Variant,
    /// `d_h_e0[γ][a]`: component `γ` of `D_{𝓗_a} e_0`.
    pub d_h_e0: Vec<Vec<Expr>>,
    /// `dbar_h_e[γ][a][β]`: component `γ` of `D̄_{𝓗_a} ē_β`.
    pub dbar_h_e: Vec<Vec<Vec<Expr>>>,
    /// `d_v_e0[γ][α]`: component `γ` of `D_{𝓥_α} e_0`.
    pub d_v_e0: Vec<Vec<Expr>>,
}

/// String form of a table for serialisation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableExport {
    pub variant: Variant,
    pub d_h_e0: Vec<Vec<String>>,
    pub dbar_h_e: Vec<Vec<Vec<String>>>,
    pub d_v_e0: Vec<Vec<String>>,
}

fn strings(rows: &[Vec<Expr>]) -> Vec<Vec<String>> {
    rows.iter().map(|r| r.iter().map(Expr::to_string).collect()).collect()
}

pub fn berwald_table(conn: &Connection, variant: Variant) -> BerwaldTable {
    let k = conn.k();
    let d_h_e0 = conn
        .gamma
        .iter()
        .map(|row| {
            row.iter()
                .map(|g| {
                    let euler = Expr::sum((0..k).map(|b| Expr::mul(Expr::y(b), g.dy(b))));
                    Expr::sub(g.clone(), euler)
                })
                .collect()
        })
        .collect();
    let dbar_h_e = conn.gamma.iter().map(|row| row.iter().map(|g| (0..k).map(|b| g.dy(b)).collect()).collect()).collect();
    let d_v_e0 = (0..k)
        .map(|gamma| {
            (0..k)
                .map(|alpha| match variant {
                    Variant::Hat if gamma == alpha => Expr::num(-1.0),
                    _ => Expr::zero(),
                })
                .collect()
        })
        .collect();
    BerwaldTable { variant, d_h_e0, dbar_h_e, d_v_e0 }
}

impl BerwaldTable {
    pub fn export(&self) -> TableExport {
        TableExport {
            variant: self.variant,
            d_h_e0: strings(&self.d_h_e0),
            dbar_h_e: self.dbar_h_e.iter().map(|r| strings(r)).collect(),
            d_v_e0: strings(&self.d_v_e0),
        }
    }

    /// Aligned text listing, one entry per line, indices one-based.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        for (g, row) in self.d_h_e0.iter().enumerate() {
            for (a, e) in row.iter().enumerate() {
                rows.push((format!("D(H_{}) e_0 [{}]", a + 1, g + 1), e.to_string()));
            }
        }
        for (g, row) in self.dbar_h_e.iter().enumerate() {
            for (a, cols) in row.iter().enumerate() {
                for (b, e) in cols.iter().enumerate() {
                    rows.push((format!("Dbar(H_{}) e_{} [{}]", a + 1, b + 1, g + 1), e.to_string()));
                }
            }
        }
        for (g, row) in self.d_v_e0.iter().enumerate() {
            for (a, e) in row.iter().enumerate() {
                rows.push((format!("D(V_{}) e_0 [{}]", a + 1, g + 1), e.to_string()));
            }
        }
        let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
        let mut out = format!("Berwald table ({})\n", self.variant.name());
        for (label, value) in rows {
            let pad = width - label.chars().count();
            writeln!(out, "  {label}{}  {value}", " ".repeat(pad)).unwrap();
        }
        out
    }

    /// `(D_Z e_0)^γ` for an adapted section `Z = z^a 𝓗_a + w^α 𝓥_α`.
    pub fn d_e0(&self, z: &AdaptedSection) -> Vec<Expr> {
        self.d_h_e0
            .iter()
            .zip(&self.d_v_e0)
            .map(|(h_row, v_row)| {
                let h = h_row.iter().zip(&z.z).map(|(t, c)| Expr::mul(t.clone(), c.clone()));
                let v = v_row.iter().zip(&z.w).map(|(t, c)| Expr::mul(t.clone(), c.clone()));
                Expr::sum(h.chain(v))
            })
            .collect()
    }

    /// `(D̄_Z ē_β)^γ` as `[γ][β]`.
    pub fn dbar_e(&self, z: &AdaptedSection) -> Vec<Vec<Expr>> {
        self.dbar_h_e
            .iter()
            .map(|row| {
                let k = row.first().map_or(0, Vec::len);
                (0..k)
                    .map(|b| Expr::sum(row.iter().zip(&z.z).map(|(cols, c)| Expr::mul(cols[b].clone(), c.clone()))))
                    .collect()
            })
            .collect()
    }
}

/// `D_Z X = ρ¹(Z)(X^0) e_0 + X^0 D_Z e_0 + ρ¹(Z)(X^β) ē_β + X^β D̄_Z ē_β`.
pub fn covariant_d(conn: &Connection, variant: Variant, z: &AdaptedSection, x: &TildeSection) -> TildeSection {
    covariant_d_with(conn, &berwald_table(conn, variant), z, x)
}

/// [`covariant_d`] with a precomputed table.
pub fn covariant_d_with(conn: &Connection, table: &BerwaldTable, z: &AdaptedSection, x: &TildeSection) -> TildeSection {
    let field = conn.anchor_field(z);
    let de0 = table.d_e0(z);
    let dbar = table.dbar_e(z);
    let xa = (0..conn.k())
        .map(|g| {
            let terms = std::iter::once(Expr::mul(x.x0.clone(), de0[g].clone()))
                .chain(std::iter::once(field.apply(&x.xa[g])))
                .chain(x.xa.iter().zip(&dbar[g]).map(|(xb, d)| Expr::mul(xb.clone(), d.clone())));
            Expr::sum(terms)
        })
        .collect();
    TildeSection { x0: field.apply(&x.x0), xa }
}

/// For an affine connection the tables reproduce its split:
/// `D̄_{𝓗_a} ē_β = Γ_{aβ}` and `D_{𝓗_a} e_0 = Γ_{a0}`.
pub fn verify_affine_reproduction(conn: &Connection, sampler: &SampleBox, tol: f64) -> Result<Verification, Error> {
    let split = conn.affine_split(sampler)?;
    let table = berwald_table(conn, Variant::Plain);
    let points = sampler.points(&Env::new());
    let sub = |(a, b): (&Expr, &Expr)| Expr::sub(a.clone(), b.clone()).fold();
    let e0: Vec<Expr> = table.d_h_e0.iter().flatten().zip(split.gamma0.iter().flatten()).map(sub).collect();
    let lin: Vec<Expr> = table.dbar_h_e.iter().flatten().flatten().zip(split.gamma1.iter().flatten().flatten()).map(sub).collect();
    let mut out = Verification::new();
    for (label, diffs) in [("table_e0_vs_gamma0", e0), ("table_ebar_vs_gamma1", lin)] {
        let r = if diffs.iter().all(Expr::is_structural_zero) {
            Residual::at_most(label, 0.0, tol, None)
        } else {
            sweep(&diffs, &points)?.at_most(label, tol)
        };
        out.push(r);
    }
    Ok(out)
}

/// Parallel transport for `D` along the integral curve of `ρ¹(Z)` from `e`.
///
/// `X^0` is constant; the `ē` components obey
/// `dX^γ/du = −X^0 (D_Z e_0)^γ − X^β (D̄_Z ē_β)^γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BerwaldTransport {
    pub curve: DiscreteCurve,
    pub x0: f64,
    pub xa: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn berwald_transport(
    conn: &Connection,
    variant: Variant,
    z: &AdaptedSection,
    e: &EPoint,
    x0: f64,
    xa: &[f64],
    span: f64,
    cfg: &TransportConfig,
) -> Result<BerwaldTransport, Error> {
    let (n, k) = (conn.n(), conn.k());
    let table = berwald_table(conn, variant);
    let field = conn.anchor_field(z);
    let de0 = table.d_e0(z);
    let dbar = table.dbar_e(z);
    let (steps, h) = cfg.grid(0.0, span)?;
    let state0: Vec<f64> = e.x.iter().chain(&e.y).chain(xa).copied().collect();
    let states = rk4(
        |_, s| {
            let env = Env::at(&s[..n], &s[n..n + k]);
            let mut out = Vec::with_capacity(s.len());
            for c in field.x.iter().chain(&field.y) {
                out.push(c.eval(&env)?);
            }
            let x = &s[n + k..];
            for g in 0..k {
                let mut d = -x0 * de0[g].eval(&env)?;
                for (xb, t) in x.iter().zip(&dbar[g]) {
                    d -= xb * t.eval(&env)?;
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
    Ok(BerwaldTransport {
        curve: DiscreteCurve {
            u: (0..=steps).map(|j| j as f64 * h).collect(),
            x: states.iter().map(|s| s[..n].to_vec()).collect(),
            y: states.iter().map(|s| s[n..n + k].to_vec()).collect(),
        },
        x0,
        xa: states.iter().map(|s| s[n + k..].to_vec()).collect(),
    })
}

/// Transport characterisations of the two Berwald connections.
///
/// - `horizontal`: along the integral curve of `h(s)` through `e`, the
///   `D`-parallel transport of `ē_β`-valued data (`X^0 = 0`) and of points
///   (`X^0 = 1`, compared through `ϑ`) equals Lie transport of the initial
///   `ϑ`-part. Both variants are run.
/// - `vertical_plain`: basic sections (constant along vertical flows) are
///   `D`-parallel along `Ȳ^α 𝓥_α`.
/// - `vertical_hat`: `𝓘 + σ̄` for basic `σ̄` is `D̂`-parallel along `Ȳ^α 𝓥_α`.
#[allow(clippy::too_many_arguments)]
pub fn verify_prop6_prop7(
    conn: &Connection,
    s: &[Expr],
    ybar: &[Expr],
    sections: &[Vec<Expr>],
    e: &EPoint,
    span: f64,
    cfg: &TransportConfig,
    sampler: &SampleBox,
    symbolic_tol: f64,
) -> Result<Verification, Error> {
    let (l, k) = (conn.l(), conn.k());
    let mut out = Verification::new();

    let hs = AdaptedSection::new(s.to_vec(), vec![Expr::zero(); k]);
    let mut horizontal = MaxTracker::new();
    let base_env = Env::new().with_x(e.x.clone());
    for section in sections {
        let at_base: Vec<f64> = section.iter().map(|c| c.eval(&base_env)).collect::<Result<_, _>>()?;
        for variant in [Variant::Plain, Variant::Hat] {
            for x0 in [0.0, 1.0] {
                let theta0: Vec<f64> = at_base.iter().zip(&e.y).map(|(w, y)| w - x0 * y).collect();
                let lie = lie_transport(conn, s, e, &theta0, span, cfg)?;
                let bt = berwald_transport(conn, variant, &hs, e, x0, &at_base, span, cfg)?;
                let end_y = bt.curve.y.last().cloned().unwrap_or_default();
                let end_x = bt.xa.last().cloned().unwrap_or_default();
                for g in 0..k {
                    let theta = end_x[g] - x0 * end_y[g];
                    horizontal.observe_point(theta - lie[g], || {
                        let mut p = crate::verify::Point::new();
                        p.insert("u".into(), span);
                        p.insert("X0".into(), x0);
                        p
                    });
                }
            }
        }
    }
    out.push(horizontal.at_most("horizontal_vs_lie", cfg.tol_report));

    let points = sampler.points(&Env::new());
    let vz = AdaptedSection::new(vec![Expr::zero(); l], ybar.to_vec());
    let plain = berwald_table(conn, Variant::Plain);
    let hat = berwald_table(conn, Variant::Hat);
    let mut plain_exprs = Vec::new();
    let mut hat_exprs = Vec::new();
    for section in sections {
        let d = covariant_d_with(conn, &plain, &vz, &TildeSection::from_e(section));
        plain_exprs.extend(d.components().cloned());
        let d = covariant_d_with(conn, &plain, &vz, &TildeSection::from_ebar(section));
        plain_exprs.extend(d.components().cloned());
        let translated = TildeSection::canonical(k).plus(&TildeSection::from_ebar(section));
        let d = covariant_d_with(conn, &hat, &vz, &translated);
        hat_exprs.extend(d.components().cloned());
    }
    out.push(sweep(&plain_exprs, &points)?.at_most("vertical_plain", symbolic_tol));
    out.push(sweep(&hat_exprs, &points)?.at_most("vertical_hat", symbolic_tol));
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

    fn sampler() -> SampleBox {
        SampleBox::chart(1, 1, -1.0, 1.0, 32, 5)
    }

    fn assert_zero_on_box(e: &Expr) {
        for env in sampler().points(&Env::new()) {
            assert!(e.eval(&env).unwrap().abs() < 1e-13, "{e}");
        }
    }

    #[test]
    fn table_examples() {
        let t = berwald_table(&one_dim("3 + 2*y1"), Variant::Plain);
        assert_zero_on_box(&Expr::sub(t.d_h_e0[0][0].clone(), p("3")));
        assert_eq!(t.dbar_h_e[0][0][0].as_const(), Some(2.0));

        let t = berwald_table(&one_dim("y1^2"), Variant::Plain);
        assert_zero_on_box(&Expr::add(t.d_h_e0[0][0].clone(), p("y1^2")));
        assert_zero_on_box(&Expr::sub(t.dbar_h_e[0][0][0].clone(), p("2*y1")));

        let flat = Connection::flat(ChartSpec::new(1, 2, 2), AnchorSpec::zero(1, 2));
        for variant in [Variant::Plain, Variant::Hat] {
            let t = berwald_table(&flat, variant);
            assert!(t.d_h_e0.iter().flatten().all(Expr::is_structural_zero));
            assert!(t.dbar_h_e.iter().flatten().flatten().all(Expr::is_structural_zero));
        }
        let hat = berwald_table(&flat, Variant::Hat);
        assert_eq!(hat.d_v_e0[1][1].as_const(), Some(-1.0));
        assert!(hat.d_v_e0[0][1].is_structural_zero());
    }

    #[test]
    fn vertical_examples() {
        let conn = one_dim("x1*y1^2");
        let v = AdaptedSection::vertical(1, 1, 0);
        let sigma = TildeSection::from_e(&[p("sin(x1)")]);
        let plain = covariant_d(&conn, Variant::Plain, &v, &sigma);
        assert!(plain.components().all(Expr::is_structural_zero));
        let hat = covariant_d(&conn, Variant::Hat, &v, &sigma);
        assert!(hat.x0.is_structural_zero());
        assert_eq!(hat.xa[0].as_const(), Some(-1.0));

        let i = TildeSection::canonical(1);
        let plain = covariant_d(&conn, Variant::Plain, &v, &i);
        assert_eq!(plain.xa[0].as_const(), Some(1.0));
        let hat = covariant_d(&conn, Variant::Hat, &v, &i);
        assert_zero_on_box(&hat.xa[0]);
    }

    #[test]
    fn horizontal_matches_bracket() {
        let conn = one_dim("y1^2 + x1*y1");
        let s = [p("cos(x1)")];
        let sigma = [p("x1^2 - 1")];
        let bracket = conn.bracket_hv(&s, &TildeSection::from_e(&sigma));
        for variant in [Variant::Plain, Variant::Hat] {
            let d = covariant_d(&conn, variant, &AdaptedSection::new(s.to_vec(), vec![Expr::zero()]), &TildeSection::from_e(&sigma));
            assert_zero_on_box(&d.x0);
            assert_zero_on_box(&Expr::sub(d.xa[0].clone(), bracket.y[0].clone()));
        }
    }

    #[test]
    fn affine_reproduction_examples() {
        for g in ["3 + 2*y1", "0", "x1*y1"] {
            let r = verify_affine_reproduction(&one_dim(g), &sampler(), 1e-12).unwrap();
            assert!(r.passed(), "{g}: {r:?}");
        }
        assert!(matches!(verify_affine_reproduction(&one_dim("y1^3"), &sampler(), 1e-12), Err(Error::NotAffine { .. })));
    }

    #[test]
    fn text_export_is_aligned() {
        let t = berwald_table(&one_dim("3 + 2*y1"), Variant::Hat);
        let text = t.to_text();
        assert!(text.starts_with("Berwald table (hat)\n"));
        let cols: Vec<usize> = text.lines().skip(1).map(|l| l.rfind("  ").unwrap()).collect();
        assert!(cols.windows(2).all(|w| w[0] == w[1]), "{text}");
        assert_eq!(t.export().dbar_h_e[0][0][0], "2");
    }

    #[test]
    fn prop6_prop7_flat_and_quadratic() {
        let cfg = TransportConfig::default();
        let flat = Connection::flat(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1));
        let e = EPoint::new(vec![0.0], vec![1.0]);
        let r = verify_prop6_prop7(&flat, &[Expr::one()], &[Expr::one()], &[vec![p("2")]], &e, 1.0, &cfg, &sampler(), 1e-12)
            .unwrap();
        assert_eq!(r.max_residual(), 0.0);
        let r = verify_prop6_prop7(&one_dim("y1^2"), &[Expr::one()], &[p("1 + y1^2")], &[vec![p("0.5")]], &e, 1.0, &cfg, &sampler(), 1e-12)
            .unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
