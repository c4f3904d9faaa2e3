use proptest::prelude::*;
use rhoconn::berwald::{berwald_transport, covariant_d, verify_prop6_prop7, Variant};
use rhoconn::bundle::{AdmissibleCurve, AnchorSpec, ChartSpec, EPoint, TildeSection};
use rhoconn::connection::AdaptedSection;
use rhoconn::expr::RandomExpr;
use rhoconn::sample::SampleBox;
use rhoconn::transport::{parallel_translate, TransportConfig};
use rhoconn::{parse, Connection, Env, Expr, Var};

fn p(s: &str) -> Expr {
    parse(s).unwrap()
}

fn two_dim() -> Connection {
    Connection::new(
        ChartSpec::new(2, 2, 2),
        AnchorSpec::new(vec![vec![p("1"), p("x2")], vec![p("0"), p("cos(x1)")]]),
        vec![vec![p("x1*y2^2"), p("1 + y1*y2")], vec![p("sin(x2)*y1"), p("exp(-y1) - y2")]],
    )
    .unwrap()
}

fn points() -> Vec<Env> {
    SampleBox::chart(2, 2, -1.0, 1.0, 24, 11).points(&Env::new())
}

fn max_diff(a: &TildeSection, b: &TildeSection) -> f64 {
    let mut worst = 0.0f64;
    for env in points() {
        for (x, y) in a.components().zip(b.components()) {
            worst = worst.max((x.eval(&env).unwrap() - y.eval(&env).unwrap()).abs());
        }
    }
    worst
}

fn gen(seed: u64) -> RandomExpr {
    RandomExpr::seeded(seed).with_vars(vec![Var::X(0), Var::X(1), Var::Y(0), Var::Y(1)])
}

fn random_section(g: &mut RandomExpr) -> TildeSection {
    TildeSection::new(g.smooth(2), vec![g.smooth(2), g.smooth(2)])
}

fn random_adapted(g: &mut RandomExpr) -> AdaptedSection {
    AdaptedSection::new(vec![g.smooth(2), g.smooth(2)], vec![g.smooth(2), g.smooth(2)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variants_agree_on_horizontal(seed in any::<u64>()) {
        let mut g = gen(seed);
        let conn = two_dim();
        let z = AdaptedSection::new(vec![g.smooth(2), g.smooth(2)], vec![Expr::zero(), Expr::zero()]);
        let x = random_section(&mut g);
        let diff = max_diff(&covariant_d(&conn, Variant::Plain, &z, &x), &covariant_d(&conn, Variant::Hat, &z, &x));
        prop_assert_eq!(diff, 0.0);
    }

    #[test]
    fn e0_component_is_anchor_derivative(seed in any::<u64>()) {
        let mut g = gen(seed);
        let conn = two_dim();
        let z = random_adapted(&mut g);
        let x = random_section(&mut g);
        let expected = conn.anchor_field(&z).apply(&x.x0);
        for variant in [Variant::Plain, Variant::Hat] {
            let d = covariant_d(&conn, variant, &z, &x);
            for env in points() {
                prop_assert!((d.x0.eval(&env).unwrap() - expected.eval(&env).unwrap()).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn function_linear_in_z(seed in any::<u64>()) {
        let mut g = gen(seed);
        let conn = two_dim();
        let (z1, z2) = (random_adapted(&mut g), random_adapted(&mut g));
        let f = g.smooth(2);
        let x = random_section(&mut g);
        for variant in [Variant::Plain, Variant::Hat] {
            let lhs = covariant_d(&conn, variant, &z1.scale(&f).plus(&z2), &x);
            let rhs = covariant_d(&conn, variant, &z1, &x).scale(&f).plus(&covariant_d(&conn, variant, &z2, &x));
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-9);
        }
    }

    #[test]
    fn derivation_in_x(seed in any::<u64>()) {
        let mut g = gen(seed);
        let conn = two_dim();
        let z = random_adapted(&mut g);
        let f = g.smooth(2);
        let (x1, x2) = (random_section(&mut g), random_section(&mut g));
        let zf = conn.anchor_field(&z).apply(&f);
        for variant in [Variant::Plain, Variant::Hat] {
            let lhs = covariant_d(&conn, variant, &z, &x1.scale(&f).plus(&x2));
            let rhs = x1
                .scale(&zf)
                .plus(&covariant_d(&conn, variant, &z, &x1).scale(&f))
                .plus(&covariant_d(&conn, variant, &z, &x2));
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-9);
        }
    }
}

#[test]
fn affine_parallel_transport_reproduces_translation() {
    let conn = Connection::new(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1), vec![vec![p("cos(x1) + x1*y1")]]).unwrap();
    let cfg = TransportConfig::default();
    let e = EPoint::new(vec![0.0], vec![0.3]);
    let w0 = -0.8;
    let hs = AdaptedSection::new(vec![Expr::one()], vec![Expr::zero()]);
    for variant in [Variant::Plain, Variant::Hat] {
        let bt = berwald_transport(&conn, variant, &hs, &e, 1.0, &[w0], 1.0, &cfg).unwrap();
        let c = AdmissibleCurve::new(vec![p("u")], vec![p("1")], (0.0, 1.0));
        let translated = parallel_translate(&conn, &c, &EPoint::new(vec![0.0], vec![w0]), 1.0, &cfg).unwrap();
        assert!((bt.xa.last().unwrap()[0] - translated.y[0]).abs() <= 1e-8);
    }
}

#[test]
fn prop6_prop7_three_connections() {
    let cfg = TransportConfig::default();
    let cases: Vec<(Connection, Vec<Expr>, Vec<Expr>, EPoint)> = vec![
        (
            Connection::flat(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1)),
            vec![Expr::one()],
            vec![p("1")],
            EPoint::new(vec![0.0], vec![0.5]),
        ),
        (
            Connection::new(ChartSpec::new(1, 1, 1), AnchorSpec::identity(1), vec![vec![p("y1^2")]]).unwrap(),
            vec![Expr::one()],
            vec![p("y1 + x1")],
            EPoint::new(vec![0.0], vec![1.0]),
        ),
        (two_dim(), vec![p("1"), p("x1")], vec![p("y2"), p("1 - x1*y1")], EPoint::new(vec![0.1, -0.2], vec![0.3, 0.4])),
    ];
    for (conn, s, ybar, e) in cases {
        let k = conn.k();
        let sections: Vec<Vec<Expr>> = vec![vec![p("0.5"); k], (0..k).map(|i| Expr::sin(Expr::x(i % conn.n()))).collect()];
        let sampler = SampleBox::chart(conn.n(), k, -1.0, 1.0, 32, 2);
        let r = verify_prop6_prop7(&conn, &s, &ybar, &sections, &e, 1.0, &cfg, &sampler, 1e-12).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
