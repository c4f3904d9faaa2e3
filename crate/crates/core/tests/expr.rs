use proptest::prelude::*;
use rhoconn::expr::RandomExpr;
use rhoconn::sample::{is_zero, SampleBox};
use rhoconn::{parse, Env, Expr, ExprError, Var};

fn vars() -> Vec<Var> {
    vec![Var::X(0), Var::X(1), Var::Y(0), Var::Y(1)]
}

fn points(seed: u64, count: usize) -> Vec<Env> {
    SampleBox::chart(2, 2, -1.0, 1.0, count, seed).points(&Env::new())
}

fn central_difference(e: &Expr, var: &Var, env: &Env, h: f64) -> f64 {
    let base = env.get(var).unwrap();
    let (mut plus, mut minus) = (env.clone(), env.clone());
    plus.set(var, base + h);
    minus.set(var, base - h);
    (e.eval(&plus).unwrap() - e.eval(&minus).unwrap()) / (2.0 * h)
}

#[test]
fn grammar_examples() {
    assert_eq!(parse("y1^2 + 3*x1").unwrap(), Expr::add(Expr::pow(Expr::y(0), 2.0), Expr::mul(Expr::num(3.0), Expr::x(0))));
    assert_eq!(parse("exp(-x1*y1)").unwrap(), Expr::exp(Expr::neg(Expr::mul(Expr::x(0), Expr::y(0)))));
    match parse("sin(") {
        Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse("tan(x1)"), Err(ExprError::UnknownFunction { .. })));
    assert!(matches!(parse("z1 + 1"), Err(ExprError::UnknownVariable { .. })));
}

#[test]
fn evaluation_examples() {
    let env = Env::at(&[1.0], &[2.0]);
    assert_eq!(parse("y1^2+3*x1").unwrap().eval(&env).unwrap(), 7.0);
    assert_eq!(parse("exp(0)").unwrap().eval(&Env::new()).unwrap(), 1.0);
    assert!(matches!(parse("x1/x1").unwrap().eval(&Env::at(&[0.0], &[])), Err(ExprError::Domain(_))));
    assert!(matches!(parse("log(x1 - 1)").unwrap().eval(&env), Err(ExprError::Domain(_))));
    assert!(matches!(parse("y2").unwrap().eval(&env), Err(ExprError::Unbound(_))));
}

#[test]
fn derivative_examples() {
    assert_eq!(parse("y1^2").unwrap().dy(0), parse("2*y1").unwrap());
    assert!(parse("3*x1").unwrap().dy(0).is_structural_zero());
    let e = parse("exp(-x1*y1)").unwrap();
    let d = e.dx(0);
    let expected = parse("-y1*exp(-x1*y1)").unwrap();
    for env in points(7, 10) {
        let (a, b) = (d.eval(&env).unwrap(), expected.eval(&env).unwrap());
        assert!((a - b).abs() <= 1e-14);
        assert!((a - central_difference(&e, &Var::X(0), &env, 1e-5)).abs() <= 1e-6 * (1.0 + a.abs()));
    }
}

#[test]
fn zero_test_examples() {
    let b = SampleBox::chart(1, 1, -1.0, 1.0, 32, 0);
    assert!(is_zero(&parse("y1 - y1").unwrap(), &b, &Env::new()).unwrap());
    assert!(!is_zero(&parse("y1^2").unwrap(), &b, &Env::new()).unwrap());
    assert!(is_zero(&parse("sin(x1)^2+cos(x1)^2-1").unwrap(), &b, &Env::new()).unwrap());
    assert!(is_zero(&parse("1/y1").unwrap(), &b, &Env::new()).is_ok());
    let singular = SampleBox::new(vec![(Var::X(0), -1.0, 0.0)], 8, 0);
    assert!(is_zero(&parse("log(x1) - log(x1)").unwrap(), &singular, &Env::new()).is_ok());
    assert!(is_zero(&parse("log(x1)").unwrap(), &singular, &Env::new()).is_err());
}

#[test]
fn derivative_matches_central_difference_on_random_trees() {
    let mut g = RandomExpr::seeded(2024).with_vars(vars());
    let pts = points(3, 10);
    for _ in 0..100 {
        let e = g.smooth(3);
        for var in vars() {
            let d = e.diff(&var);
            for env in &pts {
                let exact = d.eval(env).unwrap();
                let approx = central_difference(&e, &var, env, 1e-5);
                assert!((exact - approx).abs() <= 1e-6 * (1.0 + exact.abs()), "{e} d/{var}: {exact} vs {approx}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differentiation_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, which in 0usize..4) {
        let mut g = RandomExpr::seeded(seed).with_vars(vars());
        let (f, h) = (g.smooth(3), g.smooth(3));
        let var = &vars()[which];
        let lhs = Expr::add(Expr::mul(Expr::num(a), f.clone()), Expr::mul(Expr::num(b), h.clone())).diff(var);
        let rhs = Expr::add(Expr::mul(Expr::num(a), f.diff(var)), Expr::mul(Expr::num(b), h.diff(var)));
        for env in points(seed, 10) {
            prop_assert!((lhs.eval(&env).unwrap() - rhs.eval(&env).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn mixed_partials_commute(seed in any::<u64>()) {
        let mut g = RandomExpr::seeded(seed).with_vars(vars());
        let f = g.smooth(3);
        let (d12, d21) = (f.dy(0).dy(1), f.dy(1).dy(0));
        let (dxy, dyx) = (f.dx(0).dy(1), f.dy(1).dx(0));
        for env in points(seed, 10) {
            prop_assert!((d12.eval(&env).unwrap() - d21.eval(&env).unwrap()).abs() <= 1e-9);
            prop_assert!((dxy.eval(&env).unwrap() - dyx.eval(&env).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let mut g = RandomExpr::seeded(seed).with_vars(vars());
        let e = g.raw_tree(5);
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(&back, &e, "printed as {}", printed);
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>()) {
        let mut g = RandomExpr::seeded(seed).with_vars(vars());
        let e = g.smooth(4);
        for env in points(seed, 4) {
            prop_assert_eq!(e.eval(&env).unwrap().to_bits(), e.clone().eval(&env).unwrap().to_bits());
        }
    }
}
