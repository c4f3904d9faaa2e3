//! Executing the checks of a scenario.

use std::fmt;
use std::time::Instant;

use rhoconn::algebroid::{
    lagrangian_sode, regularity_residual, sode_connection, validate_algebroid, verify_direct_formulae,
    verify_euler_lagrange, verify_hvbrackets, verify_sode_suite, JacobiMode, LagrangianSode, PseudoSode,
};
use rhoconn::berwald::{verify_affine_reproduction, verify_prop6_prop7};
use rhoconn::bundle::{check_admissible, validate_chart, DEFAULT_ADMISSIBLE_NODES};
use rhoconn::sample::{SampleBox, ZERO_TOL};
use rhoconn::transport::{horizontal_lift_curve, verify_prop1, verify_prop4, DiscreteCurve, TransportConfig};
use rhoconn::verify::{sweep, Residual, Verification};
use rhoconn::{Connection, Env, Error, Expr, Var};

use crate::report::{CheckReport, Report, ResidualEntry, Settings, Status};
use crate::schema::{CheckKind, CheckSpec, Config, Scenario, Source};

/// Command-line overrides of the scenario's numeric configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub h_step: Option<f64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &Config) -> Config {
        let mut c = config.clone();
        if let Some(h) = self.h_step {
            c.h_step = h;
        }
        if let Some(n) = self.samples {
            c.samples = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionError {
    pub unknown: Vec<String>,
    pub available: Vec<String>,
}

impl fmt::Display for SelectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown check(s) {}; the scenario defines: {}", self.unknown.join(", "), self.available.join(", "))
    }
}

impl std::error::Error for SelectionError {}

/// Picks checks by name; `all` (or an empty list) selects every check.
pub fn select<'a>(scenario: &'a Scenario, names: &[String]) -> Result<Vec<&'a CheckSpec>, SelectionError> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(scenario.checks.iter().collect());
    }
    let unknown: Vec<String> = names.iter().filter(|n| !scenario.checks.iter().any(|c| &c.name == *n)).cloned().collect();
    if !unknown.is_empty() {
        return Err(SelectionError { unknown, available: scenario.checks.iter().map(|c| c.name.clone()).collect() });
    }
    Ok(scenario.checks.iter().filter(|c| names.contains(&c.name)).collect())
}

/// Default tolerance of each check kind.
pub fn default_tolerance(kind: &CheckKind, config: &Config) -> f64 {
    match kind {
        CheckKind::Chart => 0.0,
        CheckKind::Admissible { .. } => rhoconn::bundle::ADMISSIBLE_TOL,
        CheckKind::Algebroid { .. } | CheckKind::Affine => ZERO_TOL,
        CheckKind::Prop1 { .. } | CheckKind::Prop4 { .. } | CheckKind::Transport { .. } => config.tol_report,
        CheckKind::Prop5 { .. } | CheckKind::Hish { .. } | CheckKind::BerwaldTables | CheckKind::Prop6Prop7 { .. } => 1e-12,
        CheckKind::SodeSuite | CheckKind::HvBrackets => 1e-10,
        CheckKind::DirectFormulae => 1e-9,
        CheckKind::EulerLagrange { .. } => 1e-6,
        CheckKind::Regularity => rhoconn::algebroid::REGULARITY_LIMIT,
    }
}

pub fn exercises(kind: &CheckKind) -> &'static str {
    match kind {
        CheckKind::Chart => "chart dimensions; anchor depends on base coordinates only",
        CheckKind::Admissible { .. } => "admissibility: dc_M/du = rho(c)",
        CheckKind::Algebroid { .. } => "antisymmetry, anchor compatibility and Jacobi identity of the structure functions",
        CheckKind::Affine => "Gamma affine in the fibre coordinates: second fibre derivatives vanish",
        CheckKind::Prop1 { .. } => "parallel transport of an affine connection is affine with linear part the transport of its linear connection",
        CheckKind::Prop4 { .. } => "Lie transport along hs computed on E equals the suspended computation on c_M*E",
        CheckKind::Prop5 { .. } => "nabla_s sigma = [hs, v sigma]_v and nabla-bar_s sigma-bar = [hs, v sigma-bar]_v with vertical brackets",
        CheckKind::Hish { .. } => "h(e, s) = T sigma(rho s) - [hs, v sigma](e) at e = sigma(x), and its linear analogue",
        CheckKind::Transport { .. } => "horizontal lift dy/du = -Gamma(c_M(u), y) c(u)",
        CheckKind::BerwaldTables => "Berwald tables of an affine connection reproduce its affine split",
        CheckKind::Prop6Prop7 { .. } => "D-parallel transport along horizontal lifts is Lie transport; vertical transport is translation in pi*E (plain) and pi*Ebar (hat)",
        CheckKind::SodeSuite => "S^2 = 0, eigen-relations of d_Gamma S, projector P_H, Gamma_0 + y Gamma_beta + f = 0",
        CheckKind::HvBrackets => "brackets [H_a, V_alpha] and [H_a, H_b] in the adapted basis",
        CheckKind::DirectFormulae => "bracket formulae for D and D-hat agree with the coordinate tables",
        CheckKind::EulerLagrange { .. } => "integral curves of the Lagrangian pseudo-SODE satisfy the Euler-Lagrange equations",
        CheckKind::Regularity => "the fibre Hessian of L is invertible on the sample box",
    }
}

/// Objects shared by all checks of one run.
struct Sources {
    connection: Option<Result<Connection, String>>,
    sode: Option<Result<PseudoSode, String>>,
    lagrangian: Option<Result<LagrangianSode, Error>>,
}

impl Sources {
    fn build(scenario: &Scenario, sampler: &SampleBox) -> Self {
        let lagrangian = match (&scenario.algebroid, &scenario.lagrangian) {
            (Some(spec), Some(lag)) => Some(lagrangian_sode(spec, lag, sampler)),
            _ => None,
        };
        let sode = match (&scenario.pseudo_sode, &lagrangian) {
            (Some(f), _) => Some(Ok(f.clone())),
            (None, Some(l)) => Some(l.as_ref().map(|l| l.sode.clone()).map_err(|e| e.to_string())),
            (None, None) => None,
        };
        let from_sode = |f: Result<PseudoSode, String>| -> Result<Connection, String> {
            let spec = scenario.algebroid.as_ref().expect("schema guarantees an algebroid");
            sode_connection(spec, &f?).map_err(|e| e.to_string())
        };
        let connection = match scenario.active {
            Some(Source::Connection) => Some(
                Connection::new(scenario.chart, scenario.anchor.clone(), scenario.connection.clone().unwrap_or_default())
                    .map_err(|e| e.to_string()),
            ),
            Some(Source::PseudoSode) => {
                Some(from_sode(Ok(scenario.pseudo_sode.clone().expect("schema guarantees a pseudo-SODE"))))
            }
            Some(Source::Lagrangian) => Some(from_sode(
                lagrangian.as_ref().expect("schema guarantees a Lagrangian").as_ref().map(|l| l.sode.clone()).map_err(|e| e.to_string()),
            )),
            None => None,
        };
        Sources { connection, sode, lagrangian }
    }
}

pub fn chart_sampler(scenario: &Scenario, config: &Config) -> SampleBox {
    let (xl, xh) = config.x_range;
    let (yl, yh) = config.y_range;
    let ranges = (0..scenario.chart.n)
        .map(|i| (Var::X(i), xl, xh))
        .chain((0..scenario.chart.k).map(|a| (Var::Y(a), yl, yh)))
        .collect();
    SampleBox::new(ranges, config.samples, config.seed)
}

fn base_sampler(scenario: &Scenario, config: &Config) -> SampleBox {
    let (xl, xh) = config.x_range;
    SampleBox::new((0..scenario.chart.n).map(|i| (Var::X(i), xl, xh)).collect(), config.samples, config.seed)
}

struct Outcome {
    verification: Verification,
    curve: Option<DiscreteCurve>,
}

impl From<Verification> for Outcome {
    fn from(verification: Verification) -> Self {
        Outcome { verification, curve: None }
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    config: Config,
    tol_override: Option<f64>,
    sources: Sources,
}

impl Runner<'_> {
    fn connection(&self) -> Result<&Connection, String> {
        match &self.sources.connection {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(format!("cannot build the {} connection: {e}", self.scenario.active.map_or("", Source::name))),
            None => Err("no connection source".into()),
        }
    }

    fn sode(&self) -> Result<&PseudoSode, String> {
        match &self.sources.sode {
            Some(Ok(f)) => Ok(f),
            Some(Err(e)) => Err(format!("cannot build the pseudo-SODE: {e}")),
            None => Err("no pseudo-SODE or Lagrangian".into()),
        }
    }

    fn run(&self, check: &CheckSpec) -> CheckReport {
        let start = Instant::now();
        let tol = self.tol_override.or(check.tol).unwrap_or_else(|| default_tolerance(&check.kind, &self.config));
        let result = self.execute(&check.kind, tol);
        let elapsed = start.elapsed();
        let (status, residuals, notes, error, curve) = match result {
            Ok(o) => {
                let status = if o.verification.passed() { Status::Pass } else { Status::Fail };
                let residuals = o.verification.residuals.iter().map(ResidualEntry::from).collect();
                (status, residuals, o.verification.notes, None, o.curve)
            }
            Err(e) => (Status::Error, vec![], vec![], Some(e), None),
        };
        let expected = if check.expect_fail { Status::Fail } else { Status::Pass };
        CheckReport {
            name: check.name.clone(),
            kind: check.kind.name().into(),
            status,
            expected,
            ok: status == expected,
            exercises: exercises(&check.kind).into(),
            residuals,
            notes,
            error,
            elapsed: Some(elapsed),
            curve,
        }
    }

    fn execute(&self, kind: &CheckKind, tol: f64) -> Result<Outcome, String> {
        let scn = self.scenario;
        let sampler = chart_sampler(scn, &self.config);
        let cfg = TransportConfig { h_step: self.config.h_step, tol_report: tol };
        let e = |err: Error| err.to_string();
        let algebroid = || scn.algebroid.as_ref().ok_or_else(|| "no algebroid".to_string());
        let out: Outcome = match kind {
            CheckKind::Chart => {
                let mut v = Verification::new();
                let issues = validate_chart(&scn.chart, &scn.anchor).err().unwrap_or_default();
                for i in &issues {
                    v.note(format!("{}: {}", i.at, i.message));
                }
                v.push(Residual::at_most("chart_issues", issues.len() as f64, tol, None));
                v.into()
            }
            CheckKind::Admissible { curve } => {
                let r = check_admissible(curve, &scn.anchor, DEFAULT_ADMISSIBLE_NODES).map_err(e)?;
                let mut v = Verification::new();
                let witness = [("u".to_string(), r.worst_u)].into_iter().collect();
                v.push(Residual::at_most("admissibility", r.max_residual, tol, Some(witness)));
                v.into()
            }
            CheckKind::Algebroid { symbolic } => {
                let mode = if *symbolic { JacobiMode::Symbolic } else { JacobiMode::Sampled };
                validate_algebroid(algebroid()?, &sampler, mode, tol).map_err(e)?.into()
            }
            CheckKind::Affine => {
                let conn = self.connection()?;
                let second: Vec<Expr> = conn
                    .gamma
                    .iter()
                    .flatten()
                    .flat_map(|g| (0..conn.k()).flat_map(move |b| (b..conn.k()).map(move |c| g.dy(b).dy(c))))
                    .collect();
                let points = sampler.points(&Env::new());
                let r = sweep(&second, &points).map_err(|err| e(err.into()))?.at_most("second_fibre_derivative", tol);
                let mut v = Verification::new();
                if !r.passed {
                    v.note("not affine");
                }
                v.push(r);
                v.into()
            }
            CheckKind::Prop1 { curve, e1, e2 } => verify_prop1(self.connection()?, curve, e1, e2, &cfg, &sampler).map_err(e)?.into(),
            CheckKind::Prop4 { s, point, ebar, span } => {
                verify_prop4(self.connection()?, s, point, ebar, *span, &cfg, &sampler).map_err(e)?.into()
            }
            CheckKind::Prop5 { s, sigma, sigma_bar } => {
                self.connection()?.verify_prop5(s, sigma, sigma_bar, &sampler, tol).map_err(e)?.into()
            }
            CheckKind::Hish { s, sigma, sigma_bar } => self
                .connection()?
                .verify_hish(s, sigma, sigma_bar, &base_sampler(scn, &self.config), &sampler, tol)
                .map_err(e)?
                .into(),
            CheckKind::Transport { curve, point, to_u, expect_end } => {
                let lifted = horizontal_lift_curve(self.connection()?, curve, point, *to_u, &cfg).map_err(e)?;
                let mut v = Verification::new();
                let end = lifted.last();
                v.note(format!("{} steps; y({to_u}) = {:?}", lifted.len().saturating_sub(1), end.y));
                if let Some(expected) = expect_end {
                    let diff = end.y.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let witness = [("u".to_string(), *to_u)].into_iter().collect();
                    v.push(Residual::at_most("endpoint", diff, tol, Some(witness)));
                }
                Outcome { verification: v, curve: Some(lifted) }
            }
            CheckKind::BerwaldTables => verify_affine_reproduction(self.connection()?, &sampler, tol).map_err(e)?.into(),
            CheckKind::Prop6Prop7 { s, ybar, sections, point, span } => {
                let horizontal = TransportConfig { h_step: self.config.h_step, tol_report: self.tol_override.unwrap_or(self.config.tol_report) };
                verify_prop6_prop7(self.connection()?, s, ybar, sections, point, *span, &horizontal, &sampler, tol)
                    .map_err(e)?
                    .into()
            }
            CheckKind::SodeSuite => verify_sode_suite(algebroid()?, self.sode()?, &sampler, tol).map_err(e)?.into(),
            CheckKind::HvBrackets => verify_hvbrackets(algebroid()?, self.connection()?, &sampler, tol).map_err(e)?.into(),
            CheckKind::DirectFormulae => verify_direct_formulae(algebroid()?, self.connection()?, &sampler, tol).map_err(e)?.into(),
            CheckKind::EulerLagrange { x0, y0, t_end } => {
                let lag = scn.lagrangian.as_ref().ok_or("no Lagrangian")?;
                let sode = match &self.sources.lagrangian {
                    Some(Ok(l)) => &l.sode,
                    Some(Err(err)) => return Err(err.to_string()),
                    None => return Err("no Lagrangian".into()),
                };
                verify_euler_lagrange(algebroid()?, lag, sode, x0, y0, *t_end, &cfg, tol).map_err(e)?.into()
            }
            CheckKind::Regularity => {
                let result = self.sources.lagrangian.as_ref().ok_or("no Lagrangian")?;
                let mut r = regularity_residual(result).map_err(e)?;
                r.tolerance = tol;
                r.passed = r.value <= tol;
                let mut v = Verification::new();
                if let Err(err) = result {
                    v.note(err.to_string());
                }
                v.push(r);
                v.into()
            }
        };
        Ok(out)
    }
}

/// Runs the selected checks concurrently and assembles the report in
/// scenario order.
pub fn run_checks(scenario: &Scenario, checks: &[&CheckSpec], overrides: &Overrides) -> Report {
    let config = overrides.apply(&scenario.config);
    let sources = Sources::build(scenario, &chart_sampler(scenario, &config));
    let runner = Runner { scenario, config: config.clone(), tol_override: overrides.tol, sources };
    let reports: Vec<CheckReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = checks.iter().map(|c| scope.spawn(|| runner.run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("check thread panicked")).collect()
    });
    let settings = Settings { h_step: config.h_step, samples: config.samples, seed: config.seed, tol_override: overrides.tol };
    Report::new(scenario.name.clone(), settings, reports)
}

/// Structural checks: the chart, every curve and the algebroid axioms, plus
/// construction of the active connection.
pub fn validate_scenario(scenario: &Scenario, overrides: &Overrides) -> Report {
    let mut checks = vec![CheckSpec { name: "chart".into(), kind: CheckKind::Chart, expect_fail: false, tol: None }];
    for (name, curve) in &scenario.curves {
        checks.push(CheckSpec {
            name: format!("curve:{name}"),
            kind: CheckKind::Admissible { curve: curve.clone() },
            expect_fail: false,
            tol: None,
        });
    }
    if scenario.algebroid.is_some() {
        checks.push(CheckSpec { name: "algebroid".into(), kind: CheckKind::Algebroid { symbolic: false }, expect_fail: false, tol: None });
    }
    if scenario.lagrangian.is_some() {
        checks.push(CheckSpec { name: "regularity".into(), kind: CheckKind::Regularity, expect_fail: false, tol: None });
    }
    let refs: Vec<&CheckSpec> = checks.iter().collect();
    let mut report = run_checks(scenario, &refs, overrides);
    if let Some(source) = scenario.active {
        let config = overrides.apply(&scenario.config);
        let sources = Sources::build(scenario, &chart_sampler(scenario, &config));
        let (status, error) = match sources.connection {
            Some(Ok(_)) => (Status::Pass, None),
            Some(Err(e)) => (Status::Error, Some(e)),
            None => (Status::Error, Some("no connection source".into())),
        };
        report.checks.push(CheckReport {
            name: "connection".into(),
            kind: "connection".into(),
            status,
            expected: Status::Pass,
            ok: status == Status::Pass,
            exercises: format!("building the connection from the {}", source.name()),
            residuals: vec![],
            notes: vec![],
            error,
            elapsed: None,
            curve: None,
        });
        report = Report::new(report.scenario, report.settings, report.checks);
    }
    report
}

/// The active connection, built as for a run.
pub fn active_connection(scenario: &Scenario, overrides: &Overrides) -> Result<Connection, String> {
    let config = overrides.apply(&scenario.config);
    match Sources::build(scenario, &chart_sampler(scenario, &config)).connection {
        Some(c) => c,
        None => Err("the scenario has no connection source".into()),
    }
}

/// The pseudo-SODE of the scenario with the Hessian condition number when it
/// comes from a Lagrangian.
pub fn scenario_sode(scenario: &Scenario, overrides: &Overrides) -> Result<(PseudoSode, Option<f64>), String> {
    let config = overrides.apply(&scenario.config);
    let sources = Sources::build(scenario, &chart_sampler(scenario, &config));
    let condition = match &sources.lagrangian {
        Some(Ok(l)) if scenario.pseudo_sode.is_none() => Some(l.max_condition),
        _ => None,
    };
    match sources.sode {
        Some(Ok(f)) => Ok((f, condition)),
        Some(Err(e)) => Err(e),
        None => Err("the scenario has no pseudo-SODE or Lagrangian".into()),
    }
}
