//! Scenario documents: JSON in, validated [`Scenario`] out.
//!
//! Every schema violation names the offending location as a JSON pointer.

use std::collections::BTreeMap;
use std::fmt;

use rhoconn::algebroid::{AlgebroidSpec, LagrangianSpec, PseudoSode};
use rhoconn::expr::{parse_with, Vocabulary};
use rhoconn::{AdmissibleCurve, AnchorSpec, ChartSpec, EPoint, Expr, Var};
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

impl std::error::Error for SchemaError {}

type Result<T> = std::result::Result<T, SchemaError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Connection,
    PseudoSode,
    Lagrangian,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Connection => "connection",
            Source::PseudoSode => "pseudo_sode",
            Source::Lagrangian => "lagrangian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionKind {
    /// Basic section of `V` (`ℓ` components).
    V,
    /// Basic section of `E` (`k` components, implicit `e_0` coefficient 1).
    E,
    /// Basic section of `Ē`.
    Ebar,
    /// `Ē`-valued function of `(x, y)`.
    Vertical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub kind: SectionKind,
    pub components: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub h_step: f64,
    /// Tolerance for transport residuals.
    pub tol_report: f64,
    pub samples: usize,
    pub seed: u64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Default for Config {
    fn default() -> Self {
        Config { h_step: 1e-3, tol_report: 1e-8, samples: 64, seed: 0, x_range: (-1.0, 1.0), y_range: (-1.0, 1.0) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckKind {
    Chart,
    Admissible { curve: AdmissibleCurve },
    Algebroid { symbolic: bool },
    Affine,
    Prop1 { curve: AdmissibleCurve, e1: EPoint, e2: EPoint },
    Prop4 { s: Vec<Expr>, point: EPoint, ebar: Vec<f64>, span: f64 },
    Prop5 { s: Vec<Expr>, sigma: Vec<Expr>, sigma_bar: Vec<Expr> },
    Hish { s: Vec<Expr>, sigma: Vec<Expr>, sigma_bar: Vec<Expr> },
    Transport { curve: AdmissibleCurve, point: EPoint, to_u: f64, expect_end: Option<Vec<f64>> },
    BerwaldTables,
    Prop6Prop7 { s: Vec<Expr>, ybar: Vec<Expr>, sections: Vec<Vec<Expr>>, point: EPoint, span: f64 },
    SodeSuite,
    HvBrackets,
    DirectFormulae,
    EulerLagrange { x0: Vec<f64>, y0: Vec<f64>, t_end: f64 },
    Regularity,
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Chart => "chart",
            CheckKind::Admissible { .. } => "admissible",
            CheckKind::Algebroid { .. } => "algebroid",
            CheckKind::Affine => "affine",
            CheckKind::Prop1 { .. } => "prop1",
            CheckKind::Prop4 { .. } => "prop4",
            CheckKind::Prop5 { .. } => "prop5",
            CheckKind::Hish { .. } => "hish",
            CheckKind::Transport { .. } => "transport",
            CheckKind::BerwaldTables => "berwald_tables",
            CheckKind::Prop6Prop7 { .. } => "prop6_prop7",
            CheckKind::SodeSuite => "sode_suite",
            CheckKind::HvBrackets => "hvbrackets",
            CheckKind::DirectFormulae => "direct_formulae",
            CheckKind::EulerLagrange { .. } => "euler_lagrange",
            CheckKind::Regularity => "regularity",
        }
    }

    fn needs_connection(&self) -> bool {
        !matches!(
            self,
            CheckKind::Chart
                | CheckKind::Admissible { .. }
                | CheckKind::Algebroid { .. }
                | CheckKind::SodeSuite
                | CheckKind::EulerLagrange { .. }
                | CheckKind::Regularity
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSpec {
    pub name: String,
    pub kind: CheckKind,
    pub expect_fail: bool,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub chart: ChartSpec,
    pub anchor: AnchorSpec,
    pub connection: Option<Vec<Vec<Expr>>>,
    pub algebroid: Option<AlgebroidSpec>,
    pub pseudo_sode: Option<PseudoSode>,
    pub lagrangian: Option<LagrangianSpec>,
    pub active: Option<Source>,
    pub curves: BTreeMap<String, AdmissibleCurve>,
    pub points: BTreeMap<String, EPoint>,
    pub sections: BTreeMap<String, Section>,
    pub config: Config,
    pub checks: Vec<CheckSpec>,
}

/// A JSON value together with its pointer.
#[derive(Clone)]
struct Node<'a> {
    value: &'a Value,
    pointer: String,
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

impl<'a> Node<'a> {
    fn err(&self, message: impl Into<String>) -> SchemaError {
        SchemaError { pointer: self.pointer.clone(), message: message.into() }
    }

    fn object(&self) -> Result<&'a Map<String, Value>> {
        self.value.as_object().ok_or_else(|| self.err("expected an object"))
    }

    fn child(&self, key: &str, value: &'a Value) -> Node<'a> {
        Node { value, pointer: format!("{}/{}", self.pointer, escape(key)) }
    }

    fn get(&self, key: &str) -> Result<Option<Node<'a>>> {
        Ok(self.object()?.get(key).filter(|v| !v.is_null()).map(|v| self.child(key, v)))
    }

    fn req(&self, key: &str) -> Result<Node<'a>> {
        self.get(key)?.ok_or_else(|| SchemaError {
            pointer: format!("{}/{}", self.pointer, escape(key)),
            message: "required field is missing".into(),
        })
    }

    fn entries(&self) -> Result<Vec<(String, Node<'a>)>> {
        Ok(self.object()?.iter().map(|(k, v)| (k.clone(), self.child(k, v))).collect())
    }

    fn items(&self) -> Result<Vec<Node<'a>>> {
        let arr = self.value.as_array().ok_or_else(|| self.err("expected an array"))?;
        Ok(arr.iter().enumerate().map(|(i, v)| Node { value: v, pointer: format!("{}/{i}", self.pointer) }).collect())
    }

    fn items_len(&self, len: usize, what: &str) -> Result<Vec<Node<'a>>> {
        let items = self.items()?;
        if items.len() != len {
            return Err(self.err(format!("expected {len} {what}, got {}", items.len())));
        }
        Ok(items)
    }

    fn str(&self) -> Result<&'a str> {
        self.value.as_str().ok_or_else(|| self.err("expected a string"))
    }

    fn f64(&self) -> Result<f64> {
        self.value.as_f64().filter(|v| v.is_finite()).ok_or_else(|| self.err("expected a finite number"))
    }

    fn u64(&self) -> Result<u64> {
        self.value.as_u64().ok_or_else(|| self.err("expected a non-negative integer"))
    }

    fn usize(&self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    fn bool(&self) -> Result<bool> {
        self.value.as_bool().ok_or_else(|| self.err("expected true or false"))
    }

    fn floats(&self, len: usize) -> Result<Vec<f64>> {
        self.items_len(len, "numbers")?.iter().map(Node::f64).collect()
    }

    fn range(&self) -> Result<(f64, f64)> {
        let v = self.floats(2)?;
        if !(v[0] < v[1]) {
            return Err(self.err("range must be increasing"));
        }
        Ok((v[0], v[1]))
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for key in self.object()?.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(self.child(key, &Value::Null).err("unknown field"));
            }
        }
        Ok(())
    }
}

/// What an expression may depend on.
#[derive(Clone, Copy)]
enum Scope {
    Base,
    Chart,
    Curve,
}

struct Ctx {
    vocab: Vocabulary,
    params: BTreeMap<String, f64>,
}

impl Ctx {
    fn expr(&self, node: &Node, scope: Scope) -> Result<Expr> {
        let text = node.str()?;
        let mut e = parse_with(text, &self.vocab).map_err(|err| node.err(err.to_string()))?;
        for (name, value) in &self.params {
            e = e.substitute(&Var::param(name), &Expr::num(*value));
        }
        for var in e.variables() {
            let allowed = match (scope, &var) {
                (Scope::Curve, Var::U) => true,
                (Scope::Curve, _) | (_, Var::U) => false,
                (Scope::Base, Var::Y(_)) => false,
                _ => true,
            };
            if !allowed {
                let what = match scope {
                    Scope::Base => "a function of the base coordinates only",
                    Scope::Chart => "a function of the chart coordinates",
                    Scope::Curve => "a function of u only",
                };
                return Err(node.err(format!("`{text}` depends on `{var}` but must be {what}")));
            }
        }
        Ok(e)
    }

    fn exprs(&self, node: &Node, len: usize, scope: Scope) -> Result<Vec<Expr>> {
        node.items_len(len, "expressions")?.iter().map(|n| self.expr(n, scope)).collect()
    }

    fn matrix(&self, node: &Node, rows: usize, cols: usize, scope: Scope) -> Result<Vec<Vec<Expr>>> {
        node.items_len(rows, "rows")?.iter().map(|r| self.exprs(r, cols, scope)).collect()
    }
}

pub fn parse_scenario(text: &str, default_name: &str) -> std::result::Result<Scenario, SchemaError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| SchemaError { pointer: String::new(), message: format!("invalid JSON: {e}") })?;
    scenario_from_value(&value, default_name)
}

pub fn scenario_from_value(value: &Value, default_name: &str) -> Result<Scenario> {
    let root = Node { value, pointer: String::new() };
    root.reject_unknown(&[
        "name", "description", "parameters", "chart", "anchor", "connection", "algebroid", "pseudo_sode",
        "lagrangian", "active", "curves", "points", "sections", "config", "checks",
    ])?;
    let name = match root.get("name")? {
        Some(n) => n.str()?.to_string(),
        None => default_name.to_string(),
    };

    let chart_node = root.req("chart")?;
    chart_node.reject_unknown(&["n", "k", "l", "anchored_in_e"])?;
    let n = chart_node.req("n")?.usize()?;
    let k = chart_node.req("k")?.usize()?;
    if n == 0 {
        return Err(chart_node.req("n")?.err("base dimension must be at least 1"));
    }
    if k == 0 {
        return Err(chart_node.req("k")?.err("fibre dimension must be at least 1"));
    }
    let anchored = match chart_node.get("anchored_in_e")? {
        Some(b) => b.bool()?,
        None => false,
    };
    let chart = match (anchored, chart_node.get("l")?) {
        (true, None) => ChartSpec::anchored(n, k),
        (true, Some(l)) if l.usize()? == k + 1 => ChartSpec::anchored(n, k),
        (true, Some(l)) => return Err(l.err("an anchored chart needs l = k + 1")),
        (false, Some(l)) if l.usize()? >= 1 => ChartSpec::new(n, k, l.usize()?),
        (false, Some(l)) => return Err(l.err("V-fibre dimension must be at least 1")),
        (false, None) => {
            return Err(SchemaError {
                pointer: "/chart/l".into(),
                message: "required field is missing (or set anchored_in_e)".into(),
            })
        }
    };
    let l = chart.l;

    let mut params = BTreeMap::new();
    if let Some(p) = root.get("parameters")? {
        for (key, node) in p.entries()? {
            let valid = key.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
                && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && Var::from_name(&key).is_none_or(|v| matches!(v, Var::Param(_)));
            if !valid {
                return Err(node.err(format!("`{key}` is not a valid parameter name")));
            }
            params.insert(key, node.f64()?);
        }
    }
    let ctx = Ctx { vocab: Vocabulary::chart(n, k).with_params(params.keys().cloned()), params };

    let anchor = AnchorSpec::new(ctx.matrix(&root.req("anchor")?, n, l, Scope::Base)?);

    let connection = match root.get("connection")? {
        Some(node) => Some(ctx.matrix(&node, k, l, Scope::Chart)?),
        None => None,
    };

    let algebroid = match root.get("algebroid")? {
        Some(node) => {
            if !anchored {
                return Err(node.err("an algebroid needs a chart with anchored_in_e = true"));
            }
            node.reject_unknown(&["c", "c0"])?;
            let c = match node.get("c")? {
                Some(c) => c.items_len(k, "index blocks")?.iter().map(|b| ctx.matrix(b, k, k, Scope::Base)).collect::<Result<_>>()?,
                None => vec![vec![vec![Expr::zero(); k]; k]; k],
            };
            let c0 = match node.get("c0")? {
                Some(c0) => ctx.matrix(&c0, k, k, Scope::Base)?,
                None => vec![vec![Expr::zero(); k]; k],
            };
            Some(AlgebroidSpec::new(n, k, anchor.clone(), c, c0).map_err(|e| node.err(e.to_string()))?)
        }
        None => None,
    };

    let pseudo_sode = match root.get("pseudo_sode")? {
        Some(node) => {
            if algebroid.is_none() {
                return Err(node.err("a pseudo-SODE needs /algebroid"));
            }
            Some(PseudoSode { f: ctx.exprs(&node, k, Scope::Chart)? })
        }
        None => None,
    };
    let lagrangian = match root.get("lagrangian")? {
        Some(node) => {
            if algebroid.is_none() {
                return Err(node.err("a Lagrangian needs /algebroid"));
            }
            Some(LagrangianSpec { l: ctx.expr(&node, Scope::Chart)? })
        }
        None => None,
    };

    let present: Vec<Source> = [
        connection.as_ref().map(|_| Source::Connection),
        pseudo_sode.as_ref().map(|_| Source::PseudoSode),
        lagrangian.as_ref().map(|_| Source::Lagrangian),
    ]
    .into_iter()
    .flatten()
    .collect();
    let active = match root.get("active")? {
        Some(node) => {
            let source = match node.str()? {
                "connection" => Source::Connection,
                "pseudo_sode" => Source::PseudoSode,
                "lagrangian" => Source::Lagrangian,
                other => return Err(node.err(format!("unknown connection source `{other}`"))),
            };
            if !present.contains(&source) {
                return Err(node.err(format!("`{}` is not given", source.name())));
            }
            Some(source)
        }
        None if present.len() > 1 => {
            return Err(SchemaError {
                pointer: "/active".into(),
                message: "several connection sources are given; name the active one".into(),
            })
        }
        None => present.first().copied(),
    };

    let mut curves = BTreeMap::new();
    if let Some(node) = root.get("curves")? {
        for (key, c) in node.entries()? {
            c.reject_unknown(&["base", "components", "domain"])?;
            let base = ctx.exprs(&c.req("base")?, n, Scope::Curve)?;
            let comps = ctx.exprs(&c.req("components")?, l, Scope::Curve)?;
            let domain = match c.get("domain")? {
                Some(d) => d.range()?,
                None => (0.0, 1.0),
            };
            curves.insert(key, AdmissibleCurve::new(base, comps, domain));
        }
    }

    let mut points = BTreeMap::new();
    if let Some(node) = root.get("points")? {
        for (key, p) in node.entries()? {
            p.reject_unknown(&["x", "y"])?;
            points.insert(key, EPoint::new(p.req("x")?.floats(n)?, p.req("y")?.floats(k)?));
        }
    }

    let mut sections = BTreeMap::new();
    if let Some(node) = root.get("sections")? {
        for (key, s) in node.entries()? {
            s.reject_unknown(&["kind", "components"])?;
            let kind_node = s.req("kind")?;
            let (kind, len, scope) = match kind_node.str()? {
                "V" => (SectionKind::V, l, Scope::Base),
                "E" => (SectionKind::E, k, Scope::Base),
                "Ebar" => (SectionKind::Ebar, k, Scope::Base),
                "vertical" => (SectionKind::Vertical, k, Scope::Chart),
                other => return Err(kind_node.err(format!("unknown section kind `{other}` (V, E, Ebar or vertical)"))),
            };
            let components = ctx.exprs(&s.req("components")?, len, scope)?;
            sections.insert(key, Section { kind, components });
        }
    }

    let mut config = Config::default();
    if let Some(node) = root.get("config")? {
        node.reject_unknown(&["h_step", "tol", "samples", "seed", "box"])?;
        if let Some(h) = node.get("h_step")? {
            config.h_step = h.f64()?;
            if !(config.h_step > 0.0) {
                return Err(h.err("step must be positive"));
            }
        }
        if let Some(t) = node.get("tol")? {
            config.tol_report = t.f64()?;
        }
        if let Some(s) = node.get("samples")? {
            config.samples = s.usize()?;
            if config.samples == 0 {
                return Err(s.err("need at least one sample"));
            }
        }
        if let Some(s) = node.get("seed")? {
            config.seed = s.u64()?;
        }
        if let Some(b) = node.get("box")? {
            b.reject_unknown(&["x", "y"])?;
            if let Some(x) = b.get("x")? {
                config.x_range = x.range()?;
            }
            if let Some(y) = b.get("y")? {
                config.y_range = y.range()?;
            }
        }
    }

    let refs = Refs { curves: &curves, points: &points, sections: &sections, n, k };
    let mut checks = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(node) = root.get("checks")? {
        for item in node.items()? {
            let check = check_from(&item, &refs, &algebroid, &pseudo_sode, &lagrangian, active)?;
            if !seen.insert(check.name.clone()) {
                return Err(item.req("name")?.err(format!("duplicate check name `{}`", check.name)));
            }
            checks.push(check);
        }
    }

    Ok(Scenario { name, chart, anchor, connection, algebroid, pseudo_sode, lagrangian, active, curves, points, sections, config, checks })
}

struct Refs<'a> {
    curves: &'a BTreeMap<String, AdmissibleCurve>,
    points: &'a BTreeMap<String, EPoint>,
    sections: &'a BTreeMap<String, Section>,
    n: usize,
    k: usize,
}

impl Refs<'_> {
    fn curve(&self, node: &Node) -> Result<AdmissibleCurve> {
        let name = node.str()?;
        self.curves.get(name).cloned().ok_or_else(|| node.err(format!("no curve named `{name}` under /curves")))
    }

    fn point(&self, node: &Node) -> Result<EPoint> {
        let name = node.str()?;
        self.points.get(name).cloned().ok_or_else(|| node.err(format!("no point named `{name}` under /points")))
    }

    fn section(&self, node: &Node, kinds: &[SectionKind]) -> Result<Vec<Expr>> {
        let name = node.str()?;
        let s = self.sections.get(name).ok_or_else(|| node.err(format!("no section named `{name}` under /sections")))?;
        if !kinds.contains(&s.kind) {
            return Err(node.err(format!("section `{name}` has kind {:?}, expected one of {kinds:?}", s.kind)));
        }
        Ok(s.components.clone())
    }
}

fn check_from(
    node: &Node,
    refs: &Refs,
    algebroid: &Option<AlgebroidSpec>,
    pseudo_sode: &Option<PseudoSode>,
    lagrangian: &Option<LagrangianSpec>,
    active: Option<Source>,
) -> Result<CheckSpec> {
    let name = node.req("name")?.str()?.to_string();
    if name.is_empty() || name.contains(',') {
        return Err(node.req("name")?.err("check names must be non-empty and contain no commas"));
    }
    let kind_node = node.req("kind")?;
    let common = ["name", "kind", "expect", "tol"];
    let allow = |extra: &[&str]| node.reject_unknown(&[&common[..], extra].concat());
    let span = |node: &Node| -> Result<f64> {
        match node.get("span")? {
            Some(s) => {
                let v = s.f64()?;
                if v < 0.0 {
                    return Err(s.err("span must be non-negative"));
                }
                Ok(v)
            }
            None => Ok(1.0),
        }
    };
    use SectionKind::*;
    let kind = match kind_node.str()? {
        "chart" => {
            allow(&[])?;
            CheckKind::Chart
        }
        "admissible" => {
            allow(&["curve"])?;
            CheckKind::Admissible { curve: refs.curve(&node.req("curve")?)? }
        }
        "algebroid" => {
            allow(&["jacobi"])?;
            let symbolic = match node.get("jacobi")? {
                None => false,
                Some(j) => match j.str()? {
                    "sampled" => false,
                    "symbolic" => true,
                    other => return Err(j.err(format!("unknown Jacobi mode `{other}` (sampled or symbolic)"))),
                },
            };
            CheckKind::Algebroid { symbolic }
        }
        "affine" => {
            allow(&[])?;
            CheckKind::Affine
        }
        "prop1" => {
            allow(&["curve", "e1", "e2"])?;
            CheckKind::Prop1 {
                curve: refs.curve(&node.req("curve")?)?,
                e1: refs.point(&node.req("e1")?)?,
                e2: refs.point(&node.req("e2")?)?,
            }
        }
        "prop4" => {
            allow(&["section", "point", "ebar", "span"])?;
            CheckKind::Prop4 {
                s: refs.section(&node.req("section")?, &[V])?,
                point: refs.point(&node.req("point")?)?,
                ebar: node.req("ebar")?.floats(refs.k)?,
                span: span(node)?,
            }
        }
        kind @ ("prop5" | "hish") => {
            allow(&["s", "sigma", "sigma_bar"])?;
            let s = refs.section(&node.req("s")?, &[V])?;
            let sigma = refs.section(&node.req("sigma")?, &[E])?;
            let sigma_bar = refs.section(&node.req("sigma_bar")?, &[Ebar])?;
            if kind == "prop5" {
                CheckKind::Prop5 { s, sigma, sigma_bar }
            } else {
                CheckKind::Hish { s, sigma, sigma_bar }
            }
        }
        "transport" => {
            allow(&["curve", "point", "to_u", "expect_end"])?;
            let curve = refs.curve(&node.req("curve")?)?;
            let to_u = match node.get("to_u")? {
                Some(t) => {
                    let v = t.f64()?;
                    if v < curve.domain.0 || v > curve.domain.1 {
                        return Err(t.err("to_u lies outside the curve's domain"));
                    }
                    v
                }
                None => curve.domain.1,
            };
            let expect_end = match node.get("expect_end")? {
                Some(e) => Some(e.floats(refs.k)?),
                None => None,
            };
            CheckKind::Transport { curve, point: refs.point(&node.req("point")?)?, to_u, expect_end }
        }
        "berwald_tables" => {
            allow(&[])?;
            CheckKind::BerwaldTables
        }
        "prop6_prop7" => {
            allow(&["s", "ybar", "sections", "point", "span"])?;
            let sections = node
                .req("sections")?
                .items()?
                .iter()
                .map(|s| refs.section(s, &[Ebar]))
                .collect::<Result<Vec<_>>>()?;
            CheckKind::Prop6Prop7 {
                s: refs.section(&node.req("s")?, &[V])?,
                ybar: refs.section(&node.req("ybar")?, &[Ebar, Vertical])?,
                sections,
                point: refs.point(&node.req("point")?)?,
                span: span(node)?,
            }
        }
        "sode_suite" => {
            allow(&[])?;
            if pseudo_sode.is_none() && lagrangian.is_none() {
                return Err(kind_node.err("sode_suite needs /pseudo_sode or /lagrangian"));
            }
            CheckKind::SodeSuite
        }
        "hvbrackets" => {
            allow(&[])?;
            CheckKind::HvBrackets
        }
        "direct_formulae" => {
            allow(&[])?;
            CheckKind::DirectFormulae
        }
        "euler_lagrange" => {
            allow(&["x0", "y0", "t_end"])?;
            if lagrangian.is_none() {
                return Err(kind_node.err("euler_lagrange needs /lagrangian"));
            }
            let t_end = match node.get("t_end")? {
                Some(t) => t.f64()?,
                None => 1.0,
            };
            CheckKind::EulerLagrange { x0: node.req("x0")?.floats(refs.n)?, y0: node.req("y0")?.floats(refs.k)?, t_end }
        }
        "regularity" => {
            allow(&[])?;
            if lagrangian.is_none() {
                return Err(kind_node.err("regularity needs /lagrangian"));
            }
            CheckKind::Regularity
        }
        other => return Err(kind_node.err(format!("unknown check kind `{other}`"))),
    };
    if matches!(kind, CheckKind::Algebroid { .. } | CheckKind::HvBrackets | CheckKind::DirectFormulae) && algebroid.is_none() {
        return Err(kind_node.err(format!("{} needs /algebroid", kind.name())));
    }
    if kind.needs_connection() && active.is_none() {
        return Err(kind_node.err(format!("{} needs a connection source (/connection, /pseudo_sode or /lagrangian)", kind.name())));
    }
    let expect_fail = match node.get("expect")? {
        None => false,
        Some(e) => match e.str()? {
            "pass" => false,
            "fail" => true,
            other => return Err(e.err(format!("expect must be `pass` or `fail`, got `{other}`"))),
        },
    };
    let tol = match node.get("tol")? {
        Some(t) => Some(t.f64()?),
        None => None,
    };
    Ok(CheckSpec { name, kind, expect_fail, tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = r#"{
        "chart": {"n": 1, "k": 1, "l": 1},
        "anchor": [["1"]],
        "connection": [["0"]],
        "curves": {"c": {"base": ["u"], "components": ["1"]}},
        "points": {"e1": {"x": [0], "y": [1]}, "e2": {"x": [0], "y": [-0.5]}},
        "checks": [{"name": "p1", "kind": "prop1", "curve": "c", "e1": "e1", "e2": "e2"}]
    }"#;

    fn err(text: &str) -> SchemaError {
        parse_scenario(text, "t").unwrap_err()
    }

    #[test]
    fn loads_minimal_scenario() {
        let s = parse_scenario(FLAT, "flat").unwrap();
        assert_eq!(s.name, "flat");
        assert_eq!(s.active, Some(Source::Connection));
        assert_eq!(s.checks.len(), 1);
        assert_eq!(s.config, Config::default());
    }

    #[test]
    fn missing_anchor_names_pointer() {
        let e = err(r#"{"chart": {"n": 1, "k": 1, "l": 1}}"#);
        assert_eq!(e.pointer, "/anchor");
    }

    #[test]
    fn pointers_reach_into_arrays() {
        let e = err(&FLAT.replace(r#"[["0"]]"#, r#"[["0 +"]]"#));
        assert_eq!(e.pointer, "/connection/0/0");
        let e = err(&FLAT.replace(r#"[["1"]]"#, r#"[["y1"]]"#));
        assert_eq!(e.pointer, "/anchor/0/0");
        let e = err(&FLAT.replace(r#""curve": "c""#, r#""curve": "d""#));
        assert_eq!(e.pointer, "/checks/0/curve");
        let e = err(&FLAT.replace(r#""y": [1]"#, r#""y": [1, 2]"#));
        assert_eq!(e.pointer, "/points/e1/y");
    }

    #[test]
    fn parameters_are_substituted() {
        let text = FLAT.replace(r#"[["0"]]"#, r#"[["g*y1"]]"#).replace(r#""anchor""#, r#""parameters": {"g": 0.5}, "anchor""#);
        let s = parse_scenario(&text, "t").unwrap();
        assert_eq!(s.connection.unwrap()[0][0], Expr::mul(Expr::num(0.5), Expr::y(0)));
        let e = err(&text.replace(r#""g": 0.5"#, r#""x1": 0.5"#));
        assert_eq!(e.pointer, "/parameters/x1");
    }

    #[test]
    fn algebroid_requires_anchored_chart() {
        let text = FLAT.replace(r#""connection""#, r#""algebroid": {}, "connection""#);
        assert_eq!(err(&text).pointer, "/algebroid");
    }

    #[test]
    fn several_sources_need_active() {
        let text = r#"{
            "chart": {"n": 1, "k": 1, "anchored_in_e": true},
            "anchor": [["0", "1"]],
            "algebroid": {},
            "pseudo_sode": ["-y1"],
            "lagrangian": "0.5*y1^2"
        }"#;
        assert_eq!(err(text).pointer, "/active");
        let ok = text.replace(r#""algebroid""#, r#""active": "lagrangian", "algebroid""#);
        assert_eq!(parse_scenario(&ok, "t").unwrap().active, Some(Source::Lagrangian));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert_eq!(err(&FLAT.replace(r#""anchor""#, r#""anchr": 1, "anchor""#)).pointer, "/anchr");
    }
}
