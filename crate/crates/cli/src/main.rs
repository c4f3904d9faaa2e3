use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rhoconn::algebroid::sode_connection;
use rhoconn::berwald::{berwald_table, Variant};
use rhoconn_cli::report::table;
use rhoconn_cli::run::{active_connection, scenario_sode};
use rhoconn_cli::schema::CheckKind;
use rhoconn_cli::{emit_report, load_scenario, parse_report, run_checks, select, validate_scenario, Format, Overrides, Report};
use serde::Serialize;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "rhoconn", version, about = "Run and report verification scenarios for generalised rho-connections")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check the chart, curves, algebroid axioms and the active connection.
    Validate(ScenarioArgs),
    /// Run the scenario's checks.
    Check(ScenarioArgs),
    /// Integrate one transport check and write its curve as CSV.
    Transport(ScenarioArgs),
    /// Print the Berwald tables of the active connection.
    Berwald(ScenarioArgs),
    /// Print the pseudo-SODE and its connection coefficients.
    Sode(ScenarioArgs),
    /// Render a JSON report produced by `check` or `validate`.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated check names, or `all`.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,
    /// RK4 step.
    #[arg(long)]
    step: Option<f64>,
    /// Tolerance applied to every check.
    #[arg(long)]
    tol: Option<f64>,
    /// Number of sample points.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Result<Overrides, String> {
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("--step must be positive, got {h}"));
            }
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(format!("--tol must be non-negative, got {t}"));
            }
        }
        if self.samples == Some(0) {
            return Err("--samples must be at least 1".into());
        }
        Ok(Overrides { h_step: self.step, tol: self.tol, samples: self.samples, seed: self.seed })
    }
}

#[derive(Args)]
struct ReportArgs {
    /// A JSON report.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure that ends the process with the given code.
struct Exit(u8, String);

fn config(msg: impl ToString) -> Exit {
    Exit(EXIT_CONFIG, msg.to_string())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Exit> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout().write_all(bytes).map_err(|e| config(format!("cannot write output: {e}"))),
    }
}

fn finish(report: &Report, args_out: Option<&Path>, format: Format) -> Result<u8, Exit> {
    write_output(args_out, &emit_report(report, format))?;
    Ok(if report.passed() { 0 } else { EXIT_FAIL })
}

fn validate(args: &ScenarioArgs) -> Result<u8, Exit> {
    let overrides = args.overrides().map_err(config)?;
    let scenario = load_scenario(&args.scenario).map_err(config)?;
    finish(&validate_scenario(&scenario, &overrides), args.out.as_deref(), args.format.into())
}

fn check(args: &ScenarioArgs) -> Result<u8, Exit> {
    let overrides = args.overrides().map_err(config)?;
    let scenario = load_scenario(&args.scenario).map_err(config)?;
    let selected = select(&scenario, &args.check).map_err(config)?;
    finish(&run_checks(&scenario, &selected, &overrides), args.out.as_deref(), args.format.into())
}

fn transport(args: &ScenarioArgs) -> Result<u8, Exit> {
    let overrides = args.overrides().map_err(config)?;
    let scenario = load_scenario(&args.scenario).map_err(config)?;
    let selected: Vec<_> = select(&scenario, &args.check)
        .map_err(config)?
        .into_iter()
        .filter(|c| matches!(c.kind, CheckKind::Transport { .. }))
        .collect();
    let check = match selected.as_slice() {
        [one] => *one,
        [] => return Err(config("no transport check selected")),
        many => {
            let names: Vec<&str> = many.iter().map(|c| c.name.as_str()).collect();
            return Err(config(format!("several transport checks match; pick one with --check ({})", names.join(", "))));
        }
    };
    let report = run_checks(&scenario, &[check], &overrides);
    let result = &report.checks[0];
    if let Some(curve) = &result.curve {
        write_output(args.out.as_deref(), curve.to_csv().as_bytes())?;
    }
    let summary = match (&result.error, result.max_residual()) {
        (Some(e), _) => format!("{}: error: {e}", result.name),
        (None, Some(r)) => format!("{}: {} (endpoint residual {r:e})", result.name, result.status.label()),
        (None, None) => format!("{}: {}", result.name, result.status.label()),
    };
    eprintln!("{summary}");
    Ok(if report.passed() { 0 } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct TablesOut {
    scenario: String,
    plain: rhoconn::berwald::TableExport,
    hat: rhoconn::berwald::TableExport,
}

fn berwald(args: &ScenarioArgs) -> Result<u8, Exit> {
    let overrides = args.overrides().map_err(config)?;
    let scenario = load_scenario(&args.scenario).map_err(config)?;
    let conn = active_connection(&scenario, &overrides).map_err(config)?;
    let (plain, hat) = (berwald_table(&conn, Variant::Plain), berwald_table(&conn, Variant::Hat));
    let bytes = match Format::from(args.format) {
        Format::Json => {
            let out = TablesOut { scenario: scenario.name.clone(), plain: plain.export(), hat: hat.export() };
            let mut b = serde_json::to_vec_pretty(&out).expect("tables serialise");
            b.push(b'\n');
            b
        }
        Format::Text => format!("{}\n{}", plain.to_text(), hat.to_text()).into_bytes(),
    };
    write_output(args.out.as_deref(), &bytes)?;
    Ok(0)
}

#[derive(Serialize)]
struct SodeOut {
    scenario: String,
    f: Vec<String>,
    gamma: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hessian_condition: Option<f64>,
}

fn sode(args: &ScenarioArgs) -> Result<u8, Exit> {
    let overrides = args.overrides().map_err(config)?;
    let scenario = load_scenario(&args.scenario).map_err(config)?;
    let spec = scenario.algebroid.as_ref().ok_or_else(|| config("the scenario has no /algebroid"))?;
    let (f, condition) = scenario_sode(&scenario, &overrides).map_err(config)?;
    let conn = sode_connection(spec, &f).map_err(config)?;
    let out = SodeOut {
        scenario: scenario.name.clone(),
        f: f.f.iter().map(ToString::to_string).collect(),
        gamma: conn.gamma.iter().map(|row| row.iter().map(ToString::to_string).collect()).collect(),
        hessian_condition: condition,
    };
    let bytes = match Format::from(args.format) {
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&out).expect("sode output serialises");
            b.push(b'\n');
            b
        }
        Format::Text => {
            let mut text = format!("pseudo-SODE of {}\n", out.scenario);
            let rows: Vec<Vec<String>> = out.f.iter().enumerate().map(|(a, e)| vec![format!("f{}", a + 1), e.clone()]).collect();
            text.push_str(&table(&["component", "expression"], &rows));
            text.push_str("\nconnection coefficients\n");
            let rows: Vec<Vec<String>> = out
                .gamma
                .iter()
                .enumerate()
                .flat_map(|(alpha, row)| row.iter().enumerate().map(move |(a, e)| vec![format!("Gamma^{}_{a}", alpha + 1), e.clone()]))
                .collect();
            text.push_str(&table(&["coefficient", "expression"], &rows));
            if let Some(c) = out.hessian_condition {
                text.push_str(&format!("\nHessian condition number (max over samples): {c:.3e}\n"));
            }
            text.into_bytes()
        }
    };
    write_output(args.out.as_deref(), &bytes)?;
    Ok(0)
}

fn report(args: &ReportArgs) -> Result<u8, Exit> {
    let bytes = std::fs::read(&args.input).map_err(|e| config(format!("cannot read {}: {e}", args.input.display())))?;
    let report = parse_report(&bytes).map_err(|e| config(format!("{} is not a report: {e}", args.input.display())))?;
    finish(&report, args.out.as_deref(), args.format.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Validate(a) => validate(a),
        Verb::Check(a) => check(a),
        Verb::Transport(a) => transport(a),
        Verb::Berwald(a) => berwald(a),
        Verb::Sode(a) => sode(a),
        Verb::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
