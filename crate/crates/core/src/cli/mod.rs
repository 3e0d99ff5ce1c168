//! Command-line front end: `validate`, `analyze`, `verify`, `simulate` and `fit`.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cycle::{check_decoding_symmetry, validate_spec, OutcomeSet};
use crate::error::Error;
use crate::extraction::{check_smip, cycle_transfer};
use crate::fit::{fit_decay, FitMethod, FitResult};
use crate::markov::{lambda1_first_order_report, FirstOrderRow, MarkovModel, ModelOptions};
use crate::numfmt::format_float;
use crate::oracle::{raw_path_sum, splitmix64, trajectory_sample};
use crate::pauli::BitString;
use crate::verify::{analyze, verify, Analysis, VerificationReport};
use config::{load_experiment, Experiment};

/// Marker attached to every report produced outside the bound's hypotheses.
pub const WATERMARK: &str = "hypotheses not satisfied";

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "LOGMARKOV_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "logmarkov",
    version,
    about = "Logical Markovian models of repeated QEC cycles"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a specification file and report every problem found.
    Validate(SpecArgs),
    /// Extract the cycle channels and build the logical Markovian model.
    Analyze(AnalyzeArgs),
    /// Compare exact and model predictions against the error bound for a range of K.
    Verify(SweepArgs),
    /// Sample measurement outcomes with the Pauli-frame Monte-Carlo simulator.
    Simulate(SimulateArgs),
    /// Fit `value ≈ A·χ^K` to a CSV series.
    Fit(FitArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Output {
    /// Directory receiving every artifact of the command.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of tables and of the report printed on stdout.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Experiment specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Tolerance of the syndrome-marginal independence check.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Accepted for symmetry with `verify`; analyses are always emitted.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    /// Run even when the bound's hypotheses fail; reports are watermarked.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with columns `K`, `value` and optionally `weight`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    output: Output,
}

type CmdResult = std::result::Result<i32, String>;

fn err_string(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        1
    })
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    // A pool may already exist when embedded; the first configuration wins.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> std::result::Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn watermark_csv(hypothesis_ok: bool, body: Vec<u8>) -> Vec<u8> {
    if hypothesis_ok {
        body
    } else {
        let mut out = format!("# {WATERMARK}\n").into_bytes();
        out.extend(body);
        out
    }
}

fn watermark_json(hypothesis_ok: bool, mut v: Value) -> Value {
    if !hypothesis_ok {
        if let Some(o) = v.as_object_mut() {
            o.insert("watermark".into(), json!(WATERMARK));
        }
    }
    v
}

fn load(path: &Path) -> std::result::Result<Experiment, String> {
    load_experiment(path).map_err(err_string)
}

fn yes_no(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "yes",
        Some(false) => "no",
        None => "unknown",
    }
}

fn cmd_validate(args: &SpecArgs) -> CmdResult {
    let exp = load(&args.spec)?;
    let mut report = validate_spec(&exp.spec);
    let symmetric = check_decoding_symmetry(&exp.spec.code).ok();
    let mut smip = None;
    if report.is_clean() {
        let t = cycle_transfer(&exp.spec).map_err(err_string)?;
        let ok = check_smip(&t, args.tol);
        smip = Some(ok);
        if !ok {
            report.warnings.push(format!(
                "the cycle does not satisfy syndrome-marginal independence at tolerance {}; \
                 enable randomize_syndrome to build a model",
                format_float(args.tol)
            ));
        }
    }
    let clean = report.is_clean();
    let out = match args.output.format {
        Format::Json => pretty(&json!({
            "clean": clean,
            "violations": report.violations,
            "warnings": report.warnings,
            "decoding_symmetric": symmetric,
            "smip": smip,
        })),
        Format::Csv => {
            let mut s = String::new();
            for v in &report.violations {
                let _ = writeln!(s, "violation: {v}");
            }
            for w in &report.warnings {
                let _ = writeln!(s, "warning: {w}");
            }
            let _ = writeln!(s, "decoding symmetric: {}", yes_no(symmetric));
            let _ = writeln!(s, "syndrome marginal independence: {}", yes_no(smip));
            let _ = writeln!(s, "status: {}", if clean { "clean" } else { "invalid" });
            s
        }
    };
    print!("{out}");
    if let Some(dir) = &args.output.out {
        let name = if args.output.format == Format::Json {
            "validation.json"
        } else {
            "validation.txt"
        };
        write_artifact(dir, name, out.as_bytes())?;
    }
    Ok(if clean { 0 } else { 1 })
}

fn run_analysis(exp: &Experiment, lenient: bool) -> std::result::Result<Analysis, String> {
    let opts = ModelOptions {
        lenient,
        ..ModelOptions::default()
    };
    analyze(&exp.spec, &exp.settings, &opts).map_err(|e| match e {
        Error::Precondition(m) => {
            format!("{m}; enable randomize_syndrome or use a decoding-symmetric code")
        }
        Error::Hypothesis(m) => format!("{WATERMARK}: {m}; rerun with --force to proceed"),
        other => other.to_string(),
    })
}

fn first_order_json(rows: &[FirstOrderRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| json!({"pauli": r.pauli, "lambda1": r.lambda1, "chi": r.chi, "gap": r.gap}))
            .collect(),
    )
}

fn first_order_csv(rows: &[FirstOrderRow]) -> std::result::Result<Vec<u8>, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pauli", "lambda1", "chi", "gap"])
        .map_err(err_string)?;
    for r in rows {
        w.write_record([
            r.pauli.clone(),
            format_float(r.lambda1),
            format_float(r.chi),
            format_float(r.gap),
        ])
        .map_err(err_string)?;
    }
    w.into_inner().map_err(err_string)
}

fn model_summary(model: &MarkovModel, analysis: &Analysis, rows: &[FirstOrderRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "logical qubits: {}", model.n_l);
    let _ = writeln!(s, "syndrome states: {}", analysis.transfer.dim());
    let _ = writeln!(
        s,
        "syndrome randomization: {}",
        analysis.transfer.is_randomized()
    );
    let _ = writeln!(
        s,
        "decoding symmetric: {}",
        yes_no(analysis.decoding_symmetric)
    );
    let _ = writeln!(s, "f1 = {}", format_float(model.f1));
    let _ = writeln!(s, "eps1 = {}", format_float(model.eps1));
    let _ = writeln!(s, "eps = {}", format_float(model.eps));
    let _ = writeln!(s, "G' = {}", format_float(model.g_prime));
    let _ = writeln!(s, "G = {}", format_float(model.g_total));
    let _ = writeln!(s, "hypothesis_ok: {}", model.hypothesis_ok);
    for f in &model.hypothesis_failures {
        let _ = writeln!(s, "failed condition: {f}");
    }
    for r in rows {
        let _ = writeln!(
            s,
            "chi[{}] = {} (single cycle {}, gap {})",
            r.pauli,
            format_float(r.chi),
            format_float(r.lambda1),
            format_float(r.gap)
        );
    }
    if !model.hypothesis_ok {
        let _ = writeln!(s, "warning: {WATERMARK}");
    }
    s
}

fn cmd_analyze(args: &AnalyzeArgs) -> CmdResult {
    let a = &args.spec;
    let exp = load(&a.spec)?;
    let analysis = run_analysis(&exp, true)?;
    let model = &analysis.model;
    let rows = lambda1_first_order_report(&analysis.transfer).map_err(err_string)?;
    let mut model_json = model.to_json();
    if let Some(o) = model_json.as_object_mut() {
        o.insert("first_order".into(), first_order_json(&rows));
        o.insert("smip".into(), json!(check_smip(&analysis.transfer, a.tol)));
        o.insert(
            "decoding_symmetric".into(),
            json!(analysis.decoding_symmetric),
        );
    }
    let model_json = watermark_json(model.hypothesis_ok, model_json);
    let summary = model_summary(model, &analysis, &rows);
    if !model.hypothesis_ok {
        eprintln!(
            "warning: {WATERMARK}: {}",
            model.hypothesis_failures.join("; ")
        );
    }
    match a.output.format {
        Format::Json => print!("{}", pretty(&model_json)),
        Format::Csv => print!("{summary}"),
    }
    if let Some(dir) = &a.output.out {
        write_artifact(dir, "model.json", pretty(&model_json).as_bytes())?;
        write_artifact(dir, "summary.txt", summary.as_bytes())?;
        let mut transfer = Vec::new();
        analysis
            .transfer
            .write_csv(&mut transfer)
            .map_err(err_string)?;
        write_artifact(
            dir,
            "transfer.csv",
            &watermark_csv(model.hypothesis_ok, transfer),
        )?;
        let fo = first_order_csv(&rows)?;
        write_artifact(
            dir,
            "first_order.csv",
            &watermark_csv(model.hypothesis_ok, fo),
        )?;
    }
    Ok(0)
}

fn eigen_rows_json(report: &VerificationReport) -> Value {
    Value::Array(
        report
            .eigen
            .iter()
            .map(|r| {
                json!({"prep": r.prep, "meas": r.meas, "pauli": r.pauli, "k": r.k, "exact": r.exact,
                       "model": r.model, "gap": r.gap, "bound": r.bound, "within_bound": r.within_bound,
                       "pass": r.pass})
            })
            .collect(),
    )
}

fn probability_rows_json(report: &VerificationReport) -> Value {
    Value::Array(
        report
            .probability
            .iter()
            .map(|r| {
                json!({"prep": r.prep, "meas": r.meas, "outcome": r.outcome, "k": r.k, "exact": r.exact,
                       "model": r.model, "gap": r.gap, "bound": r.bound, "within_bound": r.within_bound,
                       "pass": r.pass})
            })
            .collect(),
    )
}

fn cmd_verify(args: &SweepArgs) -> CmdResult {
    let exp = load(&args.spec)?;
    let analysis = run_analysis(&exp, args.force)?;
    let ok = analysis.model.hypothesis_ok;
    if !ok && !args.force {
        return Err(format!(
            "{WATERMARK}: {}; rerun with --force to proceed",
            analysis.model.hypothesis_failures.join("; ")
        ));
    }
    let report = verify(
        &analysis,
        &exp.settings,
        &exp.outcomes,
        args.kmin,
        args.kmax,
    )
    .map_err(err_string)?;
    let mut summary = report.summary_json();
    if let Some(o) = summary.as_object_mut() {
        o.insert("kmin".into(), json!(args.kmin));
        o.insert("kmax".into(), json!(args.kmax));
    }
    let summary = watermark_json(ok, summary);
    match args.output.format {
        Format::Json => print!("{}", pretty(&summary)),
        Format::Csv => {
            let s = &report.summary;
            println!(
                "checks: {} eigenvalue, {} probability",
                report.eigen.len(),
                report.probability.len()
            );
            println!(
                "max eigenvalue gap: {}",
                format_float(report.max_eigen_gap())
            );
            println!(
                "max probability gap: {}",
                format_float(report.max_probability_gap())
            );
            println!(
                "eps = {}, G' = {}, G = {}",
                format_float(s.eps),
                format_float(s.g_prime),
                format_float(s.g_total)
            );
            println!("failures: {}", report.failures());
            println!(
                "gaps above the bound before the rounding allowance: {}",
                report.strict_failures()
            );
            if !ok {
                println!("warning: {WATERMARK}");
            }
            println!(
                "status: {}",
                if report.all_pass() { "pass" } else { "fail" }
            );
        }
    }
    if let Some(dir) = &args.output.out {
        write_artifact(dir, "verify_summary.json", pretty(&summary).as_bytes())?;
        match args.output.format {
            Format::Csv => {
                let (mut e, mut p) = (Vec::new(), Vec::new());
                report.write_eigen_csv(&mut e).map_err(err_string)?;
                report.write_probability_csv(&mut p).map_err(err_string)?;
                write_artifact(dir, "eigen_checks.csv", &watermark_csv(ok, e))?;
                write_artifact(dir, "probability_checks.csv", &watermark_csv(ok, p))?;
            }
            Format::Json => {
                let e = watermark_json(ok, json!({"rows": eigen_rows_json(&report)}));
                let p = watermark_json(ok, json!({"rows": probability_rows_json(&report)}));
                write_artifact(dir, "eigen_checks.json", pretty(&e).as_bytes())?;
                write_artifact(dir, "probability_checks.json", pretty(&p).as_bytes())?;
            }
        }
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}

/// One row of the `simulate` table.
struct SimRow {
    prep: usize,
    meas: usize,
    k: usize,
    outcome: String,
    count: u64,
    shots: u64,
    exact: f64,
    seed: u64,
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    if args.kmin > args.kmax {
        return Err(format!("empty K range {}..={}", args.kmin, args.kmax));
    }
    let exp = load(&args.spec)?;
    let n_l = exp.spec.layout.n_l;
    let basis: Vec<OutcomeSet> = BitString::all(n_l).map(|b| vec![b]).collect();
    let jobs: Vec<(usize, usize, usize, usize)> = exp
        .settings
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(i, &(p, m))| (args.kmin..=args.kmax).map(move |k| (i, p, m, k)))
        .collect();
    let blocks = jobs
        .par_iter()
        .map(|&(i, p, m, k)| -> crate::Result<Vec<SimRow>> {
            let seed = splitmix64(args.seed ^ splitmix64(((i as u64) << 32) | k as u64));
            let (prep, meas) = (&exp.settings.preps[p], &exp.settings.meas[m]);
            let counts = trajectory_sample(&exp.spec, prep, meas, k, args.shots, seed)?;
            let exact = raw_path_sum(&exp.spec, prep, meas, k, &basis)?;
            Ok(basis
                .iter()
                .zip(&exact.outcomes)
                .map(|(o, &e)| SimRow {
                    prep: p,
                    meas: m,
                    k,
                    outcome: o[0].to_string(),
                    count: counts.count(o),
                    shots: args.shots,
                    exact: e,
                    seed,
                })
                .collect())
        })
        .collect::<crate::Result<Vec<_>>>()
        .map_err(err_string)?;
    let rows: Vec<SimRow> = blocks.into_iter().flatten().collect();
    let body = match args.output.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["prep", "meas", "k", "outcome", "count", "shots", "frequency", "exact", "seed"])
                .map_err(err_string)?;
            for r in &rows {
                w.write_record([
                    r.prep.to_string(),
                    r.meas.to_string(),
                    r.k.to_string(),
                    r.outcome.clone(),
                    r.count.to_string(),
                    r.shots.to_string(),
                    format_float(r.count as f64 / r.shots as f64),
                    format_float(r.exact),
                    r.seed.to_string(),
                ])
                .map_err(err_string)?;
            }
            w.into_inner().map_err(err_string)?
        }
        Format::Json => pretty(&json!({
            "rows": rows.iter().map(|r| json!({
                "prep": r.prep, "meas": r.meas, "k": r.k, "outcome": r.outcome, "count": r.count,
                "shots": r.shots, "frequency": r.count as f64 / r.shots as f64, "exact": r.exact, "seed": r.seed,
            })).collect::<Vec<_>>()
        }))
        .into_bytes(),
    };
    match &args.output.out {
        Some(dir) => {
            let name = if args.output.format == Format::Json {
                "counts.json"
            } else {
                "counts.csv"
            };
            write_artifact(dir, name, &body)?;
        }
        None => print!("{}", String::from_utf8_lossy(&body)),
    }
    Ok(0)
}

/// `K`, `value` and optional `weight` columns of a decay series.
pub type Series = (Vec<f64>, Vec<f64>, Option<Vec<f64>>);

/// Reads `K`, `value` and optional `weight` columns (header names are case-insensitive).
pub fn read_series(path: &Path) -> std::result::Result<Series, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = reader.headers().map_err(err_string)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let k_col = column("k").ok_or("missing column `K`")?;
    let v_col = column("value").ok_or("missing column `value`")?;
    let w_col = column("weight");
    let (mut ks, mut vs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(err_string)?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        let get = |c: usize, name: &str| -> std::result::Result<f64, String> {
            let raw = record
                .get(c)
                .ok_or_else(|| format!("line {line}: missing `{name}`"))?;
            raw.parse::<f64>()
                .map_err(|_| format!("line {line}: `{name}` is not a number: `{raw}`"))
        };
        ks.push(get(k_col, "K")?);
        vs.push(get(v_col, "value")?);
        if let Some(c) = w_col {
            ws.push(get(c, "weight")?);
        }
    }
    Ok((ks, vs, w_col.map(|_| ws)))
}

fn fit_json(fit: &FitResult, points: usize) -> Value {
    json!({
        "amplitude": fit.amplitude,
        "chi": fit.chi,
        "rms": fit.rms,
        "chi_stderr": fit.chi_stderr,
        "method": method_name(fit.method),
        "points": points,
    })
}

fn method_name(m: FitMethod) -> &'static str {
    match m {
        FitMethod::LogLinear => "log-linear",
        FitMethod::GoldenSection => "golden-section",
    }
}

fn cmd_fit(args: &FitArgs) -> CmdResult {
    let (ks, vs, ws) = read_series(&args.data)?;
    let fit = fit_decay(&ks, &vs, ws.as_deref()).map_err(err_string)?;
    let body = match args.output.format {
        Format::Json => pretty(&fit_json(&fit, ks.len())),
        Format::Csv => format!(
            "amplitude,chi,rms,chi_stderr,method,points\n{},{},{},{},{},{}\n",
            format_float(fit.amplitude),
            format_float(fit.chi),
            format_float(fit.rms),
            fit.chi_stderr.map_or(String::new(), format_float),
            method_name(fit.method),
            ks.len()
        ),
    };
    print!("{body}");
    if let Some(dir) = &args.output.out {
        let name = if args.output.format == Format::Json {
            "fit.json"
        } else {
            "fit.csv"
        };
        write_artifact(dir, name, body.as_bytes())?;
    }
    Ok(0)
}
