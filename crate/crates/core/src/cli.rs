//! The `hvf` command line.
//!
//! Every subcommand prints one JSON document on stdout (`lift` prints the
//! group law as text unless `--json` is given) and, with `--out DIR`, also
//! writes it to `DIR/<command>.json` next to any CSV tables.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numeric failure, 3 usage error.
//! The thread count can be set with `HVF_THREADS`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::distance::{distance_upper_bound, grushin_distance_surrogate, DistanceOptions};
use crate::dsl::{parse_system, validate_homogeneity, SystemSpec};
use crate::error::{Error, Result};
use crate::estimates::{
    singular_cancellation, verify_derivative_bounds, verify_fixed_pole, verify_lower_n2, verify_upper_n2, EstimateReport,
    Gate, PairGrid, PoleSequence,
};
use crate::gamma::{parse_word, GammaGrushin};
use crate::lie::{check_admissible, hormander_rank, lie_basis};
use crate::lift::build_lift;
use crate::numeric::quad::QuadratureSpec;
use crate::poly::Rational;
use crate::potential::{mean_value_report, mean_value_table, MeanValue, MeanValueRow, PotentialOptions, TestFunction};
use crate::volume::build_profile;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hvf", version, about = "Homogeneous Hörmander vector fields: structure, lifting, distance, Γ and mean values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Grid size: points per axis (verify, gamma) or mesh cells (potential).
    #[arg(long, global = true)]
    pub grid: Option<usize>,

    /// RNG seed; required by `verify`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weights, Lie basis, Hörmander rank and the f_k table.
    Analyze { file: PathBuf },
    /// Group law and lifted fields of the Carnot lift.
    Lift {
        file: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Upper bound for the control distance between two points.
    Distance {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 16)]
        segments: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// Also steer with the drift, under |a₀| ≤ r².
        #[arg(long)]
        drift: bool,
    },
    /// Γ(x; y) and its derivatives (Grushin plane, k = 1).
    Gamma {
        file: PathBuf,
        /// Pole x (alias `--pole`).
        #[arg(long, alias = "pole", allow_hyphen_values = true)]
        x: Option<String>,
        /// Target points; without any, a grid around x is evaluated.
        #[arg(long, allow_hyphen_values = true)]
        y: Vec<String>,
        /// Derivative word such as `X1x,X2y`.
        #[arg(long)]
        word: Option<String>,
        /// Cross-check with the saturation integral.
        #[arg(long)]
        saturation: bool,
        /// Only calibrate γ₀ and report the residual at the check point.
        #[arg(long)]
        calibrate: bool,
    },
    /// Verification suites; reports carry pass/fail gates.
    Verify {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::Structure)]
        suite: Suite,
        /// Poles for the `pole` suite.
        #[arg(long, allow_hyphen_values = true)]
        pole: Vec<String>,
    },
    /// Mean-value tables m_r, M_r (Grushin plane, k = 1).
    Potential {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        pole: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
        levels: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,y1,y2,y1*y2,y1^2,y2^2")]
        funcs: Vec<String>,
        #[arg(long, default_value_t = 3.0)]
        alpha: f64,
        /// Also report q_r, Q_r and ω_r for every pole and level.
        #[arg(long)]
        deficits: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Lift { .. } => "lift",
            Command::Distance { .. } => "distance",
            Command::Gamma { .. } => "gamma",
            Command::Verify { .. } => "verify",
            Command::Potential { .. } => "potential",
        }
    }

    fn file(&self) -> &Path {
        match self {
            Command::Analyze { file }
            | Command::Lift { file, .. }
            | Command::Distance { file, .. }
            | Command::Gamma { file, .. }
            | Command::Verify { file, .. }
            | Command::Potential { file, .. } => file,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Homogeneity, Hörmander rank, lift axioms, exact Λ scaling (any system).
    Structure,
    Upper,
    Lower,
    Pole,
    Derivative,
    Kernel,
    /// Every Grushin suite.
    All,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Tolerance { .. } | Error::Inconsistent(_) | Error::Json(_) => EXIT_NUMERIC,
        Error::Io(_) => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

/// What a subcommand produced.
struct Outcome {
    result: Value,
    pass: bool,
    /// `(file name, contents)` written under `--out`.
    tables: Vec<(String, String)>,
    text: Option<String>,
}

impl Outcome {
    fn json(result: Value, pass: bool) -> Self {
        Outcome { result, pass, tables: Vec::new(), text: None }
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(n) = std::env::var("HVF_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("HVF_THREADS must be a positive integer, got '{n}'");
                return EXIT_USAGE;
            }
        }
    }
    let command = cli.command.name();
    let input = cli.command.file().display().to_string();
    let (doc, code, outcome) = match execute(&cli) {
        Ok(o) => {
            let code = if o.pass { EXIT_OK } else { EXIT_VALIDATION };
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command,
                "input": input,
                "status": if o.pass { "ok" } else { "fail" },
                "exit_code": code,
                "result": o.result.clone(),
            });
            (doc, code, Some(o))
        }
        Err(e) => {
            let code = match &e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Run(e) => exit_code(e),
            };
            let (kind, message) = match &e {
                CliError::Usage(m) => ("usage", m.clone()),
                CliError::Run(e) => (e.kind(), e.to_string()),
            };
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command,
                "input": input,
                "status": "error",
                "exit_code": code,
                "error": { "kind": kind, "message": message },
            });
            (doc, code, None)
        }
    };
    let rendered = serde_json::to_string_pretty(&doc).expect("JSON values always serialise");
    if let Some(dir) = &cli.out {
        let mut files = vec![(format!("{command}.json"), rendered.clone() + "\n")];
        if let Some(o) = &outcome {
            files.extend(o.tables.iter().cloned());
            if let Some(t) = &o.text {
                files.push((format!("{command}.txt"), t.clone()));
            }
        }
        if let Err(e) = write_all(dir, &files) {
            eprintln!("cannot write to {}: {e}", dir.display());
            return EXIT_USAGE;
        }
    }
    // A closed pipe (`hvf ... | head`) is not an error.
    let mut stdout = std::io::stdout().lock();
    let _ = match outcome.as_ref().and_then(|o| o.text.as_ref()) {
        Some(t) => write!(stdout, "{t}"),
        None => writeln!(stdout, "{rendered}"),
    };
    if code != EXIT_OK {
        if let Some(msg) = doc.get("error").and_then(|e| e.get("message")) {
            eprintln!("hvf {command}: {}", msg.as_str().unwrap_or_default());
        }
    }
    code
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load(path: &Path) -> CliResult<SystemSpec> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_system(&text)?)
}

fn parse_point(s: &str, n: usize) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad coordinate '{t}' in point '{s}'"))))
        .collect::<CliResult<_>>()?;
    if v.len() != n {
        return Err(usage(format!("point '{s}' has {} coordinates, expected {n}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(usage(format!("point '{s}' is not finite")));
    }
    Ok(v)
}

fn parse_plane_point(s: &str) -> CliResult<[f64; 2]> {
    let v = parse_point(s, 2)?;
    Ok([v[0], v[1]])
}

fn require_grushin(spec: &SystemSpec, what: &str) -> CliResult<()> {
    if spec.is_grushin_one() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} is only available for the Grushin plane X1 = (1, 0), X2 = (0, x1)")).into())
    }
}

fn quad_spec(cli: &Cli, default: f64) -> CliResult<QuadratureSpec> {
    let tol = cli.tol.unwrap_or(default);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(usage(format!("--tol must lie in (0, 1), got {tol}")));
    }
    Ok(QuadratureSpec::with_rel_tol(tol))
}

fn execute(cli: &Cli) -> CliResult<Outcome> {
    let spec = load(cli.command.file())?;
    match &cli.command {
        Command::Analyze { .. } => analyze(&spec),
        Command::Lift { json, .. } => lift(&spec, *json),
        Command::Distance { from, to, segments, restarts, drift, .. } => {
            let opts = DistanceOptions {
                segments: *segments,
                restarts: *restarts,
                use_drift: *drift || needs_drift(&spec),
                seed: cli.seed.unwrap_or(7),
                ..DistanceOptions::default()
            };
            distance(&spec, from, to, &opts, *drift)
        }
        Command::Gamma { x, y, word, saturation, calibrate, .. } => {
            gamma(cli, &spec, x.as_deref(), y, word.as_deref(), *saturation, *calibrate)
        }
        Command::Verify { suite, pole, .. } => verify(cli, &spec, *suite, pole),
        Command::Potential { pole, levels, funcs, alpha, deficits, .. } => {
            potential(cli, &spec, pole, levels, funcs, *alpha, *deficits)
        }
    }
}

fn analyze(spec: &SystemSpec) -> CliResult<Outcome> {
    let homogeneity = validate_homogeneity(spec);
    let basis = lie_basis(spec)?;
    let zero = vec![Rational::from_integer(0.into()); spec.n()];
    let rank = hormander_rank(spec, &basis, &zero)?;
    let admissible = check_admissible(spec, &basis);
    let profile = build_profile(spec)?;
    let lift = if admissible.is_ok() { build_lift(spec).ok() } else { None };
    let result = json!({
        "n": spec.n(),
        "m": spec.m(),
        "sigma": spec.sigma(),
        "q": spec.q(),
        "fields": spec.fields().iter().map(|f| json!({"name": f.name, "coeffs": f.field.to_string()})).collect::<Vec<_>>(),
        "drift": spec.drift().map(|d| d.to_string()),
        "homogeneity": homogeneity,
        "lie": {
            "N": basis.dim,
            "p": basis.p,
            "step": basis.step,
            "basis": basis.elements.iter().map(|e| json!({
                "index": e.index.to_string(),
                "weight": e.weight,
                "field": e.field.to_string(),
            })).collect::<Vec<_>>(),
        },
        "hormander_rank_at_origin": rank,
        "admissible": admissible.is_ok(),
        "admissibility_error": admissible.as_ref().err().map(|e| e.to_string()),
        "volume": {
            "q": profile.q(),
            "degrees": profile.degrees(),
            "f_q": profile.f_q().map(|r| r.to_string()),
            "f_k": profile.summary(),
        },
        "lift": lift.as_ref().map(|l| json!({"N": l.dim(), "Q": l.big_q(), "tau": l.tau()})),
    });
    Ok(Outcome::json(result, admissible.is_ok()))
}

fn lift(spec: &SystemSpec, as_json: bool) -> CliResult<Outcome> {
    let l = build_lift(spec)?;
    let coords = l.context().names().to_vec();
    let fields: Vec<String> = l.lifted_fields().iter().map(|f| f.to_string()).collect();
    let drift = l.lifted_drift().map(|d| d.to_string());
    let inversion: Vec<String> = l.inversion().iter().map(|p| p.to_string()).collect();
    let law = l.law_strings();
    let primes: Vec<String> = coords.iter().map(|c| format!("{c}'")).collect();
    let mut text = String::new();
    let _ = writeln!(text, "# Carnot lift: N = {}, Q = {}, tau = {:?}", l.dim(), l.big_q(), l.tau());
    let _ = writeln!(text, "# (z * z') with z = ({}), z' = ({})", coords.join(", "), primes.join(", "));
    for (c, p) in coords.iter().zip(&law) {
        let _ = writeln!(text, "{c}: {p}");
    }
    let _ = writeln!(text, "# inverse");
    for (c, p) in coords.iter().zip(&inversion) {
        let _ = writeln!(text, "{c}: {p}");
    }
    let _ = writeln!(text, "# lifted fields");
    for (f, v) in spec.fields().iter().zip(&fields) {
        let _ = writeln!(text, "{}~ = {v}", f.name);
    }
    if let Some(d) = &drift {
        let _ = writeln!(text, "X0~ = {d}");
    }
    let result = json!({
        "N": l.dim(),
        "Q": l.big_q(),
        "tau": l.tau(),
        "coordinates": coords,
        "law": law,
        "inversion": inversion,
        "lifted_fields": fields,
        "lifted_drift": drift,
    });
    let mut o = Outcome::json(result, true);
    if !as_json {
        o.text = Some(text);
    }
    Ok(o)
}

/// True when the horizontal fields alone miss the Hörmander condition, so
/// that points off a lower-dimensional set are reachable only with the drift.
fn needs_drift(spec: &SystemSpec) -> bool {
    if spec.drift().is_none() {
        return false;
    }
    let Ok(horizontal) = SystemSpec::new(spec.sigma().to_vec(), spec.fields().to_vec(), None) else {
        return true;
    };
    let zero = vec![Rational::from_integer(0.into()); spec.n()];
    match lie_basis(&horizontal) {
        Ok(b) => hormander_rank(&horizontal, &b, &zero).map_or(true, |r| r < spec.n()),
        Err(_) => true,
    }
}

fn distance(spec: &SystemSpec, from: &str, to: &str, opts: &DistanceOptions, requested_drift: bool) -> CliResult<Outcome> {
    if opts.segments == 0 || opts.restarts == 0 {
        return Err(usage("--segments and --restarts must be positive"));
    }
    if requested_drift && spec.drift().is_none() {
        return Err(usage("--drift given but the system has no drift"));
    }
    let (x, y) = (parse_point(from, spec.n())?, parse_point(to, spec.n())?);
    let rep = distance_upper_bound(spec, &x, &y, opts)?;
    let surrogate = spec.is_grushin_one().then(|| grushin_distance_surrogate(&x, &y));
    let mut csv = String::from("segment");
    for j in 1..=spec.m() {
        let _ = write!(csv, ",a{j}");
    }
    if rep.path.drift_controls.is_some() {
        csv.push_str(",a0");
    }
    csv.push('\n');
    for (s, c) in rep.path.controls.iter().enumerate() {
        let _ = write!(csv, "{s}");
        for v in c {
            let _ = write!(csv, ",{v:.12e}");
        }
        if let Some(d) = &rep.path.drift_controls {
            let _ = write!(csv, ",{:.12e}", d[s]);
        }
        csv.push('\n');
    }
    let result = json!({
        "from": x,
        "to": y,
        "seed": opts.seed,
        "drift": opts.use_drift,
        "drift_auto_enabled": opts.use_drift && !requested_drift,
        "r_hat": rep.r_hat,
        "endpoint_error": rep.endpoint_error,
        "feasibility_checks": rep.feasibility_checks,
        "surrogate": surrogate,
        "ratio_to_surrogate": surrogate.map(|s| rep.r_hat / s),
        "path": rep.path,
    });
    Ok(Outcome { result, pass: true, tables: vec![("distance_path.csv".into(), csv)], text: None })
}

fn gamma(
    cli: &Cli,
    spec: &SystemSpec,
    x: Option<&str>,
    ys: &[String],
    word: Option<&str>,
    saturation: bool,
    calibrate: bool,
) -> CliResult<Outcome> {
    require_grushin(spec, "Γ")?;
    let quad = quad_spec(cli, 1e-8)?;
    let (g, cal) = GammaGrushin::calibrated(&quad)?;
    if calibrate {
        return Ok(Outcome::json(json!({ "calibration": cal }), cal.residual <= 1e-3));
    }
    let x = parse_plane_point(x.ok_or_else(|| usage("gamma needs --x (or --calibrate)"))?)?;
    let word = word.map(parse_word).transpose()?;
    let points: Vec<[f64; 2]> = if ys.is_empty() {
        let n = cli.grid.unwrap_or(21).max(2);
        (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                [x[0] - 1.0 + 2.0 * i as f64 / (n - 1) as f64, x[1] - 1.0 + 2.0 * j as f64 / (n - 1) as f64]
            })
            .filter(|y| *y != x)
            .collect()
    } else {
        ys.iter().map(|s| parse_plane_point(s)).collect::<CliResult<_>>()?
    };
    let mut rows = Vec::new();
    let mut csv = String::from("y1,y2,gamma");
    if saturation {
        csv.push_str(",saturation");
    }
    if word.is_some() {
        csv.push_str(",derivative,derivative_fd");
    }
    csv.push('\n');
    for y in &points {
        let v = g.closed_form(&x, y)?;
        let sat = if saturation { Some(g.saturation(&x, y, &quad)?.value) } else { None };
        let der = match &word {
            Some(w) => Some(g.derivative(&x, y, w, &quad)?),
            None => None,
        };
        let _ = write!(csv, "{},{},{v:.15e}", y[0], y[1]);
        if let Some(s) = sat {
            let _ = write!(csv, ",{s:.15e}");
        }
        if let Some(d) = &der {
            let _ = write!(csv, ",{:.15e},{:.15e}", d.representation, d.finite_difference);
        }
        csv.push('\n');
        rows.push(json!({"y": y, "gamma": v, "saturation": sat, "derivative": der}));
    }
    let result = json!({
        "x": x,
        "calibration": cal,
        "word": word.map(|w| w.iter().map(|d| d.to_string()).collect::<Vec<_>>()),
        "values": rows,
    });
    Ok(Outcome { result, pass: true, tables: vec![("gamma.csv".into(), csv)], text: None })
}

fn structure_report(spec: &SystemSpec, seed: u64) -> Result<EstimateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rat = || Rational::new(rng.gen_range(-9i64..=9).into(), rng.gen_range(1i64..=4).into());
    let n = spec.n();
    let points: Vec<Vec<Rational>> = (0..8).map(|_| (0..n).map(|_| rat()).collect()).collect();
    let lambdas: Vec<Rational> = (0..4).map(|_| num_traits::Signed::abs(&rat()) + Rational::from_integer(1.into())).collect();
    let mut rep = EstimateReport::new("structure", format!("{} random rational points, seed {seed}", points.len()));
    let h = validate_homogeneity(spec);
    rep.gate(Gate::holds("δ_λ-homogeneity", h.ok));
    rep.gate(Gate::holds("X₁..X_m linearly independent", h.linearly_independent));
    let basis = lie_basis(spec)?;
    let zero = vec![Rational::from_integer(0.into()); n];
    rep.gate(Gate::holds("Hörmander rank n at 0", hormander_rank(spec, &basis, &zero)? == n));
    let mut full = true;
    for p in &points {
        full &= hormander_rank(spec, &basis, p)? == n;
    }
    rep.gate(Gate::holds("Hörmander rank n at sampled points", full));
    rep.constants.insert("N".into(), basis.dim as f64);
    rep.gate(Gate::holds("N > n", basis.dim > n));

    let profile = build_profile(spec)?;
    let mut scaling = true;
    for (p, lam) in points.iter().zip(lambdas.iter().cycle()) {
        let dp: Vec<Rational> =
            p.iter().zip(spec.sigma()).map(|(v, &s)| v * num_traits::pow::pow(lam.clone(), s as usize)).collect();
        let rho = Rational::new(3.into(), 2.into());
        let lhs = profile.lambda_rational(&dp, &(lam * &rho))?;
        let rhs = num_traits::pow::pow(lam.clone(), profile.q() as usize) * profile.lambda_rational(p, &rho)?;
        scaling &= lhs == rhs;
    }
    rep.gate(Gate::holds("Λ(δ_λx, λρ) = λ^q Λ(x, ρ) exactly", scaling));

    if check_admissible(spec, &basis).is_ok() {
        let l = build_lift(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut worst = 0.0f64;
        for _ in 0..16 {
            let mut z = || (0..l.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>();
            let (a, b, c) = (z(), z(), z());
            let lhs = l.mul_f64(&l.mul_f64(&a, &b), &c);
            let rhs = l.mul_f64(&a, &l.mul_f64(&b, &c));
            let e = l.mul_f64(&a, &l.inv_f64(&a));
            for (u, v) in lhs.iter().zip(&rhs) {
                worst = worst.max((u - v).abs() / (1.0 + u.abs()));
            }
            worst = worst.max(e.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        rep.gate(Gate::at_most("lift group axioms residual", worst, 1e-10));
    }
    rep.worst_ratio = rep.gates.iter().filter(|g| !g.pass).count() as f64;
    Ok(rep)
}

fn verify(cli: &Cli, spec: &SystemSpec, suite: Suite, poles: &[String]) -> CliResult<Outcome> {
    let seed = cli.seed.ok_or_else(|| usage("verify needs --seed for reproducibility"))?;
    let mut reports = Vec::new();
    let mut calibration = None;
    if suite == Suite::Structure {
        reports.push(structure_report(spec, seed)?);
    } else {
        require_grushin(spec, "the estimate suites")?;
        let quad = quad_spec(cli, 1e-8)?;
        let (g, cal) = GammaGrushin::calibrated(&quad)?;
        calibration = Some(cal);
        let grid = match cli.grid {
            Some(n) if n < 3 => return Err(usage("--grid must be at least 3 for the pair grid")),
            Some(n) => PairGrid { points_per_axis: n, ..PairGrid::default() },
            None => PairGrid::default(),
        };
        let run = |s: Suite| suite == s || suite == Suite::All;
        if run(Suite::Upper) {
            reports.push(verify_upper_n2(&g, &grid)?);
        }
        if run(Suite::Lower) {
            reports.push(verify_lower_n2(&g, &grid)?);
        }
        if run(Suite::Pole) {
            let poles: Vec<[f64; 2]> = if poles.is_empty() {
                vec![[1.0, 0.0], [0.0, 0.0]]
            } else {
                poles.iter().map(|p| parse_plane_point(p)).collect::<CliResult<_>>()?
            };
            for p in poles {
                reports.push(verify_fixed_pole(&g, p, &PoleSequence::default())?);
            }
        }
        if run(Suite::Derivative) {
            let small = PairGrid { points_per_axis: 7, directions: 6, radii: 8, ..grid };
            for r in 1..=3 {
                reports.push(verify_derivative_bounds(&g, &small, r)?);
            }
        }
        if run(Suite::Kernel) {
            // Γ is invariant under x2-translation, so poles differ only in x1.
            for (z, ij) in [([1.0, 0.0], (1, 1)), ([0.5, 0.0], (2, 2))] {
                reports.push(singular_cancellation(&g, z, ij, 0.1, &[10.0, 100.0], &quad)?);
            }
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    let tables = reports.iter().filter(|r| !r.rows.is_empty()).map(|r| (format!("verify_{}.csv", file_id(&r.id)), r.csv())).collect();
    let result = json!({
        "suite": suite,
        "seed": seed,
        "calibration": calibration,
        "reports": reports,
        "summary": reports.iter().map(|r| r.summary_line()).collect::<Vec<_>>(),
    });
    Ok(Outcome { result, pass, tables, text: None })
}

fn file_id(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

fn potential(
    cli: &Cli,
    spec: &SystemSpec,
    poles: &[String],
    levels: &[f64],
    funcs: &[String],
    alpha: f64,
    deficits: bool,
) -> CliResult<Outcome> {
    require_grushin(spec, "the mean-value operators")?;
    if !(alpha > 2.0) {
        return Err(usage(format!("--alpha must exceed 2 = 2/(q−2) for q = 3, got {alpha}")));
    }
    if levels.is_empty() || levels.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(usage("--levels must be positive numbers"));
    }
    let funcs: Vec<TestFunction> =
        funcs.iter().map(|f| f.parse::<TestFunction>().map_err(|e| usage(e.to_string()))).collect::<CliResult<_>>()?;
    let poles: Vec<[f64; 2]> = if poles.is_empty() {
        vec![[0.0, 0.0], [0.5, 0.2], [1.0, 1.0]]
    } else {
        poles.iter().map(|p| parse_plane_point(p)).collect::<CliResult<_>>()?
    };
    let quad = quad_spec(cli, 1e-8)?;
    let (g, _) = GammaGrushin::calibrated(&quad)?;
    let mut opts = PotentialOptions { alpha, ..PotentialOptions::default() };
    if let Some(n) = cli.grid {
        if n < 8 {
            return Err(usage("--grid must be at least 8 mesh cells"));
        }
        opts.mesh.cells = n;
    }
    if let Some(t) = cli.tol {
        opts.quad.rel_tol = t;
    }
    let mv = MeanValue::new(&g, opts);
    let rows = mean_value_table(&mv, &poles, levels, &funcs)?;
    let report = mean_value_report(&rows, 1e-3);
    let mut csv = String::from(MeanValueRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    let mut tables = vec![("potential.csv".to_string(), csv)];
    let mut deficit_rows = Vec::new();
    if deficits {
        let mut dcsv = String::from("x1,x2,r,q_r,Q_r,omega_r\n");
        for &x in &poles {
            for &r in levels {
                let d = mv.deficits(x, r)?;
                let _ = writeln!(dcsv, "{},{},{},{:.12e},{:.12e},{:.12e}", x[0], x[1], r, d.q_r, d.big_q_r, d.omega_r);
                deficit_rows.push(json!({"pole": x, "r": r, "deficits": d}));
            }
        }
        tables.push(("potential_deficits.csv".into(), dcsv));
    }
    let result = json!({
        "alpha": alpha,
        "options": opts,
        "rows": rows,
        "deficits": deficit_rows,
        "report": report,
    });
    Ok(Outcome { result, pass: report.pass, tables, text: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_and_codes() {
        assert_eq!(parse_point("1,-2.5", 2).ok(), Some(vec![1.0, -2.5]));
        assert!(parse_point("1,2,3", 2).is_err());
        assert!(parse_point("1,x", 2).is_err());
        assert_eq!(exit_code(&Error::Tolerance { reason: String::new(), estimate: 0.0 }), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::InvalidSystem(String::new())), EXIT_VALIDATION);
        assert_eq!(run(["hvf", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["hvf", "analyze", "/nonexistent/file.hvf"]), EXIT_USAGE);
    }
}
