//! `igeh`: command-line front end of the toolkit.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors, 3 for
//! numerical or domain errors. Output files are written only after the whole
//! computation has succeeded, via a temporary file renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use igeh::correlation::{
    classify, correlation_series, random_batteries, tau_grid, ClassifyOptions, CorrelationSeries, MacroPath, TestFunction,
};
use igeh::distinguishability::{
    bound_check, f_curve, lookup_f, raw_f_table, BoundReport, BruteforceOptions, CurveMethod,
};
use igeh::dynamics::{integrate_geodesic, GeodesicState, RSchedule};
use igeh::io::{self, GeometryReport, ModelSpec, VerdictReport};
use igeh::model::verify_constraints;
use igeh::{Block, Error};

#[derive(Debug, Parser)]
#[command(name = "igeh", version, about = "Information-geometric ergodic hierarchy toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fisher metric, Christoffel symbols and Ricci curvature at a model point.
    Geometry(GeometryArgs),
    /// Integrate a geodesic of the macrovariables and write the trajectory CSV.
    Geodesic(GeodesicArgs),
    /// Evaluate the IG correlation of a battery along tau and write the series CSV.
    Correlate(CorrelateArgs),
    /// Classify a correlation series as Bernoulli, mixing, ergodic or unclassified.
    Classify(ClassifyArgs),
    /// Tabulate the distinguishability measure F(r).
    Fcurve(FcurveArgs),
    /// Compare |C| with the two norm bounds built from F.
    BoundCheck(BoundCheckArgs),
    /// Check the moment constraints and normalization of the model density.
    VerifyConstraints(VerifyArgs),
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Model JSON: {"mu", "sigma", "Sigma", "r", "symmetric"?}.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BlockArg {
    Bivariate,
    Full,
}

impl From<BlockArg> for Block {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::Bivariate => Block::Bivariate,
            BlockArg::Full => Block::Full,
        }
    }
}

#[derive(Debug, Args)]
struct GeometryArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Density block whose score defines the quadrature metric.
    #[arg(long, value_enum, default_value = "bivariate")]
    block: BlockArg,
    /// Gauss–Hermite nodes per axis for the quadrature metric.
    #[arg(long, default_value_t = 32)]
    order: usize,
    /// Comma-separated r values; emits a JSON array with one report per value.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    r_sweep: Option<Vec<f64>>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct VelocityArgs {
    /// Initial d(mu)/d(tau).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu_dot: f64,
    /// Initial d(sigma)/d(tau).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    sigma_dot: f64,
    /// RK4 step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

#[derive(Debug, Args)]
struct GeodesicArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    velocity: VelocityArgs,
    #[arg(long, default_value_t = 1.0)]
    tau_max: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum PathKind {
    /// Macrovariables held at the model file values.
    Fixed,
    /// Macrovariables follow the geodesic from the model point.
    Geodesic,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Schedule JSON: {"kind": "constant"|"expdecay"|"dampedosc", "r0", "lambda", "alpha"}.
    #[arg(long)]
    schedule: PathBuf,
    /// Battery JSON: four {"var": 1..4, "kind": ..., parameters} entries.
    #[arg(long)]
    battery: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    tau_max: f64,
    /// Number of equally spaced tau points on [0, tau_max].
    #[arg(long, default_value_t = 2001)]
    n_tau: usize,
    #[arg(long, value_enum, default_value = "fixed")]
    path: PathKind,
    #[command(flatten)]
    velocity: VelocityArgs,
    /// Gauss–Hermite nodes for the correlation integrals.
    #[arg(long, default_value_t = 16)]
    order: usize,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, default_value_t = 1e-9)]
    eps_b: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_m: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_e: f64,
    #[arg(long, default_value_t = 0.2)]
    tail_fraction: f64,
    /// Verdict JSON; standard output when omitted.
    #[arg(long)]
    verdict_out: Option<PathBuf>,
    /// Correlation series CSV.
    #[arg(long)]
    series_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Closed,
    Bruteforce,
    Both,
}

#[derive(Debug, Args)]
struct FcurveArgs {
    #[arg(long, default_value_t = -0.99, allow_negative_numbers = true)]
    r_min: f64,
    #[arg(long, default_value_t = 0.99, allow_negative_numbers = true)]
    r_max: f64,
    #[arg(long, short, default_value_t = 199)]
    n: usize,
    #[arg(long, value_enum, default_value = "closed")]
    method: MethodArg,
    /// Grid points per axis for the brute-force maximization.
    #[arg(long, default_value_t = 1200)]
    resolution: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct BoundCheckArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Battery JSON with finite-norm functions.
    #[arg(long, conflicts_with = "random")]
    battery: Option<PathBuf>,
    /// Check this many seeded random finite-norm batteries instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated r values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-0.9,-0.7,-0.5,-0.3,0,0.3,0.5,0.7,0.9"
    )]
    r_values: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    order: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_model(arg: &ModelArg) -> CliResult<ModelSpec> {
    Ok(io::parse_model_json(&read_input(&arg.model)?)?)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "battery".into(), |s| s.to_string_lossy().into_owned())
}

/// Writes `contents` to a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("output path {} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::Usage(format!("cannot write {}: {e}", path.display())));
    }
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_geometry(a: &GeometryArgs) -> CliResult<()> {
    let spec = load_model(&a.model)?;
    let block = Block::from(a.block);
    let text = match &a.r_sweep {
        None => io::to_json(&GeometryReport::build(&spec.theta, &spec.cfg, block, a.order)?),
        Some(rs) => {
            let reports = rs
                .iter()
                .map(|&r| GeometryReport::build(&spec.theta, &spec.cfg.with_r(r)?, block, a.order))
                .collect::<Result<Vec<_>, Error>>()?;
            io::to_json(&reports)
        }
    };
    emit(a.out.out.as_deref(), &text)
}

fn initial_state(spec: &ModelSpec, v: &VelocityArgs) -> CliResult<GeodesicState> {
    Ok(GeodesicState::new(spec.theta, [v.mu_dot, v.sigma_dot])?)
}

fn cmd_geodesic(a: &GeodesicArgs) -> CliResult<()> {
    let spec = load_model(&a.model)?;
    let traj = integrate_geodesic(&initial_state(&spec, &a.velocity)?, &spec.cfg, a.tau_max, a.velocity.step)?;
    emit(a.out.out.as_deref(), &io::write_trajectory_csv(&io::trajectory_rows(&traj)))?;
    eprintln!(
        "samples={} tau_end={} speed_drift={:e} truncated={}",
        traj.samples.len(),
        traj.tau_max(),
        traj.speed_drift,
        traj.truncated
    );
    Ok(())
}

fn compute_series(a: &SeriesArgs) -> CliResult<CorrelationSeries> {
    let spec = load_model(&a.model)?;
    let schedule: RSchedule = io::parse_schedule_json(&read_input(&a.schedule)?)?;
    let battery: Vec<TestFunction> = io::parse_battery_json(&read_input(&a.battery)?)?;
    let taus = tau_grid(a.tau_max, a.n_tau)?;
    let id = file_stem(&a.battery);
    let series = match a.path {
        PathKind::Fixed => correlation_series(&battery, &spec.theta, &spec.cfg, &schedule, &taus, a.order, &id)?,
        PathKind::Geodesic => {
            let traj = integrate_geodesic(&initial_state(&spec, &a.velocity)?, &spec.cfg, a.tau_max, a.velocity.step)?;
            if traj.truncated {
                return Err(CliError::Numerical(format!(
                    "geodesic left the manifold at tau = {} before tau_max = {}",
                    traj.tau_max(),
                    a.tau_max
                )));
            }
            let path: &dyn MacroPath = &traj;
            correlation_series(&battery, path, &spec.cfg, &schedule, &taus, a.order, &id)?
        }
    };
    Ok(series)
}

fn cmd_correlate(a: &CorrelateArgs) -> CliResult<()> {
    let series = compute_series(&a.series)?;
    emit(a.out.out.as_deref(), &io::write_correlation_csv(&series))
}

fn cmd_classify(a: &ClassifyArgs) -> CliResult<()> {
    let series = compute_series(&a.series)?;
    let opts = ClassifyOptions {
        eps_b: a.eps_b,
        eps_m: a.eps_m,
        eps_e: a.eps_e,
        tail_fraction: a.tail_fraction,
    };
    let verdict = classify(&series, &opts)?;
    let level = verdict.level;
    let report = VerdictReport {
        battery_id: series.battery_id.clone(),
        verdict,
    };
    let csv = io::write_correlation_csv(&series);
    let json = io::to_json(&report);
    if let Some(p) = &a.series_out {
        write_atomic(p, &csv)?;
    }
    emit(a.verdict_out.as_deref(), &json)?;
    eprintln!("level={level:?}");
    Ok(())
}

fn cmd_fcurve(a: &FcurveArgs) -> CliResult<()> {
    let method = match a.method {
        MethodArg::Closed => CurveMethod::Closed,
        MethodArg::Bruteforce => CurveMethod::Bruteforce,
        MethodArg::Both => CurveMethod::Both,
    };
    let opts = BruteforceOptions {
        standardized_resolution: a.resolution,
        ..Default::default()
    };
    let rows = f_curve(a.r_min, a.r_max, a.n, method, &opts)?;
    emit(a.out.out.as_deref(), &io::write_fcurve_csv(&rows))?;
    if matches!(a.method, MethodArg::Both) {
        let conv: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.ratio)
            .map(|q| q / (2.0 * std::f64::consts::PI))
            .collect();
        let min = conv.iter().copied().fold(f64::INFINITY, f64::min);
        let max = conv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        eprintln!("convention_ratio min={min:.12} max={max:.12} rows_with_ratio={}", conv.len());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoundCheckOutput {
    batteries: usize,
    evaluations: usize,
    product_norm_violations: usize,
    paper_norm_violations: usize,
    reports: Vec<BoundReport>,
}

fn cmd_bound_check(a: &BoundCheckArgs) -> CliResult<()> {
    let spec = load_model(&a.model)?;
    let batteries: Vec<(String, Vec<TestFunction>)> = match (&a.battery, a.random) {
        (Some(path), None) => vec![(file_stem(path), io::parse_battery_json(&read_input(path)?)?)],
        (None, Some(n)) if n > 0 => random_batteries(n, a.seed, true)
            .into_iter()
            .enumerate()
            .map(|(i, b)| (format!("random-{}-{i}", a.seed), b.to_vec()))
            .collect(),
        _ => return Err(CliError::Usage("give either --battery FILE or --random N (N > 0)".into())),
    };
    let table = raw_f_table(&spec.theta, &spec.cfg, &a.r_values, &BruteforceOptions::default())?;
    let mut reports = Vec::new();
    for (id, fs) in &batteries {
        reports.extend(bound_check(fs, id, &spec.theta, &spec.cfg, &a.r_values, &|r| lookup_f(&table, r), a.order)?);
    }
    let out = BoundCheckOutput {
        batteries: batteries.len(),
        evaluations: reports.len(),
        product_norm_violations: reports.iter().filter(|r| !r.product_satisfied).count(),
        paper_norm_violations: reports.iter().filter(|r| !r.paper_satisfied).count(),
        reports,
    };
    eprintln!(
        "evaluations={} product_norm_violations={} paper_norm_violations={}",
        out.evaluations, out.product_norm_violations, out.paper_norm_violations
    );
    emit(a.out.out.as_deref(), &io::to_json(&out))
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let spec = load_model(&a.model)?;
    let report = verify_constraints(&spec.theta, &spec.cfg, a.tol)?;
    emit(a.out.out.as_deref(), &io::to_json(&report))?;
    if report.all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Numerical(format!("constraints violated: {}", failed.join(", "))))
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Geometry(a) => cmd_geometry(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Fcurve(a) => cmd_fcurve(a),
        Command::BoundCheck(a) => cmd_bound_check(a),
        Command::VerifyConstraints(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
