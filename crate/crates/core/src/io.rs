//! File formats: model, schedule and battery JSON inputs; trajectory,
//! correlation and F-curve CSV tables; geometry and verdict JSON reports.
//!
//! CSV numbers are written with 17 significant digits so every value
//! survives a round trip through the parsers below bit for bit.

use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationEntry, CorrelationSeries, IgehVerdict, TestFunction, TestKind};
use crate::distinguishability::FCurveRow;
use crate::dynamics::{RSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{christoffel, fisher_metric_analytic, fisher_metric_numeric, paper_literal_metric, ricci, Mode};
use crate::model::{Block, MacroPoint, ModelConfig, Variable};

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

/// Formats a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: column {column}: not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: column {column}: non-finite value {field:?}")));
    }
    Ok(v)
}

// ---------------------------------------------------------------- model JSON

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    mu: f64,
    sigma: f64,
    #[serde(rename = "Sigma")]
    big_sigma: f64,
    r: f64,
    #[serde(default)]
    symmetric: bool,
}

/// A parsed model file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub theta: MacroPoint,
    pub cfg: ModelConfig,
}

/// Parses `{"mu", "sigma", "Sigma", "r", "symmetric"?}`. Malformed text and
/// unknown keys give [`Error::Parse`]; values breaking a model invariant give
/// [`Error::Invariant`].
pub fn parse_model_json(text: &str) -> Result<ModelSpec> {
    let raw: ModelFile = serde_json::from_str(text).map_err(parse_err)?;
    let theta = MacroPoint::new(raw.mu, raw.sigma)?;
    let cfg = ModelConfig::new(raw.big_sigma, raw.r)?.symmetric(raw.symmetric);
    Ok(ModelSpec { theta, cfg })
}

pub fn model_to_json(spec: &ModelSpec) -> String {
    let raw = ModelFile {
        mu: spec.theta.mu,
        sigma: spec.theta.sigma,
        big_sigma: spec.cfg.big_sigma,
        r: spec.cfg.r,
        symmetric: spec.cfg.symmetric,
    };
    serde_json::to_string_pretty(&raw).expect("plain struct serializes")
}

// ------------------------------------------------------------- schedule JSON

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    kind: String,
    r0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

/// Parses `{"kind": "constant"|"expdecay"|"dampedosc", "r0", "lambda", "alpha"}`.
/// `expdecay` requires `lambda`; `dampedosc` requires `alpha` and defaults
/// `lambda` to 0.
pub fn parse_schedule_json(text: &str) -> Result<RSchedule> {
    let raw: ScheduleFile = serde_json::from_str(text).map_err(parse_err)?;
    let missing = |key: &str| Error::Parse(format!("schedule kind {:?} requires {key:?}", raw.kind));
    let schedule = match raw.kind.as_str() {
        "constant" => RSchedule::Constant { r0: raw.r0 },
        "expdecay" => RSchedule::ExpDecay {
            r0: raw.r0,
            lambda: raw.lambda.ok_or_else(|| missing("lambda"))?,
        },
        "dampedosc" => RSchedule::DampedOscillation {
            r0: raw.r0,
            alpha: raw.alpha.ok_or_else(|| missing("alpha"))?,
            lambda: raw.lambda.unwrap_or(0.0),
        },
        other => {
            return Err(Error::Parse(format!(
                "unknown schedule kind {other:?}; expected constant, expdecay or dampedosc"
            )))
        }
    };
    schedule.validate()?;
    Ok(schedule)
}

pub fn schedule_to_json(s: &RSchedule) -> String {
    let raw = match *s {
        RSchedule::Constant { r0 } => ScheduleFile { kind: "constant".into(), r0, lambda: None, alpha: None },
        RSchedule::ExpDecay { r0, lambda } => ScheduleFile { kind: "expdecay".into(), r0, lambda: Some(lambda), alpha: None },
        RSchedule::DampedOscillation { r0, alpha, lambda } => ScheduleFile {
            kind: "dampedosc".into(),
            r0,
            lambda: Some(lambda),
            alpha: Some(alpha),
        },
    };
    serde_json::to_string_pretty(&raw).expect("plain struct serializes")
}

// -------------------------------------------------------------- battery JSON

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BatteryEntry {
    var: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
}

impl BatteryEntry {
    fn into_function(self) -> Result<TestFunction> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Parse(format!("test function kind {:?} requires {key:?}", self.kind)))
        };
        let kind = match self.kind.as_str() {
            "identity" => TestKind::Identity,
            "one" => TestKind::One,
            "cosine" => TestKind::Cosine { omega: need(self.omega, "omega")? },
            "gaussbump" => TestKind::GaussBump {
                a: need(self.a, "a")?,
                s: need(self.s, "s")?,
            },
            "indicator" => TestKind::Indicator {
                a: need(self.a, "a")?,
                b: need(self.b, "b")?,
            },
            other => {
                return Err(Error::Parse(format!(
                    "unknown test function kind {other:?}; expected identity, cosine, gaussbump, indicator or one"
                )))
            }
        };
        TestFunction::new(Variable::from_index(self.var)?, kind)
    }

    fn from_function(f: &TestFunction) -> Self {
        let mut e = BatteryEntry {
            var: f.var.index(),
            kind: String::new(),
            omega: None,
            a: None,
            s: None,
            b: None,
        };
        e.kind = match f.kind {
            TestKind::Identity => "identity",
            TestKind::One => "one",
            TestKind::Cosine { omega } => {
                e.omega = Some(omega);
                "cosine"
            }
            TestKind::GaussBump { a, s } => {
                e.a = Some(a);
                e.s = Some(s);
                "gaussbump"
            }
            TestKind::Indicator { a, b } => {
                e.a = Some(a);
                e.b = Some(b);
                "indicator"
            }
        }
        .into();
        e
    }
}

/// Parses a list of four `{"var": 1..4, "kind": ..., parameters}` entries,
/// one per microvariable.
pub fn parse_battery_json(text: &str) -> Result<Vec<TestFunction>> {
    let raw: Vec<BatteryEntry> = serde_json::from_str(text).map_err(parse_err)?;
    let fs = raw.into_iter().map(BatteryEntry::into_function).collect::<Result<Vec<_>>>()?;
    crate::correlation::arrange_battery(&fs)?;
    Ok(fs)
}

pub fn battery_to_json(fs: &[TestFunction]) -> String {
    let raw: Vec<BatteryEntry> = fs.iter().map(BatteryEntry::from_function).collect();
    serde_json::to_string_pretty(&raw).expect("plain struct serializes")
}

// ------------------------------------------------------------------- CSV I/O

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer flushes");
    String::from_utf8(bytes).expect("CSV built from ASCII fields")
}

/// Reads a CSV table with exactly the given header, returning each data row
/// as optional numbers (empty fields are `None`).
fn read_table(text: &str, header: &[&str]) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(parse_err)?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header {:?}, found {:?}",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("line {line}: expected {} fields, found {}", header.len(), rec.len())));
        }
        let row = rec
            .iter()
            .zip(header)
            .map(|(field, col)| {
                if field.trim().is_empty() {
                    Ok(None)
                } else {
                    parse_f64(field, col, line).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn required(row: &[Option<f64>], header: &[&str], line: usize) -> Result<Vec<f64>> {
    row.iter()
        .zip(header)
        .map(|(v, col)| v.ok_or_else(|| Error::Parse(format!("line {line}: column {col} is empty"))))
        .collect()
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["tau", "mu", "sigma", "mu_dot", "sigma_dot", "speed"];
pub const CORRELATION_HEADER: [&str; 3] = ["tau", "r", "C"];
pub const FCURVE_HEADER: [&str; 6] = ["r", "F_closed", "F_bruteforce", "ratio", "argmax_a1", "argmax_a2"];

/// One row of the trajectory table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub tau: f64,
    pub mu: f64,
    pub sigma: f64,
    pub mu_dot: f64,
    pub sigma_dot: f64,
    pub speed: f64,
}

pub fn trajectory_rows(t: &Trajectory) -> Vec<TrajectoryRow> {
    t.samples
        .iter()
        .map(|s| TrajectoryRow {
            tau: s.tau,
            mu: s.state.theta.mu,
            sigma: s.state.theta.sigma,
            mu_dot: s.state.velocity[0],
            sigma_dot: s.state.velocity[1],
            speed: s.speed,
        })
        .collect()
}

pub fn write_trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut w = csv_writer();
    w.write_record(TRAJECTORY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([r.tau, r.mu, r.sigma, r.mu_dot, r.sigma_dot, r.speed].map(fmt_f64))
            .expect("in-memory write");
    }
    finish(w)
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    read_table(text, &TRAJECTORY_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let v = required(row, &TRAJECTORY_HEADER, i + 2)?;
            Ok(TrajectoryRow {
                tau: v[0],
                mu: v[1],
                sigma: v[2],
                mu_dot: v[3],
                sigma_dot: v[4],
                speed: v[5],
            })
        })
        .collect()
}

pub fn write_correlation_csv(series: &CorrelationSeries) -> String {
    let mut w = csv_writer();
    w.write_record(CORRELATION_HEADER).expect("in-memory write");
    for e in &series.entries {
        w.write_record([e.tau, e.r, e.c].map(fmt_f64)).expect("in-memory write");
    }
    finish(w)
}

/// Parses a `tau,r,C` table; `tau` must be strictly increasing.
pub fn parse_correlation_csv(text: &str, battery_id: &str) -> Result<CorrelationSeries> {
    let entries = read_table(text, &CORRELATION_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let v = required(row, &CORRELATION_HEADER, i + 2)?;
            Ok(CorrelationEntry { tau: v[0], r: v[1], c: v[2] })
        })
        .collect::<Result<Vec<_>>>()?;
    CorrelationSeries::new(battery_id, entries).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_fcurve_csv(rows: &[FCurveRow]) -> String {
    let mut w = csv_writer();
    w.write_record(FCURVE_HEADER).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            fmt_f64(r.r),
            opt(r.f_closed),
            opt(r.f_bruteforce),
            opt(r.ratio),
            opt(r.argmax_a1),
            opt(r.argmax_a2),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn parse_fcurve_csv(text: &str) -> Result<Vec<FCurveRow>> {
    read_table(text, &FCURVE_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let r = row[0].ok_or_else(|| Error::Parse(format!("line {}: column r is empty", i + 2)))?;
            Ok(FCurveRow {
                r,
                f_closed: row[1],
                f_bruteforce: row[2],
                ratio: row[3],
                argmax_a1: row[4],
                argmax_a2: row[5],
            })
        })
        .collect()
}

// ------------------------------------------------------------- JSON reports

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointJson {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicciJson {
    #[serde(rename = "R11")]
    pub r11: f64,
    #[serde(rename = "R12")]
    pub r12: f64,
    #[serde(rename = "R22")]
    pub r22: f64,
    #[serde(rename = "R")]
    pub scalar: f64,
}

/// Connection coefficients; `gamma[k][i][j]` with index 0 for `mu` and 1
/// for `sigma`. The named fields are the three independent non-zero ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelJson {
    pub gamma: [[[f64; 2]; 2]; 2],
    #[serde(rename = "G1_12")]
    pub mu_mu_sigma: f64,
    #[serde(rename = "G2_11")]
    pub sigma_mu_mu: f64,
    #[serde(rename = "G2_22")]
    pub sigma_sigma_sigma: f64,
}

/// Difference between the printed metric variant and the Fisher metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDiscrepancy {
    /// `g_literal / g_fisher`, elementwise on the diagonal (equals `sigma`).
    pub ratio_g11: f64,
    pub ratio_g22: f64,
    pub max_abs_difference: f64,
    /// True when the two variants agree to `1e-12` relative.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub at: PointJson,
    pub r: f64,
    #[serde(rename = "Sigma")]
    pub big_sigma: f64,
    pub block: Block,
    pub quadrature_order: usize,
    /// Fisher metric by quadrature of the score outer product.
    pub g: [[f64; 2]; 2],
    pub g_analytic: [[f64; 2]; 2],
    pub paper_literal_metric: [[f64; 2]; 2],
    pub metric_discrepancy: MetricDiscrepancy,
    pub christoffel: ChristoffelJson,
    pub christoffel_finite_difference: ChristoffelJson,
    pub ricci: RicciJson,
    pub ricci_finite_difference: RicciJson,
}

fn christoffel_json(theta: &MacroPoint, cfg: &ModelConfig, mode: Mode) -> Result<ChristoffelJson> {
    let c = christoffel(theta, cfg, mode)?;
    Ok(ChristoffelJson {
        gamma: c.gamma,
        mu_mu_sigma: c.get(0, 0, 1),
        sigma_mu_mu: c.get(1, 0, 0),
        sigma_sigma_sigma: c.get(1, 1, 1),
    })
}

fn ricci_json(theta: &MacroPoint, cfg: &ModelConfig, mode: Mode) -> Result<RicciJson> {
    let c = ricci(theta, cfg, mode)?;
    Ok(RicciJson {
        r11: c.r11,
        r12: c.r12,
        r22: c.r22,
        scalar: c.scalar,
    })
}

impl GeometryReport {
    pub fn build(theta: &MacroPoint, cfg: &ModelConfig, block: Block, order: usize) -> Result<Self> {
        let numeric = fisher_metric_numeric(theta, cfg, block, order)?;
        let analytic = fisher_metric_analytic(theta, cfg)?;
        let literal = paper_literal_metric(theta, cfg)?;
        let (ga, gl) = (analytic.matrix(), literal.matrix());
        let max_abs_difference = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (gl[i][j] - ga[i][j]).abs())
            .fold(0.0, f64::max);
        let scale = ga[0][0].abs().max(ga[1][1].abs());
        Ok(Self {
            at: PointJson { mu: theta.mu, sigma: theta.sigma },
            r: cfg.r,
            big_sigma: cfg.big_sigma,
            block,
            quadrature_order: order,
            g: numeric.matrix(),
            g_analytic: ga,
            paper_literal_metric: gl,
            metric_discrepancy: MetricDiscrepancy {
                ratio_g11: gl[0][0] / ga[0][0],
                ratio_g22: gl[1][1] / ga[1][1],
                max_abs_difference,
                agrees: max_abs_difference <= 1e-12 * scale,
            },
            christoffel: christoffel_json(theta, cfg, Mode::Analytic)?,
            christoffel_finite_difference: christoffel_json(theta, cfg, Mode::FiniteDifference)?,
            ricci: ricci_json(theta, cfg, Mode::Analytic)?,
            ricci_finite_difference: ricci_json(theta, cfg, Mode::FiniteDifference)?,
        })
    }
}

/// Verdict JSON: the classifier output tagged with its battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub battery_id: String,
    #[serde(flatten)]
    pub verdict: IgehVerdict,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn parse_geometry_report(text: &str) -> Result<GeometryReport> {
    serde_json::from_str(text).map_err(parse_err)
}

pub fn parse_verdict_report(text: &str) -> Result<VerdictReport> {
    serde_json::from_str(text).map_err(parse_err)
}
