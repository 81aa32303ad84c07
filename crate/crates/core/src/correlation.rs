//! IG correlation between per-variable test functions and the IG
//! ergodic / mixing / Bernoulli classifier.
//!
//! The correlation of a battery `f_1(H11), f_2(H22), f_3(H12), f_4(H21)` is
//! `E[prod f_i] - prod E_i[f_i]`. Because `(H12, H21)` is independent of
//! `(H11, H22)`, the 4D integral factors into a 2D integral over the coupled
//! pair times 1D integrals. The 2D part is computed as an outer quadrature
//! over `H11` of the closed-form conditional expectation of `f_2(H22)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::dynamics::{RSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::model::{sample, MacroPoint, ModelConfig, Variable};
use crate::numerics::{gauss_hermite_rule, gauss_legendre_rule, integrate_interval};

/// Default quadrature order for correlation integrals.
pub const DEFAULT_ORDER: usize = 16;

/// Order of the Gauss–Legendre rule used on indicator supports.
const INTERVAL_ORDER: usize = 96;

/// Half-width, in standard deviations, beyond which Gaussian mass is dropped.
const TAIL_SDS: f64 = 12.0;

/// The closed family of test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    /// `f(x) = x`.
    Identity,
    /// `f(x) = cos(omega x)`.
    Cosine { omega: f64 },
    /// `f(x) = exp(-(x - a)^2 / (2 s^2))`.
    GaussBump { a: f64, s: f64 },
    /// `f(x) = 1` on `[a, b]`, else 0.
    Indicator { a: f64, b: f64 },
    /// `f(x) = 1`.
    One,
}

impl TestKind {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestKind::Identity => x,
            TestKind::Cosine { omega } => (omega * x).cos(),
            TestKind::GaussBump { a, s } => (-(x - a) * (x - a) / (2.0 * s * s)).exp(),
            TestKind::Indicator { a, b } => {
                if (a..=b).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            TestKind::One => 1.0,
        }
    }

    /// `||f||_1`; infinite for functions that are not integrable.
    pub fn one_norm(&self) -> f64 {
        match *self {
            TestKind::GaussBump { s, .. } => s * (2.0 * PI).sqrt(),
            TestKind::Indicator { a, b } => b - a,
            TestKind::Identity | TestKind::Cosine { .. } | TestKind::One => f64::INFINITY,
        }
    }

    /// `||f||_inf`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestKind::Identity => f64::INFINITY,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TestKind::Cosine { omega } if !omega.is_finite() => {
                Err(Error::InvalidArgument(format!("cosine frequency must be finite, got {omega}")))
            }
            TestKind::GaussBump { a, s } if !a.is_finite() || !(s > 0.0) || !s.is_finite() => Err(
                Error::InvalidArgument(format!("gauss bump needs finite centre and positive width, got a={a}, s={s}")),
            ),
            TestKind::Indicator { a, b } if !a.is_finite() || !b.is_finite() || !(a < b) => {
                Err(Error::InvalidArgument(format!("indicator needs finite a < b, got [{a}, {b}]")))
            }
            _ => Ok(()),
        }
    }

    /// `E[f(X)]` for `X ~ N(mean, var)` in closed form.
    pub fn gaussian_mean(&self, mean: f64, var: f64) -> f64 {
        match *self {
            TestKind::Identity => mean,
            TestKind::Cosine { omega } => (-0.5 * omega * omega * var).exp() * (omega * mean).cos(),
            TestKind::GaussBump { a, s } => {
                let t = s * s + var;
                s / t.sqrt() * (-(mean - a) * (mean - a) / (2.0 * t)).exp()
            }
            TestKind::Indicator { a, b } => {
                let sd = var.sqrt();
                normal_interval_mass((a - mean) / sd, (b - mean) / sd)
            }
            TestKind::One => 1.0,
        }
    }
}

/// `P(za <= Z <= zb)` for standard normal `Z`, evaluated on the tail that
/// avoids cancellation.
fn normal_interval_mass(za: f64, zb: f64) -> f64 {
    let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    if za >= 0.0 {
        upper(za) - upper(zb)
    } else if zb <= 0.0 {
        upper(-zb) - upper(-za)
    } else {
        1.0 - upper(-za) - upper(zb)
    }
}

/// A test function attached to one microvariable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub var: Variable,
    #[serde(flatten)]
    pub kind: TestKind,
}

impl TestFunction {
    pub fn new(var: Variable, kind: TestKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self { var, kind })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.kind.eval(x)
    }

    pub fn one_norm(&self) -> f64 {
        self.kind.one_norm()
    }

    pub fn sup_norm(&self) -> f64 {
        self.kind.sup_norm()
    }

    /// True when either declared norm is infinite.
    pub fn is_unbounded(&self) -> bool {
        !self.one_norm().is_finite() || !self.sup_norm().is_finite()
    }
}

/// Sorts a battery into `[H11, H22, H12, H21]` order, checking that each
/// variable appears exactly once.
pub fn arrange_battery(fs: &[TestFunction]) -> Result<[TestFunction; 4]> {
    if fs.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "a battery needs one test function per microvariable (4), got {}",
            fs.len()
        )));
    }
    let mut slots: [Option<TestFunction>; 4] = [None; 4];
    for f in fs {
        f.kind.validate()?;
        let slot = &mut slots[f.var.index() - 1];
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!("variable {:?} appears twice in the battery", f.var)));
        }
        *slot = Some(*f);
    }
    // four distinct variables out of four fill every slot
    Ok(slots.map(|s| s.expect("every variable present")))
}

/// `E[prod(drivers)(X) * g(X)]` for `X ~ N(mean, var)` with `g` smooth.
///
/// Gaussian bumps are folded into the Gaussian weight and indicators restrict
/// the integration interval, so the remaining integrand is smooth: Gauss–
/// Hermite is used on the real line and Gauss–Legendre on bounded supports.
fn weighted_expectation<G>(drivers: &[TestKind], mean: f64, var: f64, g: G, order: usize) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (mut m, mut v, mut scale) = (mean, var, 1.0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut smooth: Vec<TestKind> = Vec::new();
    for d in drivers {
        match *d {
            TestKind::GaussBump { a, s } => {
                let s2 = s * s;
                let t = s2 + v;
                scale *= s / t.sqrt() * (-(m - a) * (m - a) / (2.0 * t)).exp();
                m = (m * s2 + a * v) / t;
                v = v * s2 / t;
            }
            TestKind::Indicator { a, b } => {
                lo = lo.max(a);
                hi = hi.min(b);
            }
            TestKind::One => {}
            other => smooth.push(other),
        }
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let integrand = |x: f64| smooth.iter().map(|f| f.eval(x)).product::<f64>() * g(x);
    let sd = v.sqrt();
    if lo.is_finite() || hi.is_finite() {
        let a = lo.max(m - TAIL_SDS * sd);
        let b = hi.min(m + TAIL_SDS * sd);
        if !(a < b) {
            return Ok(0.0);
        }
        let rule = gauss_legendre_rule(INTERVAL_ORDER)?;
        let norm = 1.0 / (2.0 * PI * v).sqrt();
        let val = integrate_interval(&rule, a, b, |x| norm * (-(x - m) * (x - m) / (2.0 * v)).exp() * integrand(x));
        return finite(scale * val, &[mean, var]);
    }
    let rule = gauss_hermite_rule(order)?;
    let val = rule.apply(|u| integrand(m + std::f64::consts::SQRT_2 * sd * u)) / PI.sqrt();
    finite(scale * val, &[mean, var])
}

fn finite(v: f64, at: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain("non-finite correlation integral", at))
    }
}

/// `(E[f1(H11) f2(H22)], E[f1(H11)], E[f2(H22)])`.
fn coupled_moments(
    f1: &TestKind,
    f2: &TestKind,
    theta: &MacroPoint,
    cfg: &ModelConfig,
    order: usize,
) -> Result<(f64, f64, f64)> {
    let s2 = theta.sigma * theta.sigma;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let r = cfg.r;
    let (m1, v1) = Variable::H11.marginal_moments(theta, cfg);
    let (m2, v2) = Variable::H22.marginal_moments(theta, cfg);
    let cond_var = b2 * b2 * (1.0 - r * r) / s2;
    let slope = r * b2 / s2;
    let joint = weighted_expectation(
        &[*f1],
        m1,
        v1,
        |x| f2.gaussian_mean(slope * (x - theta.mu), cond_var),
        order,
    )?;
    let e1 = weighted_expectation(&[*f1], m1, v1, |_| 1.0, order)?;
    let e2 = f2.gaussian_mean(m2, v2);
    Ok((joint, e1, e2))
}

/// IG correlation of a four-function battery at `(theta, cfg)`.
pub fn ig_correlation(fs: &[TestFunction], theta: &MacroPoint, cfg: &ModelConfig, order: usize) -> Result<f64> {
    theta.validate()?;
    cfg.validate()?;
    let [f1, f2, f3, f4] = arrange_battery(fs)?;
    let (joint12, e1, e2) = coupled_moments(&f1.kind, &f2.kind, theta, cfg, order)?;
    let s2 = theta.sigma * theta.sigma;
    let e3 = f3.kind.gaussian_mean(0.0, s2);
    let e4 = f4.kind.gaussian_mean(0.0, s2);
    if cfg.symmetric {
        let joint34 = weighted_expectation(&[f3.kind, f4.kind], 0.0, s2, |_| 1.0, order)?;
        finite(joint12 * joint34 - e1 * e2 * e3 * e4, &[theta.mu, theta.sigma])
    } else {
        finite((joint12 - e1 * e2) * e3 * e4, &[theta.mu, theta.sigma])
    }
}

/// IG correlation of the bivariate block, `E[f1(H11) f2(H22)] - E[f1] E[f2]`.
pub fn ig_correlation_pair(f11: &TestKind, f22: &TestKind, theta: &MacroPoint, cfg: &ModelConfig, order: usize) -> Result<f64> {
    theta.validate()?;
    cfg.validate()?;
    f11.validate()?;
    f22.validate()?;
    let (joint, e1, e2) = coupled_moments(f11, f22, theta, cfg, order)?;
    finite(joint - e1 * e2, &[theta.mu, theta.sigma])
}

/// Monte-Carlo estimate of the IG correlation with its standard error
/// (delta method on the product of sample means).
pub fn ig_correlation_monte_carlo(
    fs: &[TestFunction],
    theta: &MacroPoint,
    cfg: &ModelConfig,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let battery = arrange_battery(fs)?;
    let xs = sample(n, theta, cfg, seed)?;
    let nf = n as f64;
    let values: Vec<[f64; 4]> = xs
        .iter()
        .map(|x| std::array::from_fn(|i| battery[i].eval(x.get(battery[i].var))))
        .collect();
    let mut means = [0.0; 4];
    let mut joint = 0.0;
    for v in &values {
        for i in 0..4 {
            means[i] += v[i];
        }
        joint += v.iter().product::<f64>();
    }
    means.iter_mut().for_each(|m| *m /= nf);
    joint /= nf;
    let estimate = joint - means.iter().product::<f64>();
    // influence function of joint - prod(means)
    let others: [f64; 4] = std::array::from_fn(|i| (0..4).filter(|&j| j != i).map(|j| means[j]).product());
    let psi: Vec<f64> = values
        .iter()
        .map(|v| v.iter().product::<f64>() - (0..4).map(|i| others[i] * v[i]).sum::<f64>())
        .collect();
    let psi_mean = psi.iter().sum::<f64>() / nf;
    let var = psi.iter().map(|p| (p - psi_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok((estimate, (var / nf).sqrt()))
}

/// Source of the macrovariables along `tau`.
pub trait MacroPath {
    fn theta_at(&self, tau: f64) -> Result<MacroPoint>;
}

impl MacroPath for MacroPoint {
    fn theta_at(&self, _tau: f64) -> Result<MacroPoint> {
        Ok(*self)
    }
}

impl MacroPath for Trajectory {
    fn theta_at(&self, tau: f64) -> Result<MacroPoint> {
        Trajectory::theta_at(self, tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub tau: f64,
    pub r: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

/// Sampled `C(f_1..f_4, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub battery_id: String,
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationSeries {
    pub fn new(battery_id: impl Into<String>, entries: Vec<CorrelationEntry>) -> Result<Self> {
        if entries.windows(2).any(|w| !(w[0].tau < w[1].tau)) {
            return Err(Error::InvalidArgument("series tau values must be strictly increasing".into()));
        }
        Ok(Self {
            battery_id: battery_id.into(),
            entries,
        })
    }

    fn first_tau(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.tau)
    }

    fn last_tau(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.tau)
    }
}

/// `n` equally spaced points on `[0, tau_max]`.
pub fn tau_grid(tau_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(tau_max > 0.0) || !tau_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau grid needs at least 2 points and tau_max > 0 (got n={n}, tau_max={tau_max})"
        )));
    }
    Ok((0..n).map(|i| tau_max * i as f64 / (n - 1) as f64).collect())
}

/// Evaluates the IG correlation along `tau` with `r = schedule(tau)` and
/// `theta = path(tau)`.
pub fn correlation_series(
    fs: &[TestFunction],
    path: &dyn MacroPath,
    cfg: &ModelConfig,
    schedule: &RSchedule,
    taus: &[f64],
    order: usize,
    battery_id: &str,
) -> Result<CorrelationSeries> {
    if taus.len() < 2 {
        return Err(Error::InvalidArgument(format!("tau grid needs at least 2 points, got {}", taus.len())));
    }
    if taus.windows(2).any(|w| !(w[0] < w[1])) || taus[0] < 0.0 {
        return Err(Error::InvalidArgument("tau grid must be non-negative and strictly increasing".into()));
    }
    schedule.validate()?;
    arrange_battery(fs)?;
    let mut entries = Vec::with_capacity(taus.len());
    for &tau in taus {
        let r = schedule.at(tau);
        let c = ig_correlation(fs, &path.theta_at(tau)?, &cfg.with_r(r)?, order)?;
        entries.push(CorrelationEntry { tau, r, c });
    }
    CorrelationSeries::new(battery_id, entries)
}

/// Plain time average `(1/(T - tau_0)) int C dtau` by the trapezoid rule,
/// with linear interpolation at `T`.
pub fn time_average(series: &CorrelationSeries, t: f64) -> Result<f64> {
    let (start, end) = (series.first_tau(), series.last_tau());
    if series.entries.len() < 2 || !(t > start) || t > end {
        return Err(Error::InvalidArgument(format!(
            "averaging horizon {t} outside series range ({start}, {end}]"
        )));
    }
    let mut integral = 0.0;
    for w in series.entries.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.tau >= t {
            break;
        }
        if b.tau <= t {
            integral += 0.5 * (a.c + b.c) * (b.tau - a.tau);
        } else {
            let cb = a.c + (b.c - a.c) * (t - a.tau) / (b.tau - a.tau);
            integral += 0.5 * (a.c + cb) * (t - a.tau);
        }
    }
    Ok(integral / (t - start))
}

fn bump_weight(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (-1.0 / (x * (1.0 - x))).exp()
    }
}

/// Time average over `[tau_0, T]` weighted by the smooth bump
/// `exp(-1/(x(1-x)))`, `x = (tau - tau_0)/(T - tau_0)`.
///
/// It has the same limit as [`time_average`] whenever that limit exists, but
/// the oscillatory remainder of a zero-mean quasi-periodic signal decays
/// faster than any power of `T` instead of like `1/T`.
pub fn weighted_time_average(series: &CorrelationSeries, t: f64) -> Result<f64> {
    let (start, end) = (series.first_tau(), series.last_tau());
    if series.entries.len() < 2 || !(t > start) || t > end {
        return Err(Error::InvalidArgument(format!(
            "averaging horizon {t} outside series range ({start}, {end}]"
        )));
    }
    let span = t - start;
    let mut num = 0.0;
    let mut den = 0.0;
    for w in series.entries.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.tau > t {
            break;
        }
        let wa = bump_weight((a.tau - start) / span);
        let wb = bump_weight((b.tau - start) / span);
        let dt = b.tau - a.tau;
        num += 0.5 * (wa * a.c + wb * b.c) * dt;
        den += 0.5 * (wa + wb) * dt;
    }
    if !(den > 0.0) {
        return Err(Error::InsufficientData { needed: 3, got: series.entries.len() });
    }
    Ok(num / den)
}

/// Levels of the IG ergodic hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IgehLevel {
    Bernoulli,
    Mixing,
    Ergodic,
    Unclassified,
}

/// Finite-horizon tolerances for [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub eps_b: f64,
    pub eps_m: f64,
    pub eps_e: f64,
    pub tail_fraction: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            eps_b: 1e-9,
            eps_m: 1e-6,
            eps_e: 1e-6,
            tail_fraction: 0.2,
        }
    }
}

/// Which level criteria the series satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCriteria {
    pub bernoulli: bool,
    pub mixing: bool,
    pub ergodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgehVerdict {
    pub level: IgehLevel,
    #[serde(rename = "max_abs_C")]
    pub max_abs_c: f64,
    #[serde(rename = "tail_max_abs_C")]
    pub tail_max_abs_c: f64,
    /// Bump-weighted time average at the end of the series.
    pub time_avg: f64,
    /// Bump-weighted time average at a quarter of the horizon.
    pub time_avg_quarter: f64,
    /// Unweighted trapezoid time average at the end of the series.
    pub plain_time_avg: f64,
    pub criteria: LevelCriteria,
    pub tolerances: ClassifyOptions,
}

/// Classifies a correlation series.
///
/// - Bernoulli: `max |C| < eps_b` over the whole grid.
/// - Mixing: the maximum of `|C|` over the final `tail_fraction` of the
///   horizon is below `eps_m` and below a quarter of the global maximum.
/// - Ergodic: the bump-weighted time average at `T` is below `eps_e` and
///   below half its value at `T/4`.
///
/// A decay ratio counts as satisfied when the quantity is already below
/// `eps_b`, so a Bernoulli series also meets the other two criteria.
pub fn classify(series: &CorrelationSeries, opts: &ClassifyOptions) -> Result<IgehVerdict> {
    const MIN_POINTS: usize = 8;
    if series.entries.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: series.entries.len(),
        });
    }
    if !(opts.tail_fraction > 0.0 && opts.tail_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction must lie in (0, 1), got {}",
            opts.tail_fraction
        )));
    }
    if !(opts.eps_b > 0.0 && opts.eps_m > 0.0 && opts.eps_e > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let (start, end) = (series.first_tau(), series.last_tau());
    let max_abs = series.entries.iter().map(|e| e.c.abs()).fold(0.0, f64::max);
    let tail_start = end - opts.tail_fraction * (end - start);
    let tail_max = series
        .entries
        .iter()
        .filter(|e| e.tau >= tail_start)
        .map(|e| e.c.abs())
        .fold(0.0, f64::max);
    let quarter = start + 0.25 * (end - start);
    let avg_end = weighted_time_average(series, end)?;
    let avg_quarter = weighted_time_average(series, quarter)?;
    let plain = time_average(series, end)?;

    let bernoulli = max_abs < opts.eps_b;
    let mixing = tail_max < opts.eps_m && (tail_max < 0.25 * max_abs || tail_max < opts.eps_b);
    let ergodic = avg_end.abs() < opts.eps_e && (avg_end.abs() < 0.5 * avg_quarter.abs() || avg_end.abs() < opts.eps_b);

    let level = if bernoulli {
        IgehLevel::Bernoulli
    } else if mixing {
        IgehLevel::Mixing
    } else if ergodic {
        IgehLevel::Ergodic
    } else {
        IgehLevel::Unclassified
    };
    Ok(IgehVerdict {
        level,
        max_abs_c: max_abs,
        tail_max_abs_c: tail_max,
        time_avg: avg_end,
        time_avg_quarter: avg_quarter,
        plain_time_avg: plain,
        criteria: LevelCriteria { bernoulli, mixing, ergodic },
        tolerances: *opts,
    })
}

/// The covariance battery `Identity(H11), Identity(H22), One, One`, whose
/// correlation is `r Sigma^2`.
pub fn covariance_battery() -> [TestFunction; 4] {
    [
        TestFunction { var: Variable::H11, kind: TestKind::Identity },
        TestFunction { var: Variable::H22, kind: TestKind::Identity },
        TestFunction { var: Variable::H12, kind: TestKind::One },
        TestFunction { var: Variable::H21, kind: TestKind::One },
    ]
}

/// `count` seeded random batteries. With `finite_norms` every function has
/// finite one- and sup-norms (bumps and indicators only); otherwise all five
/// kinds are drawn.
pub fn random_batteries(count: usize, seed: u64, finite_norms: bool) -> Vec<[TestFunction; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> TestKind {
        let pick = if finite_norms { rng.random_range(2..4) } else { rng.random_range(0..5) };
        match pick {
            0 => TestKind::Identity,
            1 => TestKind::Cosine { omega: rng.random_range(0.2..2.0) },
            2 => TestKind::GaussBump {
                a: rng.random_range(-1.5..1.5),
                s: rng.random_range(0.2..1.5),
            },
            3 => {
                let a = rng.random_range(-2.0..1.0);
                TestKind::Indicator { a, b: a + rng.random_range(0.1..2.5) }
            }
            _ => TestKind::One,
        }
    };
    (0..count)
        .map(|_| Variable::ALL.map(|var| TestFunction { var, kind: draw(&mut rng) }))
        .collect()
}
