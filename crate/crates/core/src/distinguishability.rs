//! Sup-norm distinguishability between the joint density and the product of
//! its marginals: closed form, brute-force maximization and the correlation
//! bound it implies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::correlation::{arrange_battery, ig_correlation, TestFunction};
use crate::error::{Error, Result};
use crate::model::{joint_density, marginal_density, MacroPoint, MicroPoint, ModelConfig, Variable, R_MAX};
use crate::numerics::{maximize, BoxDomain};

/// Closed-form distinguishability `|r| (sqrt(1-r^2)(1+|r|))^(-1-1/|r|)`,
/// extended continuously by `F(0) = 0`.
pub fn f_closed(r: f64) -> Result<f64> {
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::InvalidArgument(format!("closed form needs |r| < 1, got {r}")));
    }
    let a = r.abs();
    if a == 0.0 {
        return Ok(0.0);
    }
    let base = (1.0 - a * a).sqrt() * (1.0 + a);
    Ok(a * (-(1.0 + 1.0 / a) * base.ln()).exp())
}

/// Largest `|r|` for which the standardized difference has a stationary
/// point off the origin on the diagonal, the root of `(1-r)(1+r)^3 = 1`.
/// Beyond it the supremum sits at the origin.
pub fn diagonal_regime_limit() -> f64 {
    let g = |r: f64| (1.0 - r) * (1.0 + r).powi(3) - 1.0;
    let (mut lo, mut hi) = (0.5, 0.99);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Coordinates in which the sup-norm is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// Standardized bivariate block; scale-free.
    Standardized,
    /// The microvariables as they are, all four of them.
    Raw,
}

/// Grid and refinement settings for [`f_bruteforce`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteforceOptions {
    /// Half-width of the search box in standard deviations.
    pub half_width: f64,
    /// Points per axis of the standardized 2D grid.
    pub standardized_resolution: usize,
    /// Points per axis of the raw grid in `H11, H22, H12, H21` order.
    pub raw_resolution: [usize; 4],
    pub refine_iterations: usize,
}

impl Default for BruteforceOptions {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            standardized_resolution: 1200,
            raw_resolution: [161, 161, 5, 5],
            refine_iterations: 500,
        }
    }
}

impl BruteforceOptions {
    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("half width must be positive, got {}", self.half_width)));
        }
        if self.standardized_resolution < 3 || self.raw_resolution.iter().any(|&n| n < 3) {
            return Err(Error::InvalidArgument("grid resolution must be at least 3 per axis".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FResult {
    pub r: f64,
    #[serde(rename = "F_bruteforce")]
    pub f_bruteforce: f64,
    #[serde(rename = "F_closed_paper")]
    pub f_closed_paper: f64,
    /// `F_closed_paper / F_bruteforce`; standardized coordinates only.
    pub ratio: Option<f64>,
    /// `ratio / (2 pi)`; standardized coordinates only.
    pub convention_ratio: Option<f64>,
    /// Maximizer, in the coordinates named by `coordinates`.
    pub argmax: Vec<f64>,
    pub coordinates: Coordinates,
}

/// `|b(a1, a2; r) - phi(a1) phi(a2)|` for the standard bivariate normal `b`.
pub fn standardized_difference(a1: f64, a2: f64, r: f64) -> f64 {
    let one_m = 1.0 - r * r;
    let q = (a1 * a1 - 2.0 * r * a1 * a2 + a2 * a2) / one_m;
    let joint = (-0.5 * q).exp() / (2.0 * PI * one_m.sqrt());
    let product = (-0.5 * (a1 * a1 + a2 * a2)).exp() / (2.0 * PI);
    (joint - product).abs()
}

fn check_r(r: f64) -> Result<()> {
    if !r.is_finite() || r.abs() > R_MAX {
        return Err(Error::InvalidArgument(format!("|r| must not exceed {R_MAX}, got {r}")));
    }
    Ok(())
}

/// Brute-force `sup |p - prod p_i|` by grid scan plus refinement.
pub fn f_bruteforce(theta: &MacroPoint, cfg: &ModelConfig, coords: Coordinates, opts: &BruteforceOptions) -> Result<FResult> {
    check_r(cfg.r)?;
    opts.validate()?;
    let r = cfg.r;
    let closed = f_closed(r)?;
    match coords {
        Coordinates::Standardized => {
            let n = opts.standardized_resolution;
            let domain = BoxDomain::cube(2, opts.half_width)?;
            let m = maximize(|a| standardized_difference(a[0], a[1], r), &domain, &[n, n], opts.refine_iterations)?;
            let ratio = (m.value > 0.0).then(|| closed / m.value);
            Ok(FResult {
                r,
                f_bruteforce: m.value,
                f_closed_paper: closed,
                ratio,
                convention_ratio: ratio.map(|q| q / (2.0 * PI)),
                argmax: m.argmax,
                coordinates: coords,
            })
        }
        Coordinates::Raw => {
            theta.validate()?;
            cfg.validate()?;
            let hw = opts.half_width;
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            let dims = if cfg.symmetric { 3 } else { 4 };
            for v in &Variable::ALL[..dims] {
                let (mean, var) = v.marginal_moments(theta, cfg);
                lower.push(mean - hw * var.sqrt());
                upper.push(mean + hw * var.sqrt());
            }
            let domain = BoxDomain::new(lower, upper)?;
            let objective = |x: &[f64]| {
                let h21 = if cfg.symmetric { x[2] } else { x[3] };
                let point = MicroPoint::new(x[0], x[1], x[2], h21);
                let product: f64 = Variable::ALL[..dims]
                    .iter()
                    .map(|&v| marginal_density(v, point.get(v), theta, cfg))
                    .product();
                (joint_density(&point, theta, cfg) - product).abs()
            };
            let m = maximize(objective, &domain, &opts.raw_resolution[..dims], opts.refine_iterations)?;
            Ok(FResult {
                r,
                f_bruteforce: m.value,
                f_closed_paper: closed,
                ratio: None,
                convention_ratio: None,
                argmax: m.argmax,
                coordinates: coords,
            })
        }
    }
}

/// Which values an F-curve row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    Closed,
    Bruteforce,
    Both,
}

/// One row of the F-curve table; absent values are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FCurveRow {
    pub r: f64,
    #[serde(rename = "F_closed")]
    pub f_closed: Option<f64>,
    #[serde(rename = "F_bruteforce")]
    pub f_bruteforce: Option<f64>,
    pub ratio: Option<f64>,
    pub argmax_a1: Option<f64>,
    pub argmax_a2: Option<f64>,
}

/// `n` equally spaced correlation values on `[r_min, r_max]`, computed so
/// that a range symmetric about 0 gives exactly mirrored values.
pub fn r_grid(r_min: f64, r_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("curve needs at least 2 points, got {n}")));
    }
    if !(r_min > -1.0 && r_min < r_max && r_max < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "curve range needs -1 < r_min < r_max < 1, got [{r_min}, {r_max}]"
        )));
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let r = (r_min * (last - i as f64) + r_max * i as f64) / last;
            if r.abs() < 1e-15 {
                0.0
            } else {
                r
            }
        })
        .collect())
}

/// Standardized F-curve over a uniform grid of `r`.
pub fn f_curve(r_min: f64, r_max: f64, n: usize, method: CurveMethod, opts: &BruteforceOptions) -> Result<Vec<FCurveRow>> {
    let theta = MacroPoint::new(0.0, 1.0)?;
    let mut rows = Vec::with_capacity(n);
    for r in r_grid(r_min, r_max, n)? {
        let mut row = FCurveRow {
            r,
            f_closed: None,
            f_bruteforce: None,
            ratio: None,
            argmax_a1: None,
            argmax_a2: None,
        };
        if method != CurveMethod::Bruteforce {
            row.f_closed = Some(f_closed(r)?);
        }
        if method != CurveMethod::Closed {
            let res = f_bruteforce(&theta, &ModelConfig::new(1.0, r)?, Coordinates::Standardized, opts)?;
            row.f_bruteforce = Some(res.f_bruteforce);
            row.argmax_a1 = Some(res.argmax[0]);
            row.argmax_a2 = Some(res.argmax[1]);
            if method == CurveMethod::Both {
                row.ratio = res.ratio;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Raw-coordinate `F` from the standardized value: the `H11, H22` Jacobian
/// is `1/Sigma^2` and the off-diagonal factors peak at `1/(sqrt(2 pi) sigma)`
/// each.
pub fn raw_from_standardized(f_std: f64, theta: &MacroPoint, cfg: &ModelConfig) -> f64 {
    let peak = 1.0 / ((2.0 * PI).sqrt() * theta.sigma);
    let offdiag = if cfg.symmetric { peak } else { peak * peak };
    f_std / (cfg.big_sigma * cfg.big_sigma) * offdiag
}

/// Absolute allowance for quadrature rounding when comparing `|C|` to a bound.
pub const BOUND_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub battery_id: String,
    pub r: f64,
    #[serde(rename = "abs_C")]
    pub abs_c: f64,
    /// Raw-coordinate `F` used in both bounds.
    #[serde(rename = "F_raw")]
    pub f_raw: f64,
    /// `F * ||f1||_1 ||f2||_1 ||f3||_1 ||f4||_1`.
    pub bound_product_norms: f64,
    /// `F * ||f1||_inf ||f2||_inf ||f3||_inf ||f4||_1`.
    pub bound_paper_norms: f64,
    pub product_satisfied: bool,
    pub paper_satisfied: bool,
}

/// Evaluates `|C|` against both norm bounds at every `r` of the grid.
///
/// `f_raw_at` supplies the raw-coordinate `F` for a given `r`; callers can
/// cache it across batteries with [`raw_f_table`].
pub fn bound_check(
    battery: &[TestFunction],
    battery_id: &str,
    theta: &MacroPoint,
    cfg: &ModelConfig,
    r_values: &[f64],
    f_raw_at: &dyn Fn(f64) -> Result<f64>,
    order: usize,
) -> Result<Vec<BoundReport>> {
    if cfg.symmetric {
        return Err(Error::InvalidArgument(
            "norm bounds are defined for the four-variable density; disable the symmetric reading".into(),
        ));
    }
    let fs = arrange_battery(battery)?;
    for f in &fs {
        if !f.one_norm().is_finite() {
            return Err(Error::InvalidArgument(format!(
                "test function {:?} on {:?} has infinite one-norm; bounds need finite norms",
                f.kind, f.var
            )));
        }
    }
    let product_norms: f64 = fs.iter().map(|f| f.one_norm()).product();
    let paper_norms = fs[0].sup_norm() * fs[1].sup_norm() * fs[2].sup_norm() * fs[3].one_norm();
    let mut out = Vec::with_capacity(r_values.len());
    for &r in r_values {
        let c = cfg.with_r(r)?;
        let abs_c = ig_correlation(&fs, theta, &c, order)?.abs();
        let f_raw = f_raw_at(r)?;
        let a = f_raw * product_norms;
        let b = f_raw * paper_norms;
        out.push(BoundReport {
            battery_id: battery_id.to_string(),
            r,
            abs_c,
            f_raw,
            bound_product_norms: a,
            bound_paper_norms: b,
            product_satisfied: abs_c <= a + BOUND_SLACK,
            paper_satisfied: abs_c <= b + BOUND_SLACK,
        });
    }
    Ok(out)
}

/// Raw-coordinate `F` by 4D brute force for each `r`, as `(r, F)` pairs.
pub fn raw_f_table(theta: &MacroPoint, cfg: &ModelConfig, r_values: &[f64], opts: &BruteforceOptions) -> Result<Vec<(f64, f64)>> {
    r_values
        .iter()
        .map(|&r| Ok((r, f_bruteforce(theta, &cfg.with_r(r)?, Coordinates::Raw, opts)?.f_bruteforce)))
        .collect()
}

/// Looks `r` up in a table built by [`raw_f_table`].
pub fn lookup_f(table: &[(f64, f64)], r: f64) -> Result<f64> {
    table
        .iter()
        .find(|(q, _)| *q == r)
        .map(|&(_, f)| f)
        .ok_or_else(|| Error::InvalidArgument(format!("no raw F tabulated for r = {r}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::TestKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn std_f(r: f64) -> FResult {
        let theta = MacroPoint::new(0.0, 1.0).unwrap();
        f_bruteforce(&theta, &ModelConfig::new(1.0, r).unwrap(), Coordinates::Standardized, &BruteforceOptions::default())
            .unwrap()
    }

    /// Squared distance of the diagonal stationary point from the origin.
    fn diagonal_argmax_sq(r: f64) -> f64 {
        (1.0 + r) / r * ((1.0 - r * r).sqrt() * (1.0 + r)).ln()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(f_closed(0.0).unwrap(), 0.0);
        assert!((f_closed(0.5).unwrap() - 0.22809).abs() < 1e-4);
        let direct = 0.5 * (0.75f64.sqrt() * 1.5).powi(-3);
        assert!((f_closed(0.5).unwrap() - direct).abs() < 1e-15);
        assert!((f_closed(0.99).unwrap() - 12.724_739_450_230_82).abs() < 1e-12);
        assert!(f_closed(1.0).is_err());
        assert!(f_closed(-1.2).is_err());
        assert!(f_closed(f64::NAN).is_err());
    }

    #[test]
    fn closed_form_small_r_slope() {
        for r in [1e-4, 1e-5] {
            assert!((f_closed(r).unwrap() / r - (-1f64).exp()).abs() < 1e-3);
        }
    }

    #[test]
    fn closed_form_even_and_monotone() {
        let grid = r_grid(-0.99, 0.99, 199).unwrap();
        for (i, &r) in grid.iter().enumerate() {
            assert_eq!(grid[grid.len() - 1 - i], -r);
            assert_eq!(f_closed(r).unwrap(), f_closed(-r).unwrap());
        }
        let half: Vec<f64> = grid.iter().filter(|r| **r >= 0.0).map(|&r| f_closed(r).unwrap()).collect();
        assert!(half.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn standardized_example_at_half() {
        let res = std_f(0.5);
        assert!((res.f_bruteforce - 0.036_301_491_056_578_9).abs() < 1e-12, "{}", res.f_bruteforce);
        assert!((res.argmax[0] - res.argmax[1]).abs() < 1e-5);
        assert!((res.argmax[0].abs() - 0.886).abs() < 1e-3);
        let neg = std_f(-0.5);
        assert!((neg.f_bruteforce - res.f_bruteforce).abs() < 1e-9);
        assert!((neg.argmax[0] + neg.argmax[1]).abs() < 1e-5);
        assert!(std_f(0.0).f_bruteforce < 1e-12);
    }

    fn origin_value(r: f64) -> f64 {
        (1.0 / (1.0 - r * r).sqrt() - 1.0) / (2.0 * PI)
    }

    #[test]
    fn regime_limit_root() {
        let r = diagonal_regime_limit();
        assert!((r - 0.839_286_755_214_161).abs() < 1e-12);
        assert!(diagonal_argmax_sq(r - 1e-6) > 0.0 && diagonal_argmax_sq(r + 1e-6) < 0.0);
    }

    #[test]
    fn ratio_is_two_pi_inside_diagonal_regime() {
        for r in [0.1, 0.3, 0.5, 0.7, 0.8] {
            for s in [r, -r] {
                let q = std_f(s).ratio.unwrap();
                assert!((q / (2.0 * PI) - 1.0).abs() < 1e-9, "r={s}: {q}");
            }
        }
    }

    #[test]
    fn closed_form_overshoots_beyond_diagonal_regime() {
        for r in [0.85, 0.9, -0.9, 0.95] {
            let res = std_f(r);
            assert!((res.f_bruteforce - origin_value(r)).abs() < 1e-14, "r={r}: {} {} {:?}", res.f_bruteforce, origin_value(r), res.argmax);
            assert!(res.argmax.iter().all(|a| a.abs() < 1e-5), "r={r}: {:?}", res.argmax);
            assert!(res.convention_ratio.unwrap() > 1.0 + 1e-4);
        }
    }

    #[test]
    fn argmax_on_diagonal_matches_stationarity() {
        for r in [0.1, 0.3, 0.5, 0.7, 0.8] {
            let res = std_f(r);
            let (a1, a2) = (res.argmax[0], res.argmax[1]);
            assert!((a1 - a2).abs() < 1e-5, "r={r}: {a1} {a2}");
            let t2 = a1 * a2;
            assert!((t2 - diagonal_argmax_sq(r)).abs() < 1e-6, "r={r}: {t2} vs {}", diagonal_argmax_sq(r));
        }
    }

    #[test]
    fn standardized_value_ignores_scales() {
        let opts = BruteforceOptions {
            standardized_resolution: 301,
            ..Default::default()
        };
        let base = f_bruteforce(
            &MacroPoint::new(0.0, 1.0).unwrap(),
            &ModelConfig::new(1.0, 0.6).unwrap(),
            Coordinates::Standardized,
            &opts,
        )
        .unwrap()
        .f_bruteforce;
        for mu in [-2.0, 0.0, 3.0] {
            for sigma in [0.5, 1.0, 2.0] {
                for big in [0.5, 1.0, 2.0] {
                    let v = f_bruteforce(
                        &MacroPoint::new(mu, sigma).unwrap(),
                        &ModelConfig::new(big, 0.6).unwrap(),
                        Coordinates::Standardized,
                        &opts,
                    )
                    .unwrap()
                    .f_bruteforce;
                    assert_eq!(v, base);
                }
            }
        }
    }

    #[test]
    fn raw_value_scales_with_jacobian() {
        for (mu, sigma, big, r) in [(0.0, 1.0, 1.0, 0.5), (1.5, 2.0, 0.7, -0.8), (-1.0, 0.6, 1.8, 0.3)] {
            let theta = MacroPoint::new(mu, sigma).unwrap();
            let cfg = ModelConfig::new(big, r).unwrap();
            let raw = f_bruteforce(&theta, &cfg, Coordinates::Raw, &BruteforceOptions::default()).unwrap();
            let predicted = raw_from_standardized(std_f(r).f_bruteforce, &theta, &cfg);
            assert!((raw.f_bruteforce / predicted - 1.0).abs() < 1e-6, "{} vs {predicted}", raw.f_bruteforce);
            assert!(raw.ratio.is_none());
            let sym = cfg.symmetric(true);
            let raw = f_bruteforce(&theta, &sym, Coordinates::Raw, &BruteforceOptions::default()).unwrap();
            let predicted = raw_from_standardized(std_f(r).f_bruteforce, &theta, &sym);
            assert!((raw.f_bruteforce / predicted - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn curve_rows_follow_method() {
        let opts = BruteforceOptions {
            standardized_resolution: 201,
            ..Default::default()
        };
        let closed = f_curve(-0.9, 0.9, 5, CurveMethod::Closed, &opts).unwrap();
        assert!(closed.iter().all(|row| row.f_bruteforce.is_none() && row.f_closed.is_some()));
        assert_eq!(closed[2].r, 0.0);
        let both = f_curve(-0.9, 0.9, 5, CurveMethod::Both, &opts).unwrap();
        assert!(both[2].ratio.is_none());
        assert!(both[0].ratio.is_some() && both[0].argmax_a1.is_some());
        let bf = f_curve(-0.9, 0.9, 5, CurveMethod::Bruteforce, &opts).unwrap();
        assert!(bf.iter().all(|row| row.f_closed.is_none() && row.ratio.is_none()));
        assert!(f_curve(-0.9, 0.9, 1, CurveMethod::Closed, &opts).is_err());
        assert!(f_curve(0.5, 0.2, 4, CurveMethod::Closed, &opts).is_err());
        assert!(f_curve(-1.0, 0.2, 4, CurveMethod::Closed, &opts).is_err());
    }

    fn finite_kind(rng: &mut ChaCha8Rng) -> TestKind {
        if rng.random_bool(0.5) {
            TestKind::GaussBump {
                a: rng.random_range(-1.5..1.5),
                s: rng.random_range(0.2..1.5),
            }
        } else {
            let a = rng.random_range(-2.0..1.0);
            TestKind::Indicator {
                a,
                b: a + rng.random_range(0.1..2.5),
            }
        }
    }

    #[test]
    fn product_norm_bound_holds() {
        let theta = MacroPoint::new(0.2, 1.1).unwrap();
        let cfg = ModelConfig::new(0.9, 0.0).unwrap();
        let rs = [-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9];
        let table = raw_f_table(&theta, &cfg, &rs, &BruteforceOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for b in 0..50 {
            let fs: Vec<TestFunction> = Variable::ALL
                .iter()
                .map(|&v| TestFunction::new(v, finite_kind(&mut rng)).unwrap())
                .collect();
            let reports = bound_check(&fs, &format!("b{b}"), &theta, &cfg, &rs, &|r| lookup_f(&table, r), 16).unwrap();
            assert!(reports.iter().all(|rep| rep.product_satisfied), "{reports:?}");
        }
    }

    #[test]
    fn bound_check_examples() {
        let theta = MacroPoint::new(0.0, 1.0).unwrap();
        let cfg = ModelConfig::new(1.0, 0.0).unwrap();
        let f = |r: f64| Ok(raw_from_standardized(std_f(r).f_bruteforce, &theta, &cfg));
        let ones: Vec<_> = Variable::ALL.iter().map(|&v| TestFunction::new(v, TestKind::One).unwrap()).collect();
        let err = bound_check(&ones, "ones", &theta, &cfg, &[0.5], &f, 16).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(ref m) if m.contains("One")));

        let bumps: Vec<_> = Variable::ALL
            .iter()
            .map(|&v| TestFunction::new(v, TestKind::GaussBump { a: 0.0, s: 1.0 }).unwrap())
            .collect();
        let rep = &bound_check(&bumps, "bumps", &theta, &cfg, &[0.0], &f, 16).unwrap()[0];
        assert!(rep.abs_c < 1e-12 && rep.product_satisfied && rep.paper_satisfied);

        let boxes: Vec<_> = Variable::ALL
            .iter()
            .map(|&v| TestFunction::new(v, TestKind::Indicator { a: -1.0, b: 1.0 }).unwrap())
            .collect();
        let rep = &bound_check(&boxes, "boxes", &theta, &cfg, &[0.5], &f, 16).unwrap()[0];
        assert!(rep.abs_c > 0.0 && rep.product_satisfied);
        assert!(rep.bound_product_norms.is_finite() && rep.bound_paper_norms.is_finite());
        assert!(bound_check(&boxes, "boxes", &theta, &cfg.symmetric(true), &[0.5], &f, 16).is_err());
    }
}
