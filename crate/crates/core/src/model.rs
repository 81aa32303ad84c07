//! The 2D correlated Gaussian model over the 2×2 matrix elements.
//!
//! `(H11, H22)` is bivariate normal with mean `(mu, 0)`, variances
//! `(sigma^2, Sigma^4 / sigma^2)` and correlation `r`; `H12` and `H21` are
//! independent `N(0, sigma^2)`. Only `(mu, sigma)` are macrovariables; `Sigma`
//! and `r` are external parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gauss_hermite_rule, gaussian_expectation, DEFAULT_ORDER_2D, DEFAULT_ORDER_4D};

/// Largest admissible `|r|`; the density is singular at `|r| = 1`.
pub const R_MAX: f64 = 1.0 - 1e-6;

/// A point `(mu, sigma)` of the statistical manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroPoint {
    pub mu: f64,
    pub sigma: f64,
}

impl MacroPoint {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::Invariant(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Invariant(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// External parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// The constant `Sigma` fixing `E[H22^2] = Sigma^4 / sigma^2`.
    pub big_sigma: f64,
    /// Correlation coefficient between `H11` and `H22`.
    pub r: f64,
    /// Collapse `H21 ≡ H12` (symmetric matrices, 3-variable microspace).
    pub symmetric: bool,
}

impl ModelConfig {
    pub fn new(big_sigma: f64, r: f64) -> Result<Self> {
        let c = Self {
            big_sigma,
            r,
            symmetric: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn symmetric(mut self, yes: bool) -> Self {
        self.symmetric = yes;
        self
    }

    /// Same configuration with a different correlation coefficient.
    pub fn with_r(self, r: f64) -> Result<Self> {
        let c = Self { r, ..self };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.big_sigma > 0.0) || !self.big_sigma.is_finite() {
            return Err(Error::Invariant(format!("Sigma must be positive, got {}", self.big_sigma)));
        }
        if !self.r.is_finite() || self.r.abs() > R_MAX {
            return Err(Error::Invariant(format!("|r| must be at most {R_MAX}, got {}", self.r)));
        }
        Ok(())
    }
}

/// A point `(H11, H22, H12, H21)` of the microspace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MicroPoint {
    pub h11: f64,
    pub h22: f64,
    pub h12: f64,
    pub h21: f64,
}

impl MicroPoint {
    pub fn new(h11: f64, h22: f64, h12: f64, h21: f64) -> Self {
        Self { h11, h22, h12, h21 }
    }

    pub fn get(&self, v: Variable) -> f64 {
        match v {
            Variable::H11 => self.h11,
            Variable::H22 => self.h22,
            Variable::H12 => self.h12,
            Variable::H21 => self.h21,
        }
    }
}

/// Microvariables, indexed 1..=4 as `H11, H22, H12, H21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    H11,
    H22,
    H12,
    H21,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::H11, Variable::H22, Variable::H12, Variable::H21];

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Variable::H11),
            2 => Ok(Variable::H22),
            3 => Ok(Variable::H12),
            4 => Ok(Variable::H21),
            _ => Err(Error::InvalidArgument(format!("variable index must be 1..=4, got {i}"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Variable::H11 => 1,
            Variable::H22 => 2,
            Variable::H12 => 3,
            Variable::H21 => 4,
        }
    }

    /// Mean and variance of the marginal of this variable.
    pub fn marginal_moments(self, theta: &MacroPoint, cfg: &ModelConfig) -> (f64, f64) {
        let s2 = theta.sigma * theta.sigma;
        match self {
            Variable::H11 => (theta.mu, s2),
            Variable::H22 => (0.0, cfg.big_sigma.powi(4) / s2),
            Variable::H12 | Variable::H21 => (0.0, s2),
        }
    }
}

/// Which microvariables enter a likelihood or Fisher computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// The correlated `(H11, H22)` pair only.
    Bivariate,
    /// All microvariables.
    Full,
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
}

/// Quadratic form of the `(H11, H22)` factor, already divided by `2 (1 - r^2)`.
fn bivariate_quadratic(x: &MicroPoint, theta: &MacroPoint, cfg: &ModelConfig) -> f64 {
    let s2 = theta.sigma * theta.sigma;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let a = x.h11 - theta.mu;
    let r = cfg.r;
    (a * a / s2 + s2 * x.h22 * x.h22 / (b2 * b2) - 2.0 * r * a * x.h22 / b2) / (2.0 * (1.0 - r * r))
}

/// Log of the joint density restricted to `block`.
pub fn log_density(x: &MicroPoint, theta: &MacroPoint, cfg: &ModelConfig, block: Block) -> f64 {
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let r = cfg.r;
    let biv = -(2.0 * PI * b2 * (1.0 - r * r).sqrt()).ln() - bivariate_quadratic(x, theta, cfg);
    match block {
        Block::Bivariate => biv,
        Block::Full => {
            let s2 = theta.sigma * theta.sigma;
            if cfg.symmetric {
                biv - 0.5 * (2.0 * PI * s2).ln() - x.h12 * x.h12 / (2.0 * s2)
            } else {
                biv - (2.0 * PI * s2).ln() - (x.h12 * x.h12 + x.h21 * x.h21) / (2.0 * s2)
            }
        }
    }
}

/// Joint density of the microvariables.
///
/// With `cfg.symmetric` the density is over `(H11, H22, H12)` and `h21` is
/// ignored.
pub fn joint_density(x: &MicroPoint, theta: &MacroPoint, cfg: &ModelConfig) -> f64 {
    log_density(x, theta, cfg, Block::Full).exp()
}

/// Density of the `(H11, H22)` factor alone.
pub fn bivariate_density(h11: f64, h22: f64, theta: &MacroPoint, cfg: &ModelConfig) -> f64 {
    let x = MicroPoint::new(h11, h22, 0.0, 0.0);
    log_density(&x, theta, cfg, Block::Bivariate).exp()
}

/// Marginal density of one microvariable.
pub fn marginal_density(var: Variable, value: f64, theta: &MacroPoint, cfg: &ModelConfig) -> f64 {
    let (m, v) = var.marginal_moments(theta, cfg);
    normal_pdf(value, m, v)
}

/// Same as [`marginal_density`] with a 1-based variable index.
pub fn marginal_density_at(index: usize, value: f64, theta: &MacroPoint, cfg: &ModelConfig) -> Result<f64> {
    Ok(marginal_density(Variable::from_index(index)?, value, theta, cfg))
}

/// Lower Cholesky factor of the `(H11, H22)` covariance.
pub fn bivariate_factor(theta: &MacroPoint, cfg: &ModelConfig) -> DMatrix<f64> {
    let s = theta.sigma;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let r = cfg.r;
    DMatrix::from_row_slice(2, 2, &[s, 0.0, r * b2 / s, b2 / s * (1.0 - r * r).sqrt()])
}

/// Full 4×4 covariance in the order `(H11, H22, H12, H21)`; for the
/// symmetric reading `H21` is perfectly correlated with `H12`.
pub fn covariance(theta: &MacroPoint, cfg: &ModelConfig) -> Matrix4<f64> {
    let s2 = theta.sigma * theta.sigma;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let c34 = if cfg.symmetric { s2 } else { 0.0 };
    Matrix4::new(
        s2,
        cfg.r * b2,
        0.0,
        0.0,
        cfg.r * b2,
        b2 * b2 / s2,
        0.0,
        0.0,
        0.0,
        0.0,
        s2,
        c34,
        0.0,
        0.0,
        c34,
        s2,
    )
}

/// Tensor Gauss–Hermite expectation of `f` under the model.
///
/// Integrates over four independent axes, or three when `cfg.symmetric`
/// (with `h21` set equal to `h12`).
pub fn expectation<F>(f: F, theta: &MacroPoint, cfg: &ModelConfig, order: usize) -> Result<f64>
where
    F: Fn(&MicroPoint) -> f64,
{
    let rule = gauss_hermite_rule(order)?;
    let l2 = bivariate_factor(theta, cfg);
    let d = if cfg.symmetric { 3 } else { 4 };
    let mut l = DMatrix::zeros(d, d);
    l.view_mut((0, 0), (2, 2)).copy_from(&l2);
    for i in 2..d {
        l[(i, i)] = theta.sigma;
    }
    let mean = [theta.mu, 0.0, 0.0, 0.0];
    let symmetric = cfg.symmetric;
    gaussian_expectation(
        |u| {
            let h21 = if symmetric { u[2] } else { u[3] };
            f(&MicroPoint::new(u[0], u[1], u[2], h21))
        },
        &mean[..d],
        &l,
        &rule,
    )
}

/// Tensor Gauss–Hermite expectation over the `(H11, H22)` block only.
pub fn bivariate_expectation<F>(f: F, theta: &MacroPoint, cfg: &ModelConfig, order: usize) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let rule = gauss_hermite_rule(order)?;
    gaussian_expectation(|u| f(u[0], u[1]), &[theta.mu, 0.0], &bivariate_factor(theta, cfg), &rule)
}

/// Integral of the joint density over all microvariables except the
/// optionally pinned one, by importance-weighted Gauss–Hermite quadrature.
///
/// The reference Gaussian is the model's (conditional) Gaussian with its
/// covariance inflated by `1.1^2`; the integrand is [`joint_density`]
/// divided by the reference density, so the normalisation constant and the
/// marginals are checked independently of the closed-form moments.
pub fn integrate_density(
    theta: &MacroPoint,
    cfg: &ModelConfig,
    pinned: Option<(Variable, f64)>,
    order: usize,
) -> Result<f64> {
    const WIDEN: f64 = 1.1;
    let rule = gauss_hermite_rule(order)?;
    let s = theta.sigma;
    let s2 = s * s;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let r = cfg.r;
    let sd22 = b2 / s;

    // free axes with reference mean and lower-triangular factor rows
    let mut vars: Vec<Variable> = Vec::with_capacity(4);
    let mut mean: Vec<f64> = Vec::with_capacity(4);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(4);
    match pinned {
        Some((Variable::H11, h11)) => {
            vars.push(Variable::H22);
            mean.push(r * b2 * (h11 - theta.mu) / s2);
            rows.push(vec![sd22 * (1.0 - r * r).sqrt()]);
        }
        Some((Variable::H22, h22)) => {
            vars.push(Variable::H11);
            mean.push(theta.mu + r * s2 * h22 / b2);
            rows.push(vec![s * (1.0 - r * r).sqrt()]);
        }
        _ => {
            vars.extend([Variable::H11, Variable::H22]);
            mean.extend([theta.mu, 0.0]);
            let l = bivariate_factor(theta, cfg);
            rows.push(vec![l[(0, 0)]]);
            rows.push(vec![l[(1, 0)], l[(1, 1)]]);
        }
    }
    for v in [Variable::H12, Variable::H21] {
        if (cfg.symmetric && v == Variable::H21) || pinned.is_some_and(|(p, _)| p == v) {
            continue;
        }
        let d = vars.len();
        vars.push(v);
        mean.push(0.0);
        let mut row = vec![0.0; d + 1];
        row[d] = s;
        rows.push(row);
    }
    let d = vars.len();
    let mut l = DMatrix::zeros(d, d);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            l[(i, j)] = WIDEN * v;
        }
    }
    let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
    let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() - log_det;

    gaussian_expectation(
        |u| {
            // reference log-density via forward substitution
            let mut z = [0.0f64; 4];
            let mut quad = 0.0;
            for i in 0..d {
                let mut acc = u[i] - mean[i];
                for j in 0..i {
                    acc -= l[(i, j)] * z[j];
                }
                z[i] = acc / l[(i, i)];
                quad += z[i] * z[i];
            }
            let log_q = log_norm - 0.5 * quad;

            let mut x = MicroPoint::default();
            for (i, v) in vars.iter().enumerate() {
                set(&mut x, *v, u[i]);
            }
            if let Some((p, value)) = pinned {
                set(&mut x, p, value);
            }
            if cfg.symmetric {
                x.h21 = x.h12;
            }
            (log_density(&x, theta, cfg, Block::Full) - log_q).exp()
        },
        &mean,
        &l,
        &rule,
    )
}

fn set(x: &mut MicroPoint, v: Variable, value: f64) {
    match v {
        Variable::H11 => x.h11 = value,
        Variable::H22 => x.h22 = value,
        Variable::H12 => x.h12 = value,
        Variable::H21 => x.h21 = value,
    }
}

/// One checked moment constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub expected: f64,
    pub computed: f64,
    pub residual: f64,
    pub pass: bool,
}

/// Residuals of the MaxEnt moment constraints and the normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub tol: f64,
    pub checks: Vec<ConstraintCheck>,
    pub all_pass: bool,
}

/// Checks the nine moment constraints and the normalisation by quadrature.
pub fn verify_constraints(theta: &MacroPoint, cfg: &ModelConfig, tol: f64) -> Result<ConstraintReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    theta.validate()?;
    cfg.validate()?;
    let mu = theta.mu;
    let s2 = theta.sigma * theta.sigma;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    type Moment = fn(&MicroPoint, f64) -> f64;
    let moments: [(&str, Moment, f64); 9] = [
        ("E[H11]", |x, _| x.h11, mu),
        ("E[H12]", |x, _| x.h12, 0.0),
        ("E[H21]", |x, _| x.h21, 0.0),
        ("E[H22]", |x, _| x.h22, 0.0),
        ("E[(H11-mu)^2]", |x, mu| (x.h11 - mu).powi(2), s2),
        ("E[H12^2]", |x, _| x.h12 * x.h12, s2),
        ("E[H21^2]", |x, _| x.h21 * x.h21, s2),
        ("E[H22^2]", |x, _| x.h22 * x.h22, b2 * b2 / s2),
        ("E[(H11-mu)H22]", |x, mu| (x.h11 - mu) * x.h22, cfg.r * b2),
    ];
    let mut checks = Vec::with_capacity(10);
    for (name, f, expected) in moments {
        let computed = expectation(|x| f(x, mu), theta, cfg, DEFAULT_ORDER_4D)?;
        checks.push(check(name, expected, computed, tol));
    }
    let norm = integrate_density(theta, cfg, None, DEFAULT_ORDER_4D)?;
    checks.push(check("normalization", 1.0, norm, tol));
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ConstraintReport { tol, checks, all_pass })
}

fn check(name: &str, expected: f64, computed: f64, tol: f64) -> ConstraintCheck {
    let residual = (computed - expected).abs();
    ConstraintCheck {
        name: name.to_string(),
        expected,
        computed,
        residual,
        pass: residual < tol,
    }
}

/// `n` i.i.d. draws through the Cholesky factor of the covariance,
/// deterministic in `seed`.
pub fn sample(n: usize, theta: &MacroPoint, cfg: &ModelConfig, seed: u64) -> Result<Vec<MicroPoint>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    theta.validate()?;
    cfg.validate()?;
    // the symmetric covariance is singular; draw H12 once and copy it
    let mut cov = covariance(theta, cfg);
    if cfg.symmetric {
        cov[(2, 3)] = 0.0;
        cov[(3, 2)] = 0.0;
    }
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::Invariant("covariance is not positive definite".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = [theta.mu, 0.0, 0.0, 0.0];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let mut x = [0.0; 4];
        for i in 0..4 {
            x[i] = mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
        }
        let h21 = if cfg.symmetric { x[2] } else { x[3] };
        out.push(MicroPoint::new(x[0], x[1], x[2], h21));
    }
    Ok(out)
}

/// Analytic score `(d/dmu, d/dsigma) log p` restricted to `block`.
pub fn score_macro(x: &MicroPoint, theta: &MacroPoint, cfg: &ModelConfig, block: Block) -> [f64; 2] {
    let s = theta.sigma;
    let s2 = s * s;
    let b2 = cfg.big_sigma * cfg.big_sigma;
    let r = cfg.r;
    let one_m = 1.0 - r * r;
    let a = x.h11 - theta.mu;
    let d_mu = (a / s2 - r * x.h22 / b2) / one_m;
    let mut d_sigma = (a * a / (s2 * s) - s * x.h22 * x.h22 / (b2 * b2)) / one_m;
    if block == Block::Full {
        if cfg.symmetric {
            d_sigma += -1.0 / s + x.h12 * x.h12 / (s2 * s);
        } else {
            d_sigma += -2.0 / s + (x.h12 * x.h12 + x.h21 * x.h21) / (s2 * s);
        }
    }
    [d_mu, d_sigma]
}

/// Default quadrature order for expectations over `block`.
pub fn default_order(block: Block) -> usize {
    match block {
        Block::Bivariate => DEFAULT_ORDER_2D,
        Block::Full => DEFAULT_ORDER_4D,
    }
}
