//! Fisher–Rao geometry of the `(mu, sigma)` manifold.
//!
//! On the bivariate block the metric is
//! `g = diag(1, 4) / (sigma^2 (1 - r^2))`, a rescaled hyperbolic plane: with
//! `v = 2 sigma` it reads `4 / ((1 - r^2) v^2) (dmu^2 + dv^2)`, so the scalar
//! curvature is `-(1 - r^2) / 2` everywhere.
//!
//! Curvature convention: `R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb}
//! + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb}`, `R_{bd} = R^a_{bad}`,
//! `R = g^{bd} R_{bd}`. The unit hyperbolic plane has `R = -2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bivariate_expectation, expectation, score_macro, Block, MacroPoint, ModelConfig};
use crate::numerics::{central_gradient, Step};

pub type Mat2 = [[f64; 2]; 2];

/// Symmetric metric tensor in coordinates `(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTensor {
    pub at: MacroPoint,
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
}

impl MetricTensor {
    pub fn matrix(&self) -> Mat2 {
        [[self.g11, self.g12], [self.g12, self.g22]]
    }

    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    pub fn is_positive_definite(&self) -> bool {
        self.g11 > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Mat2 {
        inverse(&self.matrix())
    }

    /// `g(v, v)`.
    pub fn norm_sq(&self, v: [f64; 2]) -> f64 {
        self.g11 * v[0] * v[0] + 2.0 * self.g12 * v[0] * v[1] + self.g22 * v[1] * v[1]
    }

    fn checked(self) -> Result<Self> {
        if !self.is_positive_definite() {
            return Err(Error::Invariant(format!(
                "metric at {:?} is not positive definite: [[{}, {}], [{}, {}]]",
                self.at, self.g11, self.g12, self.g12, self.g22
            )));
        }
        Ok(self)
    }
}

fn inverse(m: &Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Closed-form Fisher metric of the bivariate block.
pub fn fisher_metric_analytic(theta: &MacroPoint, cfg: &ModelConfig) -> Result<MetricTensor> {
    theta.validate()?;
    cfg.validate()?;
    let c = 1.0 / (theta.sigma * theta.sigma * (1.0 - cfg.r * cfg.r));
    MetricTensor {
        at: *theta,
        g11: c,
        g12: 0.0,
        g22: 4.0 * c,
    }
    .checked()
}

/// The literal `diag(1, 4) / (sigma (1 - r^2))` form, kept in reports for
/// comparison. It coincides with the Fisher information only at `sigma = 1`.
pub fn paper_literal_metric(theta: &MacroPoint, cfg: &ModelConfig) -> Result<MetricTensor> {
    theta.validate()?;
    cfg.validate()?;
    let c = 1.0 / (theta.sigma * (1.0 - cfg.r * cfg.r));
    Ok(MetricTensor {
        at: *theta,
        g11: c,
        g12: 0.0,
        g22: 4.0 * c,
    })
}

/// Fisher metric `E[d_i log p d_j log p]` by Gauss–Hermite quadrature over
/// the microvariables of `block`.
pub fn fisher_metric_numeric(theta: &MacroPoint, cfg: &ModelConfig, block: Block, order: usize) -> Result<MetricTensor> {
    theta.validate()?;
    cfg.validate()?;
    let entry = |i: usize, j: usize| -> Result<f64> {
        match block {
            Block::Bivariate => bivariate_expectation(
                |h11, h22| {
                    let x = crate::model::MicroPoint::new(h11, h22, 0.0, 0.0);
                    let s = score_macro(&x, theta, cfg, block);
                    s[i] * s[j]
                },
                theta,
                cfg,
                order,
            ),
            Block::Full => expectation(
                |x| {
                    let s = score_macro(x, theta, cfg, block);
                    s[i] * s[j]
                },
                theta,
                cfg,
                order,
            ),
        }
    };
    MetricTensor {
        at: *theta,
        g11: entry(0, 0)?,
        g12: entry(0, 1)?,
        g22: entry(1, 1)?,
    }
    .checked()
}

/// Analytic or finite-difference evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analytic,
    FiniteDifference,
}

/// Levi-Civita connection coefficients, `gamma[k][i][j] = G^k_{ij}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel {
    pub at: MacroPoint,
    pub gamma: [[[f64; 2]; 2]; 2],
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[k][i][j]
    }
}

/// Ricci tensor components and scalar curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureReport {
    pub at: MacroPoint,
    pub r11: f64,
    pub r12: f64,
    pub r22: f64,
    pub scalar: f64,
}

/// Christoffel symbols of the Fisher metric.
///
/// The analytic coefficients do not depend on `r`: the factor `1/(1 - r^2)`
/// cancels between `g^{kl}` and `d g`.
pub fn christoffel(theta: &MacroPoint, cfg: &ModelConfig, mode: Mode) -> Result<Christoffel> {
    theta.validate()?;
    cfg.validate()?;
    match mode {
        Mode::Analytic => {
            let s = theta.sigma;
            let mut gamma = [[[0.0; 2]; 2]; 2];
            gamma[0][0][1] = -1.0 / s;
            gamma[0][1][0] = -1.0 / s;
            gamma[1][0][0] = 1.0 / (4.0 * s);
            gamma[1][1][1] = -1.0 / s;
            Ok(Christoffel { at: *theta, gamma })
        }
        Mode::FiniteDifference => {
            let gamma = christoffel_of(model_metric(*cfg), [theta.mu, theta.sigma])?;
            Ok(Christoffel { at: *theta, gamma })
        }
    }
}

/// Ricci tensor and scalar curvature of the Fisher metric.
pub fn ricci(theta: &MacroPoint, cfg: &ModelConfig, mode: Mode) -> Result<CurvatureReport> {
    theta.validate()?;
    cfg.validate()?;
    match mode {
        Mode::Analytic => {
            let s2 = theta.sigma * theta.sigma;
            Ok(CurvatureReport {
                at: *theta,
                r11: -1.0 / (4.0 * s2),
                r12: 0.0,
                r22: -1.0 / s2,
                scalar: -(1.0 - cfg.r * cfg.r) / 2.0,
            })
        }
        Mode::FiniteDifference => {
            let (ric, scalar) = curvature_of(model_metric(*cfg), [theta.mu, theta.sigma])?;
            Ok(CurvatureReport {
                at: *theta,
                r11: ric[0][0],
                r12: 0.5 * (ric[0][1] + ric[1][0]),
                r22: ric[1][1],
                scalar,
            })
        }
    }
}

fn model_metric(cfg: ModelConfig) -> impl Fn([f64; 2]) -> Option<Mat2> + Copy {
    move |x| {
        if !(x[1] > 0.0) {
            return None;
        }
        fisher_metric_analytic(&MacroPoint { mu: x[0], sigma: x[1] }, &cfg)
            .ok()
            .map(|g| g.matrix())
    }
}

/// Christoffel symbols of an arbitrary 2D metric from central differences
/// of its components.
pub fn christoffel_of<F>(metric: F, x: [f64; 2]) -> Result<[[[f64; 2]; 2]; 2]>
where
    F: Fn([f64; 2]) -> Option<Mat2>,
{
    let g = metric(x).ok_or_else(|| Error::domain("metric undefined", &x))?;
    let ginv = inverse(&g);
    // dg[l][i][j] = d_l g_ij
    let mut dg = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in i..2 {
            let grad = central_gradient(|p| metric([p[0], p[1]]).map(|m| m[i][j]), &x, Step::Auto)?;
            for l in 0..2 {
                dg[l][i][j] = grad[l];
                dg[l][j][i] = grad[l];
            }
        }
    }
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in i..2 {
                let mut acc = 0.0;
                for l in 0..2 {
                    acc += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                }
                gamma[k][i][j] = 0.5 * acc;
                gamma[k][j][i] = 0.5 * acc;
            }
        }
    }
    Ok(gamma)
}

/// Ricci tensor and scalar curvature of an arbitrary 2D metric, contracting
/// the Riemann tensor built from finite-difference Christoffel symbols.
pub fn curvature_of<F>(metric: F, x: [f64; 2]) -> Result<(Mat2, f64)>
where
    F: Fn([f64; 2]) -> Option<Mat2> + Copy,
{
    let gamma = christoffel_of(metric, x)?;
    // dgamma[m][a][b][c] = d_m G^a_{bc}
    let mut dgamma = [[[[0.0; 2]; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in b..2 {
                let grad = central_gradient(
                    |p| christoffel_of(metric, [p[0], p[1]]).ok().map(|gm| gm[a][b][c]),
                    &x,
                    Step::Auto,
                )?;
                for m in 0..2 {
                    dgamma[m][a][b][c] = grad[m];
                    dgamma[m][a][c][b] = grad[m];
                }
            }
        }
    }
    let riemann = |a: usize, b: usize, c: usize, d: usize| -> f64 {
        let mut v = dgamma[c][a][d][b] - dgamma[d][a][c][b];
        for e in 0..2 {
            v += gamma[a][c][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][c][b];
        }
        v
    };
    let mut ric = [[0.0; 2]; 2];
    for b in 0..2 {
        for d in 0..2 {
            ric[b][d] = (0..2).map(|a| riemann(a, b, a, d)).sum();
        }
    }
    let g = metric(x).ok_or_else(|| Error::domain("metric undefined", &x))?;
    let ginv = inverse(&g);
    let mut scalar = 0.0;
    for b in 0..2 {
        for d in 0..2 {
            scalar += ginv[b][d] * ric[b][d];
        }
    }
    Ok((ric, scalar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(mu: f64, sigma: f64) -> MacroPoint {
        MacroPoint::new(mu, sigma).unwrap()
    }

    fn cfg(big: f64, r: f64) -> ModelConfig {
        ModelConfig::new(big, r).unwrap()
    }

    #[test]
    fn numeric_metric_bivariate_examples() {
        for big in [0.5, 1.0, 3.0] {
            let g = fisher_metric_numeric(&theta(0.0, 1.0), &cfg(big, 0.0), Block::Bivariate, 32).unwrap();
            assert!((g.g11 - 1.0).abs() < 1e-8 && (g.g22 - 4.0).abs() < 1e-8 && g.g12.abs() < 1e-8);
        }
        let g = fisher_metric_numeric(&theta(0.0, 2.0), &cfg(1.0, 0.0), Block::Bivariate, 32).unwrap();
        assert!((g.g11 - 0.25).abs() < 1e-8 && (g.g22 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn numeric_metric_full_model_adds_offdiagonal_information() {
        let g = fisher_metric_numeric(&theta(0.0, 1.0), &cfg(1.0, 0.0), Block::Full, 16).unwrap();
        assert!((g.g11 - 1.0).abs() < 1e-8);
        assert!((g.g22 - 8.0).abs() < 1e-8);
        // symmetric reading has a single off-diagonal variable
        let c = cfg(1.0, 0.0).symmetric(true);
        let g = fisher_metric_numeric(&theta(0.0, 1.0), &c, Block::Full, 16).unwrap();
        assert!((g.g22 - 6.0).abs() < 1e-8);
    }

    #[test]
    fn analytic_metric_examples() {
        let g = fisher_metric_analytic(&theta(0.0, 1.0), &cfg(1.0, 0.0)).unwrap();
        assert_eq!((g.g11, g.g12, g.g22), (1.0, 0.0, 4.0));
        let g = fisher_metric_analytic(&theta(0.0, 1.0), &cfg(1.0, 0.6)).unwrap();
        assert!((g.g11 - 1.5625).abs() < 1e-12 && (g.g22 - 6.25).abs() < 1e-12);
        for mu in [-2.0, 0.0, 2.0, 5.0, 9.0] {
            for sigma in [0.1, 0.5, 1.0, 2.0, 7.0] {
                for r in [-0.9, -0.3, 0.0, 0.4, 0.99] {
                    let g = fisher_metric_analytic(&theta(mu, sigma), &cfg(1.0, r)).unwrap();
                    assert_eq!(g.g12, 0.0);
                }
            }
        }
    }

    #[test]
    fn literal_metric_agrees_only_at_unit_sigma() {
        let c = cfg(1.0, 0.3);
        let a = fisher_metric_analytic(&theta(0.0, 1.0), &c).unwrap();
        let p = paper_literal_metric(&theta(0.0, 1.0), &c).unwrap();
        assert!((a.g11 - p.g11).abs() < 1e-15);
        let a = fisher_metric_analytic(&theta(0.0, 2.0), &c).unwrap();
        let p = paper_literal_metric(&theta(0.0, 2.0), &c).unwrap();
        assert!((p.g11 / a.g11 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn christoffel_examples() {
        let c = christoffel(&theta(0.0, 1.0), &cfg(1.0, 0.0), Mode::Analytic).unwrap();
        assert_eq!(c.get(0, 0, 1), -1.0);
        assert_eq!(c.get(0, 1, 0), -1.0);
        assert_eq!(c.get(1, 0, 0), 0.25);
        assert_eq!(c.get(1, 1, 1), -1.0);
        assert_eq!(c.get(0, 0, 0), 0.0);
        assert_eq!(c.get(0, 1, 1), 0.0);
        assert_eq!(c.get(1, 0, 1), 0.0);
        let c = christoffel(&theta(0.0, 2.0), &cfg(1.0, 0.0), Mode::Analytic).unwrap();
        assert_eq!((c.get(0, 0, 1), c.get(1, 0, 0), c.get(1, 1, 1)), (-0.5, 0.125, -0.5));
        let c8 = christoffel(&theta(0.0, 1.0), &cfg(1.0, 0.8), Mode::FiniteDifference).unwrap();
        assert!((c8.get(0, 0, 1) + 1.0).abs() < 1e-6);
        assert!((c8.get(1, 0, 0) - 0.25).abs() < 1e-6);
        assert!((c8.get(1, 1, 1) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn christoffel_modes_agree() {
        for sigma in [0.3, 1.0, 2.0, 5.0] {
            for r in [-0.9, 0.0, 0.5] {
                let th = theta(1.5, sigma);
                let a = christoffel(&th, &cfg(1.0, r), Mode::Analytic).unwrap();
                let f = christoffel(&th, &cfg(1.0, r), Mode::FiniteDifference).unwrap();
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            assert_eq!(f.gamma[k][i][j], f.gamma[k][j][i]);
                            assert!((a.gamma[k][i][j] - f.gamma[k][i][j]).abs() < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stencil_crossing_zero_sigma_is_a_domain_error() {
        let err = christoffel(&theta(0.0, 5e-5), &cfg(1.0, 0.0), Mode::FiniteDifference).unwrap_err();
        assert!(matches!(err, Error::NumericalDomain { .. }));
    }

    #[test]
    fn ricci_examples() {
        let r0 = ricci(&theta(0.0, 1.0), &cfg(1.0, 0.0), Mode::Analytic).unwrap();
        assert_eq!(r0.scalar, -0.5);
        let rr = 1.0 - 1e-6;
        for r in [rr, -rr] {
            let k = ricci(&theta(0.0, 1.0), &cfg(1.0, r), Mode::Analytic).unwrap();
            assert!((k.scalar + (1.0 - r * r) / 2.0).abs() < 1e-15);
            assert!(k.scalar < 0.0 && k.scalar > -1.1e-6);
        }
        let k = ricci(&theta(0.0, 1.0), &cfg(1.0, 0.6), Mode::Analytic).unwrap();
        assert!((k.scalar + 0.32).abs() < 1e-12);
        assert_eq!((k.r11, k.r22), (-0.25, -1.0));
    }

    #[test]
    fn ricci_modes_agree() {
        for mu in [-3.0, 0.0, 7.0] {
            for sigma in [0.5, 1.0, 2.0, 5.0] {
                for r in [0.0, 0.3, -0.3, 0.9, -0.9] {
                    let th = theta(mu, sigma);
                    let a = ricci(&th, &cfg(1.0, r), Mode::Analytic).unwrap();
                    let f = ricci(&th, &cfg(1.0, r), Mode::FiniteDifference).unwrap();
                    assert!((a.scalar - f.scalar).abs() < 1e-5, "{mu} {sigma} {r}: {}", f.scalar);
                    assert!((a.r11 - f.r11).abs() < 1e-5 * a.r11.abs().max(1.0));
                    assert!((a.r22 - f.r22).abs() < 1e-5 * a.r22.abs().max(1.0));
                    assert!(f.r12.abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn reference_surfaces() {
        // unit hyperbolic upper half-plane
        let hyperbolic = |x: [f64; 2]| (x[1] > 0.0).then(|| [[1.0 / (x[1] * x[1]), 0.0], [0.0, 1.0 / (x[1] * x[1])]]);
        let (_, s) = curvature_of(hyperbolic, [0.3, 1.7]).unwrap();
        assert!((s + 2.0).abs() < 1e-5, "{s}");
        // unit sphere in (theta, phi)
        let sphere = |x: [f64; 2]| Some([[1.0, 0.0], [0.0, x[0].sin().powi(2)]]);
        let (_, s) = curvature_of(sphere, [1.1, 0.4]).unwrap();
        assert!((s - 2.0).abs() < 1e-5, "{s}");
    }

    #[test]
    fn hyperbolic_isometry() {
        for sigma in [0.2, 1.0, 3.5] {
            for r in [0.0, 0.45, -0.8] {
                let g = fisher_metric_analytic(&theta(0.0, sigma), &cfg(1.0, r)).unwrap();
                let v = 2.0 * sigma;
                let conformal = 4.0 / ((1.0 - r * r) * v * v);
                // dv = 2 dsigma
                assert!((g.g11 - conformal).abs() < 1e-12 * conformal);
                assert!((g.g22 - 4.0 * conformal).abs() < 1e-12 * conformal);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn metric_positive_and_curvature_in_range(
            mu in -5.0f64..5.0, sigma in 0.05f64..10.0, r in -0.999f64..0.999
        ) {
            let th = theta(mu, sigma);
            let c = cfg(1.0, r);
            let g = fisher_metric_analytic(&th, &c).unwrap();
            proptest::prop_assert!(g.is_positive_definite());
            let k = ricci(&th, &c, Mode::Analytic).unwrap();
            proptest::prop_assert!(k.scalar < 0.0 && k.scalar >= -0.5);
        }
    }
}
