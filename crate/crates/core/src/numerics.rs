//! Deterministic numerical kernels shared by the rest of the crate.
//!
//! Quadrature uses the physicists' Hermite weight `e^{-x^2}`; every Gaussian
//! expectation goes through [`gaussian_expectation`], which applies the
//! change of variables `x = mean + sqrt(2) L u`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest supported quadrature order.
pub const MAX_RULE_ORDER: usize = 128;

/// Default per-axis order for 2D Gaussian integrals.
pub const DEFAULT_ORDER_2D: usize = 32;
/// Default per-axis order for 4D Gaussian integrals.
pub const DEFAULT_ORDER_4D: usize = 16;

/// A one-dimensional quadrature rule with nodes in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Applies the rule to `f`, summing mirrored node pairs together so odd
    /// integrands cancel exactly on symmetric rules.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            total += self.weights[i] * f(self.nodes[i]) + self.weights[j] * f(self.nodes[j]);
        }
        if n % 2 == 1 {
            total += self.weights[n / 2] * f(self.nodes[n / 2]);
        }
        total
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_RULE_ORDER {
        return Err(Error::InvalidArgument(format!(
            "quadrature order must be in 1..={MAX_RULE_ORDER}, got {n}"
        )));
    }
    Ok(())
}

/// Gauss–Hermite rule for the weight `e^{-x^2}` on the real line.
///
/// Nodes are the roots of the degree-`n` Hermite polynomial, found by Newton
/// iteration on the orthonormal three-term recurrence.
pub fn gauss_hermite_rule(n: usize) -> Result<QuadratureRule> {
    check_order(n)?;
    const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let nf = n as f64;
    let m = (n + 1) / 2;
    // positive roots, largest first
    let mut roots = vec![0.0f64; m];
    let mut weights = vec![0.0f64; m];
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * roots[0],
            3 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (p1, p2) = hermite_orthonormal(n, z, PI_M4);
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        // one more evaluation at the converged root for the weight
        let (_, p2) = hermite_orthonormal(n, z, PI_M4);
        let pp_final = (2.0 * nf).sqrt() * p2;
        if pp_final.is_finite() && pp_final != 0.0 {
            pp = pp_final;
        }
        roots[i] = z;
        weights[i] = 2.0 / (pp * pp);
    }
    if n % 2 == 1 {
        roots[m - 1] = 0.0;
    }

    let mut nodes = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..(n / 2) {
        nodes.push(-roots[i]);
        ws.push(weights[i]);
    }
    if n % 2 == 1 {
        nodes.push(0.0);
        ws.push(weights[m - 1]);
    }
    for i in (0..(n / 2)).rev() {
        nodes.push(roots[i]);
        ws.push(weights[i]);
    }
    Ok(QuadratureRule {
        order: n,
        nodes,
        weights: ws,
    })
}

/// Returns `(h_n(z), h_{n-1}(z))` for the orthonormal Hermite functions
/// scaled so that `h_0 = pi^{-1/4}`.
fn hermite_orthonormal(n: usize, z: f64, h0: f64) -> (f64, f64) {
    let mut p1 = h0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule> {
    check_order(n)?;
    let nf = n as f64;
    let m = (n + 1) / 2;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    Ok(QuadratureRule {
        order: n,
        nodes,
        weights,
    })
}

/// Integrates `f` over `[a, b]` with the Gauss–Legendre rule `rule`.
pub fn integrate_interval(rule: &QuadratureRule, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * rule.apply(|t| f(mid + half * t))
}

/// Tensor-product Gauss–Hermite estimate of `E[f(X)]` for
/// `X ~ N(mean, L L^T)`, where `factor` is the lower-triangular `L`.
///
/// Nodes are visited in a fixed lexicographic order so repeated calls give
/// bit-identical sums.
pub fn gaussian_expectation<F>(f: F, mean: &[f64], factor: &DMatrix<f64>, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = mean.len();
    if d == 0 || d > 4 {
        return Err(Error::InvalidArgument(format!(
            "gaussian_expectation supports dimensions 1..=4, got {d}"
        )));
    }
    if factor.nrows() != d || factor.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "covariance factor must be {d}x{d}, got {}x{}",
            factor.nrows(),
            factor.ncols()
        )));
    }
    for i in 0..d {
        if !(factor[(i, i)] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance factor diagonal must be strictly positive (entry {i} is {})",
                factor[(i, i)]
            )));
        }
    }

    let n = rule.order;
    let scale = std::f64::consts::SQRT_2;
    let mut idx = [0usize; 4];
    let mut x = [0.0f64; 4];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (i, xi) in x.iter_mut().enumerate().take(d) {
            let mut acc = mean[i];
            for j in 0..=i {
                acc += scale * factor[(i, j)] * rule.nodes[idx[j]];
            }
            *xi = acc;
            w *= rule.weights[idx[i]];
        }
        let v = f(&x[..d]);
        if !v.is_finite() {
            return Err(Error::domain("non-finite integrand", &x[..d]));
        }
        total += w * v;

        // odometer, last axis fastest
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(total / std::f64::consts::PI.powf(d as f64 / 2.0));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Step policy for [`central_diff`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// `h_i = 1e-4 * max(1, |x_i|)` per component.
    Auto,
    /// The same step on every axis.
    Fixed(f64),
}

impl Step {
    fn for_component(self, xi: f64) -> f64 {
        match self {
            Step::Auto => 1e-4 * xi.abs().max(1.0),
            Step::Fixed(h) => h,
        }
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

/// Second-order central differences of `f` at `x`.
///
/// `f` returns `None` outside its domain; any stencil point where that
/// happens, or where `f` is non-finite, is reported as a domain error.
pub fn central_diff<F>(f: F, x: &[f64], step: Step) -> Result<Derivatives>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let m = x.len();
    if let Step::Fixed(h) = step {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
        }
    }
    let eval = |p: &[f64]| -> Result<f64> {
        match f(p) {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(Error::domain("stencil point outside function domain", p)),
        }
    };
    let h: Vec<f64> = x.iter().map(|&xi| step.for_component(xi)).collect();
    let f0 = eval(x)?;
    let mut p = x.to_vec();
    let mut gradient = vec![0.0; m];
    let mut hessian = vec![vec![0.0; m]; m];
    for i in 0..m {
        p[i] = x[i] + h[i];
        let fp = eval(&p)?;
        p[i] = x[i] - h[i];
        let fm = eval(&p)?;
        p[i] = x[i];
        gradient[i] = (fp - fm) / (2.0 * h[i]);
        hessian[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = eval(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hessian[i][j] = v;
            hessian[j][i] = v;
        }
    }
    Ok(Derivatives {
        value: f0,
        gradient,
        hessian,
    })
}

/// Central-difference gradient only (cheaper than [`central_diff`]).
pub fn central_gradient<F>(f: F, x: &[f64], step: Step) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut p = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = step.for_component(x[i]);
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
        }
        let mut at = |v: f64| -> Result<f64> {
            p[i] = v;
            let out = f(&p).filter(|y| y.is_finite());
            let res = out.ok_or_else(|| Error::domain("stencil point outside function domain", &p));
            p[i] = x[i];
            res
        };
        let fp = at(x[i] + h)?;
        let fm = at(x[i] - h)?;
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Result of a fixed-step RK4 integration.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    /// `(tau, state)` at every accepted step, starting with the initial state.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Set when the integration stopped early because the state left the
    /// admissible region or became non-finite.
    pub truncated: bool,
}

/// Classical fourth-order Runge–Kutta with fixed step `h` up to `tau_max`.
///
/// The last step is shortened so `tau_max` is hit exactly. If any stage
/// leaves the region accepted by `admissible`, the trajectory ends at the
/// last good state and `truncated` is set.
pub fn rk4_integrate<F, A>(field: F, admissible: A, initial: &[f64], tau_max: f64, h: f64) -> Result<OdeSolution>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    A: Fn(&[f64]) -> bool,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if !(tau_max > 0.0) || !tau_max.is_finite() {
        return Err(Error::InvalidArgument(format!("tau_max must be positive, got {tau_max}")));
    }
    if !admissible(initial) {
        return Err(Error::domain("initial state is not admissible", initial));
    }
    let dim = initial.len();
    let steps = ((tau_max / h) - 1e-9).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((0.0, initial.to_vec()));
    let mut y = initial.to_vec();
    let mut tmp = vec![0.0; dim];
    let ok = |v: &[f64]| v.iter().all(|x| x.is_finite()) && admissible(v);

    for s in 0..steps {
        let t = s as f64 * h;
        let dt = if s + 1 == steps { tau_max - t } else { h };

        let k1 = field(t, &y);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        if !ok(&tmp) {
            return Ok(OdeSolution { samples, truncated: true });
        }
        let k2 = field(t + 0.5 * dt, &tmp);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        if !ok(&tmp) {
            return Ok(OdeSolution { samples, truncated: true });
        }
        let k3 = field(t + 0.5 * dt, &tmp);
        for i in 0..dim {
            tmp[i] = y[i] + dt * k3[i];
        }
        if !ok(&tmp) {
            return Ok(OdeSolution { samples, truncated: true });
        }
        let k4 = field(t + dt, &tmp);
        for i in 0..dim {
            tmp[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !ok(&tmp) {
            return Ok(OdeSolution { samples, truncated: true });
        }
        y.copy_from_slice(&tmp);
        let tau = if s + 1 == steps { tau_max } else { (s + 1) as f64 * h };
        samples.push((tau, y.clone()));
    }
    Ok(OdeSolution {
        samples,
        truncated: false,
    })
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() > 4 || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "box needs matching bounds of dimension 1..=4 (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "box dimension {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Outcome of [`maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub argmax: Vec<f64>,
    pub value: f64,
    /// Best value seen on the initial grid.
    pub grid_value: f64,
}

/// Exhaustive grid scan followed by coordinate-wise golden-section sweeps
/// around the best grid point, each sweep followed by a line search along
/// its net displacement.
pub fn maximize<F>(f: F, domain: &BoxDomain, resolution: &[usize], refine_iterations: usize) -> Result<Maximum>
where
    F: Fn(&[f64]) -> f64,
{
    let d = domain.dim();
    if resolution.len() != d {
        return Err(Error::InvalidArgument(format!(
            "need one grid resolution per dimension ({d}), got {}",
            resolution.len()
        )));
    }
    if let Some(&bad) = resolution.iter().find(|&&r| r < 3) {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 3 per dimension, got {bad}"
        )));
    }
    let cell: Vec<f64> = (0..d)
        .map(|i| (domain.upper[i] - domain.lower[i]) / (resolution[i] - 1) as f64)
        .collect();
    let coord = |i: usize, k: usize| {
        if k + 1 == resolution[i] {
            domain.upper[i]
        } else {
            domain.lower[i] + k as f64 * cell[i]
        }
    };

    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    let mut best_x = vec![0.0; d];
    'scan: loop {
        for i in 0..d {
            x[i] = coord(i, idx[i]);
        }
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::domain("non-finite objective on grid", &x));
        }
        if v > best {
            best = v;
            best_x.copy_from_slice(&x);
        }
        let mut k = d;
        loop {
            if k == 0 {
                break 'scan;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < resolution[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    let grid_value = best;
    let mut xb = best_x;
    let mut fb = best;
    for _ in 0..refine_iterations {
        let before = fb;
        let start = xb.clone();
        for i in 0..d {
            let lo = (xb[i] - cell[i]).max(domain.lower[i]);
            let hi = (xb[i] + cell[i]).min(domain.upper[i]);
            let mut probe = xb.clone();
            let (t, v) = golden_section_max(
                |t| {
                    probe[i] = t;
                    f(&probe)
                },
                lo,
                hi,
            );
            if v > fb {
                fb = v;
                xb[i] = t;
            }
        }
        // extrapolate along the net displacement of the sweep
        let step: Vec<f64> = xb.iter().zip(&start).map(|(a, b)| a - b).collect();
        if step.iter().any(|&s| s != 0.0) {
            let t_max = (0..d)
                .filter(|&i| step[i] != 0.0)
                .map(|i| {
                    let bound = if step[i] > 0.0 { domain.upper[i] } else { domain.lower[i] };
                    (bound - xb[i]) / step[i]
                })
                .fold(64.0, f64::min);
            if t_max > 0.0 {
                let (t, v) = golden_section_max(
                    |t| {
                        let probe: Vec<f64> = xb.iter().zip(&step).map(|(x, s)| x + t * s).collect();
                        f(&probe)
                    },
                    0.0,
                    t_max,
                );
                if v > fb {
                    fb = v;
                    xb.iter_mut().zip(&step).for_each(|(x, s)| *x += t * s);
                }
            }
        }
        if fb == before {
            break;
        }
    }
    Ok(Maximum {
        argmax: xb,
        value: fb,
        grid_value,
    })
}

/// Golden-section search for a maximum of `g` on `[a, b]`; returns the best
/// point evaluated. Non-finite values never win.
pub fn golden_section_max(mut g: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let score = |v: f64| if v.is_finite() { v } else { f64::NEG_INFINITY };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = score(g(c));
    let mut fd = score(g(d));
    let (mut bx, mut bv) = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = score(g(c));
            if fc > bv {
                bx = c;
                bv = fc;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = score(g(d));
            if fd > bv {
                bx = d;
                bv = fd;
            }
        }
    }
    (bx, bv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `∫ x^k e^{-x^2} dx` over the real line.
    fn hermite_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        // Γ((k+1)/2) = (k-1)!! sqrt(pi) / 2^{k/2}
        let mut v = PI.sqrt();
        let mut j = 1;
        while j < k {
            v *= j as f64 / 2.0;
            j += 2;
        }
        v
    }

    #[test]
    fn hermite_low_orders() {
        let r1 = gauss_hermite_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert!((r1.weights[0] - PI.sqrt()).abs() < 1e-14);

        let r2 = gauss_hermite_rule(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((r2.nodes[0] + s).abs() < 1e-15);
        assert!((r2.nodes[1] - s).abs() < 1e-15);
        for w in &r2.weights {
            assert!((w - PI.sqrt() / 2.0).abs() < 1e-14);
        }
        for k in 0..=3 {
            let q = r2.apply(|x| x.powi(k as i32));
            assert!((q - hermite_moment(k)).abs() < 1e-14, "degree {k}");
        }

        let r4 = gauss_hermite_rule(4).unwrap();
        assert!((r4.apply(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_invariants() {
        for n in 1..=MAX_RULE_ORDER {
            let r = gauss_hermite_rule(n).unwrap();
            assert_eq!(r.nodes.len(), n);
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]), "order {n}");
            for i in 0..n {
                assert_eq!(r.nodes[i], -r.nodes[n - 1 - i]);
            }
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - PI.sqrt()).abs() < 1e-12, "order {n}: sum {sum}");
        }
    }

    #[test]
    fn hermite_exactness_up_to_16() {
        for n in 1..=16usize {
            let r = gauss_hermite_rule(n).unwrap();
            for k in 0..(2 * n as u32) {
                let q = r.apply(|x| x.powi(k as i32));
                let exact = hermite_moment(k);
                assert!(
                    (q - exact).abs() <= 1e-10 * exact.abs().max(1.0),
                    "n={n} k={k}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(gauss_hermite_rule(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_hermite_rule(129), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_legendre_rule(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn legendre_exactness() {
        let r = gauss_legendre_rule(10).unwrap();
        for k in 0..20 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((r.apply(|x| x.powi(k)) - exact).abs() < 1e-14, "k={k}");
        }
        let v = integrate_interval(&r, 0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_expectation_examples() {
        let r4 = gauss_hermite_rule(4).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.4, 0.7]);
        let one = gaussian_expectation(|_| 1.0, &[0.3, -2.0], &l, &r4).unwrap();
        assert!((one - 1.0).abs() < 1e-12);

        let r8 = gauss_hermite_rule(8).unwrap();
        let l1 = DMatrix::from_element(1, 1, 1.0);
        let v = gaussian_expectation(|x| x[0] * x[0], &[0.0], &l1, &r8).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        let rho: f64 = 0.5;
        let l2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
        let c = gaussian_expectation(|x| x[0] * x[1], &[0.0, 0.0], &l2, &r8).unwrap();
        assert!((c - 0.5).abs() < 1e-10);
    }

    #[test]
    fn gaussian_expectation_matches_monte_carlo_cross_moment() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rho: f64 = 0.5;
        let n = 10_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            acc += z1 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        }
        let mc = acc / n as f64;
        let r8 = gauss_hermite_rule(8).unwrap();
        let l2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
        let q = gaussian_expectation(|x| x[0] * x[1], &[0.0, 0.0], &l2, &r8).unwrap();
        assert!((q - mc).abs() < 1e-3, "quadrature {q} vs MC {mc}");
    }

    #[test]
    fn gaussian_expectation_errors() {
        let r = gauss_hermite_rule(4).unwrap();
        let bad = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(matches!(
            gaussian_expectation(|_| 1.0, &[0.0], &bad, &r),
            Err(Error::InvalidArgument(_))
        ));
        let l = DMatrix::from_element(1, 1, 1.0);
        let err = gaussian_expectation(|x| if x[0] > 0.0 { f64::NAN } else { 1.0 }, &[0.0], &l, &r).unwrap_err();
        match err {
            Error::NumericalDomain { point, .. } => assert!(point[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn central_diff_examples() {
        let d = central_diff(|x| Some(x[0].powi(3)), &[2.0], Step::Fixed(1e-4)).unwrap();
        assert!((d.gradient[0] - 12.0).abs() < 1e-6);

        let d = central_diff(|x| Some(x[0].sin()), &[0.0], Step::Fixed(1e-4)).unwrap();
        assert!(d.hessian[0][0].abs() < 1e-6);

        let f = |x: &[f64]| if x[1] > 0.0 { Some(1.0 / (x[1] * x[1])) } else { None };
        let d = central_diff(f, &[0.3, 2.0], Step::Auto).unwrap();
        assert!((d.gradient[1] + 0.25).abs() < 1e-6);
        assert!(d.gradient[0].abs() < 1e-12);
    }

    #[test]
    fn central_diff_mixed_partials() {
        let f = |x: &[f64]| Some(x[0] * x[0] * x[1] + 3.0 * x[1]);
        let d = central_diff(f, &[1.5, -0.5], Step::Auto).unwrap();
        assert!((d.hessian[0][1] - 3.0).abs() < 1e-6);
        assert!((d.hessian[0][0] + 1.0).abs() < 1e-6);
        assert!((d.gradient[1] - (2.25 + 3.0)).abs() < 1e-8);
    }

    #[test]
    fn central_diff_domain_error() {
        let f = |x: &[f64]| if x[0] > 0.0 { Some(x[0].ln()) } else { None };
        let err = central_diff(f, &[5e-5], Step::Fixed(1e-4)).unwrap_err();
        assert!(matches!(err, Error::NumericalDomain { .. }));
        assert!(central_gradient(f, &[5e-5], Step::Fixed(1e-4)).is_err());
    }

    #[test]
    fn rk4_exponential() {
        let sol = rk4_integrate(|_, y| vec![y[0]], |_| true, &[1.0], 1.0, 0.01).unwrap();
        let (t, y) = sol.samples.last().unwrap();
        assert_eq!(*t, 1.0);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-8);
        assert_eq!(sol.samples.len(), 101);
        assert!(!sol.truncated);
    }

    #[test]
    fn rk4_fixed_point() {
        let sol = rk4_integrate(|_, _| vec![0.0, 0.0], |_| true, &[0.4, -1.0], 3.0, 0.1).unwrap();
        assert!(sol.samples.iter().all(|(_, y)| y == &vec![0.4, -1.0]));
    }

    #[test]
    fn rk4_harmonic_oscillator_period() {
        let sol = rk4_integrate(|_, y| vec![y[1], -y[0]], |_| true, &[1.0, 0.0], 2.0 * PI, 1e-3).unwrap();
        let (_, y) = sol.samples.last().unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn rk4_order() {
        let err = |h: f64| {
            let sol = rk4_integrate(|_, y| vec![y[0]], |_| true, &[1.0], 1.0, h).unwrap();
            (sol.samples.last().unwrap().1[0] - std::f64::consts::E).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn rk4_truncates_at_boundary() {
        // y' = -1 from y=0.5 leaves y > 0 at tau = 0.5
        let sol = rk4_integrate(|_, _| vec![-1.0], |y| y[0] > 0.0, &[0.5], 2.0, 0.1).unwrap();
        assert!(sol.truncated);
        assert!(sol.samples.iter().all(|(_, y)| y[0] > 0.0));
        assert!(sol.samples.last().unwrap().0 <= 0.5 + 1e-12);
    }

    #[test]
    fn maximize_examples() {
        let d = BoxDomain::new(vec![-5.0], vec![5.0]).unwrap();
        let m = maximize(|x| -(x[0] - 1.0).powi(2), &d, &[101], 10).unwrap();
        assert!((m.argmax[0] - 1.0).abs() < 1e-8);
        assert!(m.value.abs() < 1e-8);

        let d = BoxDomain::cube(2, 2.0).unwrap();
        let m = maximize(|x| -x[0] * x[0] - x[1] * x[1], &d, &[40, 40], 10).unwrap();
        assert!(m.argmax[0].abs() < 1e-8 && m.argmax[1].abs() < 1e-8);

        let d = BoxDomain::new(vec![0.0], vec![PI]).unwrap();
        let m = maximize(|x| x[0].sin(), &d, &[50], 10).unwrap();
        assert!((m.argmax[0] - PI / 2.0).abs() < 1e-8);
        assert!((m.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn maximize_errors() {
        let d = BoxDomain::cube(1, 1.0).unwrap();
        assert!(maximize(|x| x[0], &d, &[2], 1).is_err());
        assert!(matches!(
            maximize(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }, &d, &[11], 1),
            Err(Error::NumericalDomain { .. })
        ));
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn maximize_never_below_grid(a in -3.0f64..3.0, b in 0.5f64..4.0, c in -2.0f64..2.0) {
            let d = BoxDomain::cube(2, 4.0).unwrap();
            let f = |x: &[f64]| (a * x[0]).sin() * (-(x[1] - c).powi(2) / b).exp() + 0.1 * x[0];
            let m = maximize(f, &d, &[9, 9], 5).unwrap();
            proptest::prop_assert!(m.value >= m.grid_value);
            proptest::prop_assert!((f(&m.argmax) - m.value).abs() < 1e-15);
        }
    }
}
