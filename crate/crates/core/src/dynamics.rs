//! Geodesic motion of the macrovariables and schedules for `r(tau)`.
//!
//! The geodesic equation uses the analytic Christoffel symbols, which do not
//! depend on `r`. The schedules are evaluated independently of the geodesic;
//! no coupling between `r(tau)` and `(mu, sigma)` is assumed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{christoffel, fisher_metric_analytic, Mode};
use crate::model::{MacroPoint, ModelConfig, R_MAX};
use crate::numerics::rk4_integrate;

/// Position and velocity on the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub theta: MacroPoint,
    /// `(mu_dot, sigma_dot)`.
    pub velocity: [f64; 2],
}

impl GeodesicState {
    pub fn new(theta: MacroPoint, velocity: [f64; 2]) -> Result<Self> {
        theta.validate()?;
        if !velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("velocity must be finite, got {velocity:?}")));
        }
        Ok(Self { theta, velocity })
    }

    fn to_vec(self) -> Vec<f64> {
        vec![self.theta.mu, self.theta.sigma, self.velocity[0], self.velocity[1]]
    }

    fn from_slice(y: &[f64]) -> Self {
        Self {
            theta: MacroPoint { mu: y[0], sigma: y[1] },
            velocity: [y[2], y[3]],
        }
    }
}

/// One sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub tau: f64,
    pub state: GeodesicState,
    /// `g(theta_dot, theta_dot)` at this sample.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// True if the integration stopped at the `sigma > 0` boundary.
    pub truncated: bool,
    /// `max |g(v,v)(tau) / g(v,v)(0) - 1|`; zero for a motionless state.
    pub speed_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        // a trajectory always holds its initial sample
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn tau_max(&self) -> f64 {
        self.last().tau
    }

    /// Position at `tau`, linearly interpolated between samples.
    pub fn theta_at(&self, tau: f64) -> Result<MacroPoint> {
        let first = self.samples[0].tau;
        let last = self.tau_max();
        if !(tau >= first && tau <= last) {
            return Err(Error::InvalidArgument(format!(
                "tau {tau} outside trajectory range [{first}, {last}]"
            )));
        }
        let k = self.samples.partition_point(|s| s.tau < tau);
        if k == 0 {
            return Ok(self.samples[0].state.theta);
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let w = (tau - a.tau) / (b.tau - a.tau);
        Ok(MacroPoint {
            mu: a.state.theta.mu + w * (b.state.theta.mu - a.state.theta.mu),
            sigma: a.state.theta.sigma + w * (b.state.theta.sigma - a.state.theta.sigma),
        })
    }
}

/// Right-hand side `(theta_dot, -G^k_ij theta_dot^i theta_dot^j)`.
pub fn geodesic_rhs(s: &GeodesicState, cfg: &ModelConfig) -> Result<[f64; 4]> {
    let gamma = christoffel(&s.theta, cfg, Mode::Analytic)?.gamma;
    let v = s.velocity;
    let mut acc = [0.0; 2];
    for (k, a) in acc.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                *a -= gamma[k][i][j] * v[i] * v[j];
            }
        }
    }
    Ok([v[0], v[1], acc[0], acc[1]])
}

/// `g(theta_dot, theta_dot)` under the analytic Fisher metric.
pub fn speed(s: &GeodesicState, cfg: &ModelConfig) -> Result<f64> {
    Ok(fisher_metric_analytic(&s.theta, cfg)?.norm_sq(s.velocity))
}

/// RK4 integration of the geodesic equation from `initial` up to `tau_max`.
pub fn integrate_geodesic(initial: &GeodesicState, cfg: &ModelConfig, tau_max: f64, h: f64) -> Result<Trajectory> {
    cfg.validate()?;
    initial.theta.validate()?;
    let sol = rk4_integrate(
        |_, y| {
            let s = GeodesicState::from_slice(y);
            match geodesic_rhs(&s, cfg) {
                Ok(d) => d.to_vec(),
                Err(_) => vec![f64::NAN; 4],
            }
        },
        |y| y[1] > 0.0,
        &initial.to_vec(),
        tau_max,
        h,
    )?;
    let speed0 = speed(initial, cfg)?;
    let mut drift: f64 = 0.0;
    let mut samples = Vec::with_capacity(sol.samples.len());
    for (tau, y) in &sol.samples {
        let state = GeodesicState::from_slice(y);
        let sp = speed(&state, cfg)?;
        if speed0 > 0.0 {
            drift = drift.max((sp / speed0 - 1.0).abs());
        } else {
            drift = drift.max(sp);
        }
        samples.push(TrajectorySample { tau: *tau, state, speed: sp });
    }
    Ok(Trajectory {
        samples,
        truncated: sol.truncated,
        speed_drift: drift,
    })
}

/// A law `tau -> r(tau)` for the external correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RSchedule {
    Constant { r0: f64 },
    /// `r0 e^{-lambda tau}`.
    ExpDecay { r0: f64, lambda: f64 },
    /// `r0 e^{-lambda tau} sin(alpha tau)`.
    DampedOscillation { r0: f64, alpha: f64, lambda: f64 },
}

impl RSchedule {
    pub fn validate(&self) -> Result<()> {
        let (r0, lambda, alpha) = match *self {
            RSchedule::Constant { r0 } => (r0, 0.0, 0.0),
            RSchedule::ExpDecay { r0, lambda } => {
                if !(lambda > 0.0) {
                    return Err(Error::InvalidArgument(format!("decay rate must be positive, got {lambda}")));
                }
                (r0, lambda, 0.0)
            }
            RSchedule::DampedOscillation { r0, alpha, lambda } => {
                if !(lambda >= 0.0) {
                    return Err(Error::InvalidArgument(format!("damping must be non-negative, got {lambda}")));
                }
                (r0, lambda, alpha)
            }
        };
        if !r0.is_finite() || !lambda.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidArgument("schedule parameters must be finite".into()));
        }
        if r0.abs() > R_MAX {
            return Err(Error::Invariant(format!("|r0| must be at most {R_MAX}, got {r0}")));
        }
        Ok(())
    }

    /// `r(tau)`, clamped to `|r| <= R_MAX`.
    pub fn at(&self, tau: f64) -> f64 {
        let r = match *self {
            RSchedule::Constant { r0 } => r0,
            RSchedule::ExpDecay { r0, lambda } => r0 * (-lambda * tau).exp(),
            RSchedule::DampedOscillation { r0, alpha, lambda } => r0 * (-lambda * tau).exp() * (alpha * tau).sin(),
        };
        r.clamp(-R_MAX, R_MAX)
    }
}

/// Checked form of [`RSchedule::at`].
pub fn schedule_r(s: &RSchedule, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be non-negative, got {tau}")));
    }
    Ok(s.at(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn cfg(r: f64) -> ModelConfig {
        ModelConfig::new(1.0, r).unwrap()
    }

    fn state(mu: f64, sigma: f64, v: [f64; 2]) -> GeodesicState {
        GeodesicState::new(MacroPoint::new(mu, sigma).unwrap(), v).unwrap()
    }

    #[test]
    fn rhs_structure() {
        let d = geodesic_rhs(&state(0.0, 1.7, [0.0, 0.8]), &cfg(0.2)).unwrap();
        assert_eq!(d[2], 0.0);
        assert!((d[3] - 0.64 / 1.7).abs() < 1e-15);
        let d = geodesic_rhs(&state(0.0, 1.0, [1.5, 0.0]), &cfg(0.0)).unwrap();
        assert!((d[3] + 1.5 * 1.5 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn vertical_geodesic_is_exponential() {
        let k = 0.7;
        let t = integrate_geodesic(&state(0.3, 1.0, [0.0, k]), &cfg(0.4), 1.0, 1e-3).unwrap();
        let last = t.last();
        assert_eq!(last.tau, 1.0);
        assert!((last.state.theta.sigma - k.exp()).abs() < 1e-8);
        assert_eq!(last.state.theta.mu, 0.3);
        assert!(!t.truncated);
    }

    #[test]
    fn speed_is_conserved() {
        let t = integrate_geodesic(&state(0.0, 1.0, [1.3, -0.4]), &cfg(0.5), 5.0, 1e-3).unwrap();
        assert!(t.speed_drift / 5.0 < 1e-8, "drift {}", t.speed_drift);
    }

    #[test]
    fn zero_velocity_stays_put() {
        let s0 = state(2.0, 0.5, [0.0, 0.0]);
        let t = integrate_geodesic(&s0, &cfg(0.0), 2.0, 0.01).unwrap();
        assert!(t.samples.iter().all(|s| s.state == s0));
        assert_eq!(t.speed_drift, 0.0);
    }

    #[test]
    fn time_reversal() {
        let s0 = state(-0.5, 1.2, [0.9, 0.3]);
        let fwd = integrate_geodesic(&s0, &cfg(0.3), 3.0, 1e-3).unwrap();
        let end = fwd.last().state;
        let back_start = GeodesicState::new(end.theta, [-end.velocity[0], -end.velocity[1]]).unwrap();
        let back = integrate_geodesic(&back_start, &cfg(0.3), 3.0, 1e-3).unwrap();
        let b = back.last().state;
        assert!((b.theta.mu - s0.theta.mu).abs() < 1e-7);
        assert!((b.theta.sigma - s0.theta.sigma).abs() < 1e-7);
        assert!((b.velocity[0] + s0.velocity[0]).abs() < 1e-7);
        assert!((b.velocity[1] + s0.velocity[1]).abs() < 1e-7);
    }

    #[test]
    fn order_check_on_vertical_geodesic() {
        let err = |h: f64| {
            let t = integrate_geodesic(&state(0.0, 1.0, [0.0, 1.0]), &cfg(0.0), 1.0, h).unwrap();
            (t.last().state.theta.sigma - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 8.0, "ratio {ratio}");
    }

    #[test]
    fn paths_do_not_depend_on_constant_r() {
        let s0 = state(0.0, 0.8, [0.6, 0.2]);
        let a = integrate_geodesic(&s0, &cfg(0.0), 2.0, 1e-2).unwrap();
        let b = integrate_geodesic(&s0, &cfg(0.9), 2.0, 1e-2).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.state, y.state);
        }
    }

    #[test]
    fn truncation_at_sigma_boundary() {
        // a steep descent overshoots sigma = 0 with a coarse step
        let t = integrate_geodesic(&state(0.0, 1.0, [0.0, -50.0]), &cfg(0.0), 1.0, 0.1).unwrap();
        assert!(t.truncated);
        assert!(t.samples.iter().all(|s| s.state.theta.sigma > 0.0));
    }

    #[test]
    fn interpolation_along_trajectory() {
        let t = integrate_geodesic(&state(0.0, 1.0, [1.0, 0.0]), &cfg(0.0), 1.0, 0.1).unwrap();
        let mid = t.theta_at(0.05).unwrap();
        let (a, b) = (t.samples[0].state.theta, t.samples[1].state.theta);
        assert!((mid.mu - 0.5 * (a.mu + b.mu)).abs() < 1e-15);
        assert!(t.theta_at(1.5).is_err());
        assert_eq!(t.theta_at(1.0).unwrap(), t.last().state.theta);
    }

    #[test]
    fn schedule_examples() {
        let c = RSchedule::Constant { r0: 0.5 };
        assert_eq!(schedule_r(&c, 0.0).unwrap(), 0.5);
        assert_eq!(schedule_r(&c, 123.0).unwrap(), 0.5);
        let e = RSchedule::ExpDecay { r0: 0.8, lambda: 1.0 };
        assert!((schedule_r(&e, LN_2).unwrap() - 0.4).abs() < 1e-15);
        let d = RSchedule::DampedOscillation { r0: 0.5, alpha: PI, lambda: 0.0 };
        assert!((schedule_r(&d, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(schedule_r(&c, -1.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(RSchedule::ExpDecay { r0: 0.5, lambda: 0.0 }.validate().is_err());
        assert!(RSchedule::DampedOscillation { r0: 0.5, alpha: 1.0, lambda: -1.0 }.validate().is_err());
        assert!(RSchedule::Constant { r0: 1.0 }.validate().is_err());
        assert!(RSchedule::Constant { r0: -0.999 }.validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn schedules_stay_admissible(r0 in -1.0f64..1.0, lambda in 0.001f64..3.0, alpha in -5.0f64..5.0, tau in 0.0f64..100.0) {
            for s in [
                RSchedule::Constant { r0 },
                RSchedule::ExpDecay { r0, lambda },
                RSchedule::DampedOscillation { r0, alpha, lambda },
            ] {
                proptest::prop_assert!(s.at(tau).abs() <= R_MAX);
            }
        }
    }
}
