//! Integration engine shared by every diagnostic: adaptive Gauss–Kronrod
//! quadrature (plain and oscillation-aware), the double-time reduction,
//! seeded Monte Carlo and cutoff scans.
//!
//! Every routine reports an error estimate and a convergence flag. Nothing
//! fails silently: callers that need a certified value go through
//! [`IntegralResult::require`].

mod gauss_kronrod;
mod monte_carlo;
mod scan;
mod time;

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gauss_kronrod::{
    gauss_kronrod_21, integrate_adaptive, integrate_oscillatory, integrate_radial, Est,
};
pub use monte_carlo::{mc_integrate, MC_CHUNK};
pub use scan::{cutoff_scan, ScanRecord, ScanThresholds, ScanVerdict};
pub use time::{reduce_double_time, reduce_double_time_phase, TimeKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integral did not converge: value {value:e}, error estimate {error:e} after {evaluations} evaluations")]
    NotConverged {
        value: f64,
        error: f64,
        evaluations: usize,
    },
    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(String),
    #[error("cutoff scan needs at least 4 strictly increasing cutoffs")]
    InvalidScan,
    #[error("Monte Carlo dimension {0} outside 1..=7")]
    BadDimension(usize),
}

/// Tolerances, truncation and sampling budget for one diagnostic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Momentum cutoff Λ_q in units of mass.
    pub momentum_cutoff: f64,
    pub mc_samples: usize,
    pub rng_seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-9,
            max_subdivisions: 4000,
            momentum_cutoff: 20.0,
            mc_samples: 1 << 20,
            rng_seed: 0x5eed_c011_a95e,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        let bad = |m: &str| Err(QuadratureError::InvalidConfig(m.to_string()));
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be > 0");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be > 0");
        }
        if !(self.momentum_cutoff > 0.0 && self.momentum_cutoff.is_finite()) {
            return bad("momentum_cutoff must be > 0");
        }
        if self.mc_samples < 1 {
            return bad("mc_samples must be >= 1");
        }
        if self.max_subdivisions < 1 {
            return bad("max_subdivisions must be >= 1");
        }
        Ok(())
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.momentum_cutoff = cutoff;
        self
    }

    /// Tighter copy for integrals nested inside another adaptive integral.
    pub fn inner(&self) -> Self {
        QuadratureConfig {
            rel_tol: self.rel_tol * 0.1,
            abs_tol: self.abs_tol * 0.1,
            ..*self
        }
    }

    pub fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Scalar types the integrators can accumulate.
pub trait QuadValue:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn norm(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
}

/// Value with error estimate and convergence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult<V = f64> {
    pub value: V,
    pub error_estimate: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl<V: QuadValue> IntegralResult<V> {
    pub fn exact(value: V) -> Self {
        IntegralResult {
            value,
            error_estimate: 0.0,
            converged: true,
            evaluations: 0,
        }
    }

    pub fn zero() -> Self {
        Self::exact(V::zero())
    }

    pub fn require(self) -> Result<Self, QuadratureError> {
        if self.converged {
            Ok(self)
        } else {
            Err(QuadratureError::NotConverged {
                value: self.value.norm(),
                error: self.error_estimate,
                evaluations: self.evaluations,
            })
        }
    }

    pub fn scale(self, s: f64) -> Self {
        IntegralResult {
            value: self.value * s,
            error_estimate: self.error_estimate * s.abs(),
            ..self
        }
    }

    /// Sum of two independent estimates; errors add linearly.
    pub fn combine(self, other: Self) -> Self {
        IntegralResult {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            converged: self.converged && other.converged,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

impl IntegralResult<Complex64> {
    pub fn scale_complex(self, s: Complex64) -> Self {
        IntegralResult {
            value: self.value * s,
            error_estimate: self.error_estimate * s.norm(),
            ..self
        }
    }
}

/// sin(kr)/(kr): angular average of e^{ik·r} over the unit sphere.
pub fn spherical_phase_average(k_mag: f64, r_mag: f64) -> f64 {
    let x = k_mag * r_mag;
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn phase_average_limits() {
        assert_eq!(spherical_phase_average(0.0, 3.0), 1.0);
        assert_eq!(spherical_phase_average(2.0, 0.0), 1.0);
        assert!(spherical_phase_average(1.0, PI).abs() < 1e-15);
        // continuity across the series threshold
        let a = spherical_phase_average(1.0, 0.99999e-4);
        let b = spherical_phase_average(1.0, 1.00001e-4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn phase_average_matches_angular_quadrature() {
        // brute force: (1/4π)∫dφ∫dθ sinθ e^{i k·r} with r tilted off the polar
        // axis; composite Simpson in θ, periodic trapezoid in φ
        for &(k, r) in &[(0.3, 2.0), (1.7, 0.9), (4.0, 3.3), (0.01, 0.5)] {
            let tilt: f64 = 0.4;
            let (nt, np) = (2000usize, 96usize);
            let h = PI / nt as f64;
            let mut avg = 0.0;
            for j in 0..np {
                let phi = 2.0 * PI * j as f64 / np as f64;
                let mut acc = 0.0;
                for i in 0..=nt {
                    let th = i as f64 * h;
                    let w = if i == 0 || i == nt {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let kr = k * r * (th.sin() * phi.cos() * tilt.sin() + th.cos() * tilt.cos());
                    acc += w * kr.cos() * th.sin();
                }
                avg += acc * h / 3.0 * (2.0 * PI / np as f64);
            }
            let avg = avg / (4.0 * PI);
            assert!(
                (avg - spherical_phase_average(k, r)).abs() < 1e-8,
                "k={k} r={r}"
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let mut c = QuadratureConfig::default();
        c.rel_tol = 0.0;
        assert!(c.validate().is_err());
        c = QuadratureConfig::default();
        c.momentum_cutoff = -1.0;
        assert!(c.validate().is_err());
        c = QuadratureConfig::default();
        c.mc_samples = 0;
        assert!(c.validate().is_err());
    }
}
