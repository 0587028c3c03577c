//! Energy rate, microcausality residual and non-relativistic leakage.
//!
//! Every diagnostic is a pure function of its request and returns a value
//! with an error estimate.

mod energy;
mod microcausality;
mod nr;
mod wightman;

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{Mass, SpacetimePoint};
use crate::noise::{NoiseCorrelator, NoiseError};
use crate::quadrature::{IntegralResult, QuadValue, QuadratureConfig, QuadratureError, ScanRecord};
use crate::states::{SingleParticleState, StateError};

pub use energy::{energy_rate, energy_rate_scan, require_finite};
pub use microcausality::{microcausality_residual, MicrocausalityOutcome};
pub use nr::{
    default_probe_grid, nr_leakage, nr_sector_verdict, particle_creation_element, NrVerdict,
    NrVerdictKind, NR_LEAKAGE_RATIO,
};
pub use wightman::{f_function, free_commutator, g2, regulator, wightman_g1, REGULATOR_REACH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(
        "white-noise energy rate diverges with the cutoff (last values {last:e} at Λ = {cutoff})"
    )]
    WhiteNoiseDivergent { last: f64, cutoff: f64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl DiagnosticsError {
    pub fn is_not_converged(&self) -> bool {
        matches!(
            self,
            DiagnosticsError::Quadrature(QuadratureError::NotConverged { .. })
                | DiagnosticsError::Noise(NoiseError::NumericalFourierFailure(
                    QuadratureError::NotConverged { .. }
                ))
                | DiagnosticsError::WhiteNoiseDivergent { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct EnergyRateRequest {
    pub state: SingleParticleState,
    pub noise: NoiseCorrelator,
    pub coupling: f64,
    pub horizon: f64,
    pub cfg: QuadratureConfig,
}

impl EnergyRateRequest {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        positive("coupling γ", self.coupling)?;
        positive("horizon t", self.horizon)?;
        self.cfg.validate()?;
        self.noise.validate()?;
        self.state.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MicrocausalityRequest {
    /// Evolved point; its time component is ignored in favour of `t`.
    pub z1: SpacetimePoint,
    /// Reference point at time 0.
    pub z2: SpacetimePoint,
    pub t: f64,
    pub noise: NoiseCorrelator,
    pub coupling: f64,
    pub mass: Mass,
    pub cfg: QuadratureConfig,
}

impl MicrocausalityRequest {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(DiagnosticsError::InvalidRequest(
                "evolution time must be ≥ 0".into(),
            ));
        }
        if self.z2.time != 0.0 {
            return Err(DiagnosticsError::InvalidRequest(
                "z2 must sit at time 0".into(),
            ));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(DiagnosticsError::InvalidRequest(
                "coupling γ must be ≥ 0".into(),
            ));
        }
        self.cfg.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    pub fn separation(&self) -> [f64; 3] {
        let (a, b) = (self.z1.position, self.z2.position);
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
}

/// One named scalar with its error bar, as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub imag: Option<f64>,
    pub error: f64,
    pub converged: bool,
}

impl ScalarResult {
    pub fn real(name: &str, r: &IntegralResult<f64>) -> Self {
        ScalarResult {
            name: name.into(),
            value: r.value,
            imag: None,
            error: r.error_estimate,
            converged: r.converged,
        }
    }

    pub fn complex(name: &str, r: &IntegralResult<num_complex::Complex64>) -> Self {
        ScalarResult {
            name: name.into(),
            value: r.value.re,
            imag: Some(r.value.im),
            error: r.error_estimate,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScan {
    pub name: String,
    #[serde(flatten)]
    pub record: ScanRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metric: Option<f64>,
}

fn positive(what: &str, v: f64) -> Result<(), DiagnosticsError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DiagnosticsError::InvalidRequest(format!(
            "{what} must be positive, got {v}"
        )))
    }
}

/// Tracks convergence of inner integrals inside an outer adaptive integral.
#[derive(Default)]
pub(crate) struct ConvergenceFlag(Cell<bool>);

impl ConvergenceFlag {
    pub fn new() -> Self {
        ConvergenceFlag(Cell::new(true))
    }

    pub fn note<V: QuadValue>(&self, r: &IntegralResult<V>) {
        if !r.converged {
            self.0.set(false);
        }
    }

    pub fn fail(&self) {
        self.0.set(false);
    }

    pub fn ok(&self) -> bool {
        self.0.get()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use std::f64::consts::PI;

    fn legendre(n: usize, z: f64) -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, z);
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
    }

    /// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
    pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, z);
                let step = p / dp;
                z -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(n, z);
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    }

    /// Nodes and weights mapped to [a, b].
    pub fn gl_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
        let (x, w) = gauss_legendre(n);
        x.iter()
            .zip(&w)
            .map(|(x, w)| (0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w))
            .collect()
    }
}
