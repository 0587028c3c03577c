//! Noise correlators D(x, τ) and their spatial Fourier transforms D̃(|q|, u).
//!
//! Transform convention: D(x, u) = ∫ d³q/(2π)³ e^{iq·x} D̃(q, u).
//! White noise and Dirac temporal kernels are distributions; they never
//! produce pointwise values and surface as [`FourierValue::Delta`].

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{boost, Boost, SpacetimePoint};
use crate::quadrature::{
    integrate_adaptive, spherical_phase_average, QuadratureConfig, QuadratureError, TimeKernel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("correlator is distribution-valued and has no pointwise value")]
    WhiteNoiseNotPointwise,
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid tabulated profile: {0}")]
    InvalidTable(String),
    #[error("tabulated profile has negative spectrum {value:e} at q = {q}")]
    NegativeSpectrum { q: f64, value: f64 },
    #[error("numerical Fourier transform failed: {0}")]
    NumericalFourierFailure(QuadratureError),
    #[error("cannot read profile table: {0}")]
    Io(String),
}

/// Which variable a tabulated spatial profile is given in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileDomain {
    /// g(r) in position space
    Radius,
    /// g̃(q) in momentum space
    Momentum,
}

/// Piecewise-linear table, zero outside its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct Table {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
}

impl TryFrom<RawTable> for Table {
    type Error = NoiseError;
    fn try_from(raw: RawTable) -> Result<Self, NoiseError> {
        match (raw.points, raw.csv) {
            (Some(p), None) => Table::new(
                p.iter().map(|v| v[0]).collect(),
                p.iter().map(|v| v[1]).collect(),
            ),
            (None, Some(path)) => Table::from_csv(path),
            _ => Err(NoiseError::InvalidTable(
                "give exactly one of `points` or `csv`".into(),
            )),
        }
    }
}

impl From<Table> for RawTable {
    fn from(t: Table) -> Self {
        RawTable {
            points: Some(t.x.iter().zip(&t.y).map(|(a, b)| [*a, *b]).collect()),
            csv: None,
        }
    }
}

impl Table {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, NoiseError> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(NoiseError::InvalidTable(
                "need at least two (abscissa, value) rows".into(),
            ));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(NoiseError::InvalidTable("non-finite entry".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NoiseError::InvalidTable(
                "abscissa must be strictly increasing".into(),
            ));
        }
        Ok(Table { x, y })
    }

    /// Two-column CSV `(abscissa, value)`; a non-numeric first row is a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, NoiseError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path.as_ref())
            .map_err(|e| NoiseError::Io(e.to_string()))?;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| NoiseError::Io(e.to_string()))?;
            if rec.len() != 2 {
                return Err(NoiseError::InvalidTable(format!(
                    "row {} has {} columns",
                    i + 1,
                    rec.len()
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    x.push(a);
                    y.push(b);
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(NoiseError::InvalidTable(format!(
                        "row {} is not numeric",
                        i + 1
                    )))
                }
            }
        }
        Table::new(x, y)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let n = self.x.len();
        if v < self.x[0] || v > self.x[n - 1] {
            return 0.0;
        }
        let i = self.x.partition_point(|&a| a <= v).clamp(1, n - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let w = (v - x0) / (x1 - x0);
        self.y[i - 1] * (1.0 - w) + self.y[i] * w
    }

    pub fn abscissa(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn max_abs(&self) -> f64 {
        self.y.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn min_spacing(&self) -> f64 {
        self.x
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialProfile {
    /// g(r) = e^{−r²/2r_C²} / (m₀² (4π r_C²)^{3/2})
    Gaussian {
        r_c: f64,
        #[serde(default = "unit")]
        m0: f64,
    },
    Tabulated {
        domain: ProfileDomain,
        table: Table,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalKernel {
    Dirac,
    /// h(u) = (ω_c/2) e^{−ω_c|u|}
    Exponential {
        omega_c: f64,
    },
    /// h(u) = e^{−u²/2τ_c²} / √(2π τ_c²)
    GaussianTime {
        tau_c: f64,
    },
}

impl TemporalKernel {
    /// h(u); `None` for the Dirac kernel.
    pub fn value(&self, u: f64) -> Option<f64> {
        match *self {
            TemporalKernel::Dirac => None,
            TemporalKernel::Exponential { omega_c } => {
                Some(0.5 * omega_c * (-omega_c * u.abs()).exp())
            }
            TemporalKernel::GaussianTime { tau_c } => {
                Some((-u * u / (2.0 * tau_c * tau_c)).exp() / (2.0 * PI * tau_c * tau_c).sqrt())
            }
        }
    }

    fn validate(&self) -> Result<(), NoiseError> {
        match *self {
            TemporalKernel::Dirac => Ok(()),
            TemporalKernel::Exponential { omega_c: p }
            | TemporalKernel::GaussianTime { tau_c: p } => positive("temporal kernel parameter", p),
        }
    }
}

/// D as a function of the invariant s² = τ² − |x|².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InvariantProfile {
    /// a · exp(−(s²/ℓ²)²)
    Parametric { amplitude: f64, length: f64 },
    /// Linear interpolation in s², zero outside the table.
    Tabulated { table: Table },
}

impl InvariantProfile {
    pub fn value(&self, s2: f64) -> f64 {
        match self {
            InvariantProfile::Parametric { amplitude, length } => {
                let z = s2 / (length * length);
                amplitude * (-z * z).exp()
            }
            InvariantProfile::Tabulated { table } => table.eval(s2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseCorrelator {
    /// strength · δ⁴(x − y)
    WhiteNoise {
        strength: f64,
    },
    /// g(|x|) h(τ)
    Separable {
        spatial: SpatialProfile,
        temporal: TemporalKernel,
    },
    InvariantRadial {
        profile: InvariantProfile,
    },
    /// D ≡ 0: unitary dynamics, the null reference for every diagnostic.
    Zero,
}

/// D̃(|q|, u): an ordinary value or `weight · δ(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FourierValue {
    Value(f64),
    Delta { weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportBound {
    Finite(f64),
    Infinite,
}

impl SupportBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            SupportBound::Finite(v) => Some(v),
            SupportBound::Infinite => None,
        }
    }
}

/// Result of [`NoiseCorrelator::check_invariance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub max_deviation: f64,
    /// max_deviation / |D(0, 0)|
    pub relative_deviation: f64,
    pub scale: f64,
}

fn positive(name: &str, v: f64) -> Result<(), NoiseError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(NoiseError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn radial_cfg() -> QuadratureConfig {
    QuadratureConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_subdivisions: 20_000,
        ..Default::default()
    }
}

impl NoiseCorrelator {
    pub fn white(strength: f64) -> Result<Self, NoiseError> {
        let n = NoiseCorrelator::WhiteNoise { strength };
        n.validate()?;
        Ok(n)
    }

    /// Coloured CSL: Gaussian spatial profile times the given kernel.
    pub fn csl(r_c: f64, m0: f64, temporal: TemporalKernel) -> Result<Self, NoiseError> {
        let n = NoiseCorrelator::Separable {
            spatial: SpatialProfile::Gaussian { r_c, m0 },
            temporal,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match self {
            NoiseCorrelator::WhiteNoise { strength } => positive("strength", *strength),
            NoiseCorrelator::Separable { spatial, temporal } => {
                temporal.validate()?;
                match spatial {
                    SpatialProfile::Gaussian { r_c, m0 } => {
                        positive("r_c", *r_c)?;
                        positive("m0", *m0)
                    }
                    SpatialProfile::Tabulated { domain, table } => check_spectrum(*domain, table),
                }
            }
            NoiseCorrelator::InvariantRadial { profile } => match profile {
                InvariantProfile::Parametric { amplitude, length } => {
                    positive("amplitude", *amplitude)?;
                    positive("length", *length)
                }
                InvariantProfile::Tabulated { table } => {
                    if table.max_abs() == 0.0 {
                        Err(NoiseError::InvalidTable(
                            "profile is identically zero".into(),
                        ))
                    } else {
                        Ok(())
                    }
                }
            },
            NoiseCorrelator::Zero => Ok(()),
        }
    }

    pub fn is_white(&self) -> bool {
        matches!(self, NoiseCorrelator::WhiteNoise { .. })
    }

    pub fn temporal(&self) -> Option<&TemporalKernel> {
        match self {
            NoiseCorrelator::Separable { temporal, .. } => Some(temporal),
            _ => None,
        }
    }

    /// D(x, τ).
    pub fn correlator_value(&self, x: [f64; 3], tau: f64) -> Result<f64, NoiseError> {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        match self {
            NoiseCorrelator::WhiteNoise { .. } => Err(NoiseError::WhiteNoiseNotPointwise),
            NoiseCorrelator::Separable { spatial, temporal } => {
                let h = temporal
                    .value(tau)
                    .ok_or(NoiseError::WhiteNoiseNotPointwise)?;
                Ok(spatial_value(spatial, r)? * h)
            }
            NoiseCorrelator::InvariantRadial { profile } => Ok(profile.value(tau * tau - r * r)),
            NoiseCorrelator::Zero => Ok(0.0),
        }
    }

    /// g̃(|q|) for separable correlators; `None` otherwise.
    pub fn spatial_spectrum(&self, q: f64) -> Option<Result<f64, NoiseError>> {
        match self {
            NoiseCorrelator::Separable { spatial, .. } => Some(spatial_fourier(spatial, q)),
            _ => None,
        }
    }

    /// D̃(|q|, u).
    pub fn fourier_qt(&self, q: f64, u: f64) -> Result<FourierValue, NoiseError> {
        assert!(q >= 0.0, "q_mag must be non-negative");
        match self {
            NoiseCorrelator::WhiteNoise { strength } => Ok(FourierValue::Delta {
                weight: (2.0 * PI).powi(3) * strength,
            }),
            NoiseCorrelator::Separable { spatial, temporal } => {
                let g = spatial_fourier(spatial, q)?;
                Ok(match temporal.value(u) {
                    None => FourierValue::Delta { weight: g },
                    Some(h) => FourierValue::Value(g * h),
                })
            }
            NoiseCorrelator::InvariantRadial { profile } => {
                // 4π ∫ r² sinc(qr) f(u² − r²) dr
                let f = |r: f64| {
                    4.0 * PI * r * r * spherical_phase_average(q, r) * profile.value(u * u - r * r)
                };
                let (upper, bps) = invariant_radial_range(profile, u);
                let res = integrate_adaptive(&f, 0.0, upper, &bps, &radial_cfg())
                    .require()
                    .map_err(NoiseError::NumericalFourierFailure)?;
                Ok(FourierValue::Value(res.value))
            }
            NoiseCorrelator::Zero => Ok(FourierValue::Value(0.0)),
        }
    }

    /// Runs `f` with the temporal kernel u ↦ D̃(q, u) at fixed |q|.
    pub fn with_time_kernel<R>(
        &self,
        q: f64,
        f: impl FnOnce(TimeKernel<'_>) -> R,
    ) -> Result<R, NoiseError> {
        match self {
            NoiseCorrelator::WhiteNoise { .. } => match self.fourier_qt(q, 0.0)? {
                FourierValue::Delta { weight } => Ok(f(TimeKernel::Dirac { weight })),
                FourierValue::Value(_) => unreachable!(),
            },
            NoiseCorrelator::Separable { spatial, temporal } => {
                let g = spatial_fourier(spatial, q)?;
                match temporal {
                    TemporalKernel::Dirac => Ok(f(TimeKernel::Dirac { weight: g })),
                    k => {
                        let h = move |u: f64| g * k.value(u).unwrap_or(0.0);
                        Ok(f(TimeKernel::Smooth(&h)))
                    }
                }
            }
            NoiseCorrelator::InvariantRadial { .. } => {
                let h = |u: f64| match self.fourier_qt(q, u) {
                    Ok(FourierValue::Value(v)) => v,
                    _ => f64::NAN,
                };
                Ok(f(TimeKernel::Smooth(&h)))
            }
            NoiseCorrelator::Zero => Ok(f(TimeKernel::Dirac { weight: 0.0 })),
        }
    }

    /// Smallest Λ with sup_u |D̃(q, u)| < ε · sup |D̃| for all q > Λ.
    pub fn momentum_support_bound(&self, eps: f64) -> Result<SupportBound, NoiseError> {
        if !(eps > 0.0) {
            return Err(NoiseError::InvalidParameter("ε must be positive".into()));
        }
        match self {
            // an invariant profile is constant along the light cone, so its
            // transform grows without bound in u and has no finite envelope
            NoiseCorrelator::WhiteNoise { .. } | NoiseCorrelator::InvariantRadial { .. } => {
                Ok(SupportBound::Infinite)
            }
            NoiseCorrelator::Zero => Ok(SupportBound::Finite(0.0)),
            NoiseCorrelator::Separable { spatial, .. } => match spatial {
                SpatialProfile::Gaussian { r_c, .. } => Ok(SupportBound::Finite(if eps >= 1.0 {
                    0.0
                } else {
                    (2.0 * (1.0 / eps).ln()).sqrt() / r_c
                })),
                SpatialProfile::Tabulated {
                    domain: ProfileDomain::Momentum,
                    table,
                } => {
                    let thr = eps * table.max_abs();
                    let n = table.x.len();
                    let last = (0..n).rev().find(|&i| table.y[i].abs() >= thr);
                    Ok(SupportBound::Finite(match last {
                        Some(i) => table.x[(i + 1).min(n - 1)],
                        None => 0.0,
                    }))
                }
                SpatialProfile::Tabulated {
                    domain: ProfileDomain::Radius,
                    table,
                } => {
                    let (grid, vals) = sample_spectrum(table)?;
                    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let thr = eps * peak;
                    match (0..grid.len()).rev().find(|&i| vals[i].abs() >= thr) {
                        Some(i) if i + 1 == grid.len() => Ok(SupportBound::Infinite),
                        Some(i) => Ok(SupportBound::Finite(grid[i + 1])),
                        None => Ok(SupportBound::Finite(0.0)),
                    }
                }
            },
        }
    }

    /// max |D(Λx, Λy) − D(x, y)| over the sample pairs and boosts.
    pub fn check_invariance(
        &self,
        pairs: &[(SpacetimePoint, SpacetimePoint)],
        boosts: &[Boost],
    ) -> Result<InvarianceReport, NoiseError> {
        let eval = |a: &SpacetimePoint, b: &SpacetimePoint| {
            let d = a.separation(b);
            self.correlator_value(d.position, d.time)
        };
        let scale = self.correlator_value([0.0; 3], 0.0)?.abs();
        let mut max_deviation: f64 = 0.0;
        for (x, y) in pairs {
            let base = eval(x, y)?;
            for b in boosts {
                let moved = eval(&boost(x, b), &boost(y, b))?;
                max_deviation = max_deviation.max((moved - base).abs());
            }
        }
        let relative_deviation = if scale > 0.0 {
            max_deviation / scale
        } else {
            max_deviation
        };
        Ok(InvarianceReport {
            max_deviation,
            relative_deviation,
            scale,
        })
    }
}

fn spatial_value(spatial: &SpatialProfile, r: f64) -> Result<f64, NoiseError> {
    match spatial {
        SpatialProfile::Gaussian { r_c, m0 } => {
            let norm = m0 * m0 * (4.0 * PI * r_c * r_c).powf(1.5);
            Ok((-r * r / (2.0 * r_c * r_c)).exp() / norm)
        }
        SpatialProfile::Tabulated {
            domain: ProfileDomain::Radius,
            table,
        } => Ok(table.eval(r)),
        SpatialProfile::Tabulated {
            domain: ProfileDomain::Momentum,
            table,
        } => {
            // g(r) = (1/2π²) ∫ q² sinc(qr) g̃(q) dq
            let f = |q: f64| q * q * spherical_phase_average(q, r) * table.eval(q);
            let x = table.abscissa();
            let hi = x[x.len() - 1];
            let cfg = QuadratureConfig {
                abs_tol: 1e-13 * table.max_abs() * hi * hi * hi,
                ..radial_cfg()
            };
            let res = integrate_adaptive(&f, x[0].max(0.0), hi, &oscillation_nodes(x, r), &cfg)
                .require()
                .map_err(NoiseError::NumericalFourierFailure)?;
            Ok(res.value / (2.0 * PI * PI))
        }
    }
}

fn spatial_fourier(spatial: &SpatialProfile, q: f64) -> Result<f64, NoiseError> {
    match spatial {
        SpatialProfile::Gaussian { r_c, m0 } => {
            Ok((2.0f64).powf(-1.5) / (m0 * m0) * (-q * q * r_c * r_c / 2.0).exp())
        }
        SpatialProfile::Tabulated {
            domain: ProfileDomain::Momentum,
            table,
        } => Ok(table.eval(q)),
        SpatialProfile::Tabulated {
            domain: ProfileDomain::Radius,
            table,
        } => radius_table_transform(table, q),
    }
}

fn radius_table_transform(table: &Table, q: f64) -> Result<f64, NoiseError> {
    let f = |r: f64| 4.0 * PI * r * r * spherical_phase_average(q, r) * table.eval(r);
    let x = table.abscissa();
    let hi = x[x.len() - 1];
    // absolute floor tied to the spectrum's scale, so deep tails do not chase zero
    let cfg = QuadratureConfig {
        abs_tol: 1e-13 * table.max_abs() * hi * hi * hi,
        ..radial_cfg()
    };
    let res = integrate_adaptive(&f, x[0].max(0.0), hi, &oscillation_nodes(x, q), &cfg)
        .require()
        .map_err(NoiseError::NumericalFourierFailure)?;
    Ok(res.value)
}

/// Table nodes plus a π/rate grid, so kinks and oscillations both sit on panel edges.
fn oscillation_nodes(x: &[f64], rate: f64) -> Vec<f64> {
    let mut nodes = x.to_vec();
    let (lo, hi) = (x[0].max(0.0), x[x.len() - 1]);
    if rate > 0.0 {
        let n = (((hi - lo) * rate / PI).ceil() as usize).min(4000);
        nodes.extend((1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
    }
    nodes
}

fn invariant_radial_range(profile: &InvariantProfile, u: f64) -> (f64, Vec<f64>) {
    match profile {
        InvariantProfile::Parametric { length, .. } => {
            // f is below e^{-40} once |s²| > 40^{1/2} ℓ²
            let reach = 40f64.sqrt().sqrt() * length;
            let upper = (u * u + reach * reach).sqrt();
            let inner = (u * u - reach * reach).max(0.0).sqrt();
            (upper, vec![inner, u.abs()])
        }
        InvariantProfile::Tabulated { table } => {
            let s_lo = table.x[0];
            let upper = if s_lo < u * u {
                (u * u - s_lo).sqrt()
            } else {
                0.0
            };
            let bps = table
                .x
                .iter()
                .filter(|&&s| s < u * u)
                .map(|&s| (u * u - s).sqrt())
                .collect();
            (upper, bps)
        }
    }
}

/// Spectrum of a position-space table on a uniform q grid reaching 8π / (finest spacing).
fn sample_spectrum(table: &Table) -> Result<(Vec<f64>, Vec<f64>), NoiseError> {
    let q_max = 8.0 * PI / table.min_spacing();
    let grid: Vec<f64> = (0..=256).map(|i| q_max * i as f64 / 256.0).collect();
    let vals = grid
        .iter()
        .map(|&q| radius_table_transform(table, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((grid, vals))
}

/// Tolerance for negative spectral values, relative to the spectral peak.
/// Linear interpolation kinks alone leave ~1e-6 ripples in the tail.
const SPECTRUM_NEG_TOL: f64 = 1e-4;

fn check_spectrum(domain: ProfileDomain, table: &Table) -> Result<(), NoiseError> {
    let (grid, vals) = match domain {
        ProfileDomain::Momentum => (table.x.clone(), table.y.clone()),
        ProfileDomain::Radius => sample_spectrum(table)?,
    };
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(NoiseError::InvalidTable(
            "profile is identically zero".into(),
        ));
    }
    for (q, v) in grid.iter().zip(&vals) {
        if *v < -SPECTRUM_NEG_TOL * peak {
            return Err(NoiseError::NegativeSpectrum { q: *q, value: *v });
        }
    }
    Ok(())
}
