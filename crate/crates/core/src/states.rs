//! Single-particle states ρ = ∫dp∫dq A(p, q) a†_p|0⟩⟨0|a_q.
//!
//! Kets are δ-normalized in momentum, so Tr ρ = ∫d³p A(p, p). Packet
//! families are evaluated analytically; the 1D lattice kernel stores a
//! matrix on p_i = (i − N/2)Δp along the x axis.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{energy, energy_from_norm_sqr, Mass, ThreeMomentum};
use crate::quadrature::{integrate_adaptive, IntegralResult, QuadValue, QuadratureConfig};

/// Deviation from unit trace beyond which a state is rejected.
pub const TRACE_TOLERANCE: f64 = 1e-6;
/// Relative size of |A| that counts as "zero" outside the NR region.
pub const NR_VIOLATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state trace is {0}, expected 1")]
    NotNormalized(f64),
    #[error("amplitude kernel is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("invalid state parameter: {0}")]
    InvalidParameter(String),
    #[error("lattice file: {0}")]
    Io(String),
}

/// Momentum-to-mass ratio bounding the non-relativistic sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NrThreshold(f64);

impl NrThreshold {
    pub fn new(kappa: f64) -> Result<Self, StateError> {
        if kappa > 0.0 && kappa.is_finite() {
            Ok(NrThreshold(kappa))
        } else {
            Err(StateError::InvalidParameter(format!(
                "κ must be positive, got {kappa}"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for NrThreshold {
    fn default() -> Self {
        NrThreshold(0.1)
    }
}

impl TryFrom<f64> for NrThreshold {
    type Error = StateError;
    fn try_from(v: f64) -> Result<Self, StateError> {
        NrThreshold::new(v)
    }
}

impl From<NrThreshold> for f64 {
    fn from(k: NrThreshold) -> f64 {
        k.0
    }
}

/// 1D momentum grid p_i = (i − N/2)·Δp along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumLattice {
    pub n: usize,
    pub spacing: f64,
}

impl MomentumLattice {
    pub fn new(n: usize, spacing: f64) -> Result<Self, StateError> {
        if n < 2 {
            return Err(StateError::InvalidParameter(
                "lattice needs at least 2 sites".into(),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(StateError::InvalidParameter(
                "lattice spacing must be positive".into(),
            ));
        }
        Ok(MomentumLattice { n, spacing })
    }

    pub fn momentum(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.spacing
    }

    /// Site index of `p`, if `p` lies on the grid (to 1e−9 of a spacing).
    pub fn index_of(&self, p: &ThreeMomentum) -> Option<usize> {
        let c = p.0;
        if c[1].abs() > 1e-9 * self.spacing || c[2].abs() > 1e-9 * self.spacing {
            return None;
        }
        let x = c[0] / self.spacing + (self.n / 2) as f64;
        let i = x.round();
        if (x - i).abs() > 1e-9 || i < 0.0 || i >= self.n as f64 {
            return None;
        }
        Some(i as usize)
    }

    pub fn energies(&self, m: Mass) -> Vec<f64> {
        (0..self.n)
            .map(|i| energy_from_norm_sqr(self.momentum(i).powi(2), m.value()))
            .collect()
    }
}

/// Kernel samples A_ij = A(p_i, p_j) on a lattice; Tr = Σ A_ii Δp.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeKernel {
    pub lattice: MomentumLattice,
    pub matrix: DMatrix<Complex64>,
}

impl LatticeKernel {
    /// Validates shape, hermiticity (1e−12 relative) and unit trace.
    pub fn new(lattice: MomentumLattice, matrix: DMatrix<Complex64>) -> Result<Self, StateError> {
        if matrix.nrows() != lattice.n || matrix.ncols() != lattice.n {
            return Err(StateError::InvalidParameter(format!(
                "matrix is {}x{}, lattice has {} sites",
                matrix.nrows(),
                matrix.ncols(),
                lattice.n
            )));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let herm = (&matrix - matrix.adjoint())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()));
        if herm > 1e-12 * scale.max(1e-300) {
            return Err(StateError::NotHermitian(herm));
        }
        let k = LatticeKernel { lattice, matrix };
        let tr = k.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(StateError::NotNormalized(tr));
        }
        Ok(k)
    }

    /// Rescales an arbitrary hermitian matrix to unit trace.
    pub fn normalized(
        lattice: MomentumLattice,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self, StateError> {
        let tr: f64 = matrix.diagonal().iter().map(|z| z.re).sum::<f64>() * lattice.spacing;
        if !(tr.abs() > 0.0) {
            return Err(StateError::NotNormalized(tr));
        }
        Self::new(lattice, matrix.map(|z| z / tr))
    }

    /// Maximally mixed state: A_ii = 1/(NΔp).
    pub fn uniform_mix(lattice: MomentumLattice) -> Self {
        let v = 1.0 / (lattice.n as f64 * lattice.spacing);
        let matrix = DMatrix::from_fn(lattice.n, lattice.n, |i, j| {
            if i == j {
                Complex64::new(v, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        LatticeKernel { lattice, matrix }
    }

    /// Pure state with amplitudes ψ_i sampled from `psi`, normalized on the grid.
    pub fn pure(
        lattice: MomentumLattice,
        psi: impl Fn(f64) -> Complex64,
    ) -> Result<Self, StateError> {
        let v: Vec<Complex64> = (0..lattice.n).map(|i| psi(lattice.momentum(i))).collect();
        let matrix = DMatrix::from_fn(lattice.n, lattice.n, |i, j| v[i] * v[j].conj());
        Self::normalized(lattice, matrix)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum::<f64>() * self.lattice.spacing
    }

    /// CSV: one row per p_L index, columns re/im interleaved over p_R.
    /// A JSON header `<path>.json` describes the grid.
    pub fn save(&self, path: &Path, mass: Mass) -> Result<(), StateError> {
        let io = |e: std::io::Error| StateError::Io(e.to_string());
        let header = LatticeHeader {
            n: self.lattice.n,
            spacing: self.lattice.spacing,
            mass: mass.value(),
        };
        fs::write(
            header_path(path),
            serde_json::to_string_pretty(&header).unwrap(),
        )
        .map_err(io)?;
        let mut w = csv::Writer::from_path(path).map_err(|e| StateError::Io(e.to_string()))?;
        for i in 0..self.lattice.n {
            let row: Vec<String> = (0..self.lattice.n)
                .flat_map(|j| {
                    let z = self.matrix[(i, j)];
                    [format!("{:e}", z.re), format!("{:e}", z.im)]
                })
                .collect();
            w.write_record(&row)
                .map_err(|e| StateError::Io(e.to_string()))?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<(Self, Mass), StateError> {
        let text =
            fs::read_to_string(header_path(path)).map_err(|e| StateError::Io(e.to_string()))?;
        let h: LatticeHeader =
            serde_json::from_str(&text).map_err(|e| StateError::Io(e.to_string()))?;
        let lattice = MomentumLattice::new(h.n, h.spacing)?;
        let mass = Mass::new(h.mass).map_err(|e| StateError::InvalidParameter(e.to_string()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| StateError::Io(e.to_string()))?;
        let mut matrix = DMatrix::zeros(h.n, h.n);
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| StateError::Io(e.to_string()))?;
            if i >= h.n || rec.len() != 2 * h.n {
                return Err(StateError::Io(format!(
                    "row {} does not match a {}-site grid",
                    i + 1,
                    h.n
                )));
            }
            for j in 0..h.n {
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| StateError::Io(e.to_string()))
                };
                matrix[(i, j)] = Complex64::new(parse(&rec[2 * j])?, parse(&rec[2 * j + 1])?);
            }
            rows += 1;
        }
        if rows != h.n {
            return Err(StateError::Io(format!(
                "expected {} rows, found {rows}",
                h.n
            )));
        }
        Ok((LatticeKernel::new(lattice, matrix)?, mass))
    }
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeHeader {
    n: usize,
    spacing: f64,
    mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Amplitude {
    /// ψ(p) = (2πσ²)^{−3/4} e^{−|p−p₀|²/4σ²}, A = ψψ*
    GaussianPacket {
        center: ThreeMomentum,
        sigma: f64,
    },
    /// ψ ∝ ψ₀ + e^{iφ}ψ₁ with equal widths
    TwoPacket {
        centers: [ThreeMomentum; 2],
        sigma: f64,
        phase: f64,
    },
    Lattice(LatticeKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleParticleState {
    pub mass: Mass,
    pub amplitude: Amplitude,
}

/// Result of the NR-sector predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrCheck {
    pub nonrelativistic: bool,
    /// sup |A| over the excluded region divided by sup |A|. For two-packet
    /// states this is an upper bound.
    pub max_violation: f64,
}

fn packet_wave(p: &ThreeMomentum, center: &ThreeMomentum, sigma: f64) -> f64 {
    (2.0 * PI * sigma * sigma).powf(-0.75)
        * (-(*p - *center).norm_sqr() / (4.0 * sigma * sigma)).exp()
}

/// (1/4π)∫dΩ_p of the unit-variance-σ² Gaussian density centred at distance `a`.
fn shell_average(p: f64, a: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let pre = (2.0 * PI * s2).powf(-1.5);
    let x = 2.0 * p * a / s2;
    let ratio = if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    };
    pre * (-(p - a).powi(2) / (2.0 * s2)).exp() * ratio
}

impl SingleParticleState {
    pub fn gaussian(mass: Mass, center: ThreeMomentum, sigma: f64) -> Result<Self, StateError> {
        check_sigma(sigma)?;
        Ok(SingleParticleState {
            mass,
            amplitude: Amplitude::GaussianPacket { center, sigma },
        })
    }

    pub fn two_packet(
        mass: Mass,
        centers: [ThreeMomentum; 2],
        sigma: f64,
        phase: f64,
    ) -> Result<Self, StateError> {
        check_sigma(sigma)?;
        if !phase.is_finite() {
            return Err(StateError::InvalidParameter("phase must be finite".into()));
        }
        let s = SingleParticleState {
            mass,
            amplitude: Amplitude::TwoPacket {
                centers,
                sigma,
                phase,
            },
        };
        if s.two_packet_norm_sqr().is_none() {
            return Err(StateError::NotNormalized(0.0));
        }
        Ok(s)
    }

    pub fn lattice(mass: Mass, kernel: LatticeKernel) -> Self {
        SingleParticleState {
            mass,
            amplitude: Amplitude::Lattice(kernel),
        }
    }

    /// N² = 1 / (2 + 2 cos φ · e^{−d²/8σ²}).
    fn two_packet_norm_sqr(&self) -> Option<f64> {
        let Amplitude::TwoPacket {
            centers,
            sigma,
            phase,
        } = &self.amplitude
        else {
            return None;
        };
        let d2 = (centers[0] - centers[1]).norm_sqr();
        let denom = 2.0 + 2.0 * phase.cos() * (-d2 / (8.0 * sigma * sigma)).exp();
        (denom > 1e-12).then(|| 1.0 / denom)
    }

    fn wave(&self, p: &ThreeMomentum) -> Complex64 {
        match &self.amplitude {
            Amplitude::GaussianPacket { center, sigma } => {
                Complex64::new(packet_wave(p, center, *sigma), 0.0)
            }
            Amplitude::TwoPacket {
                centers,
                sigma,
                phase,
            } => {
                let n = self.two_packet_norm_sqr().unwrap().sqrt();
                (Complex64::new(packet_wave(p, &centers[0], *sigma), 0.0)
                    + Complex64::from_polar(packet_wave(p, &centers[1], *sigma), *phase))
                    * n
            }
            Amplitude::Lattice(_) => unreachable!("lattice states have no wavefunction"),
        }
    }

    /// A(p, q).
    pub fn amplitude(&self, p: &ThreeMomentum, q: &ThreeMomentum) -> Complex64 {
        match &self.amplitude {
            Amplitude::Lattice(k) => match (k.lattice.index_of(p), k.lattice.index_of(q)) {
                (Some(i), Some(j)) => k.matrix[(i, j)],
                _ => Complex64::new(0.0, 0.0),
            },
            _ => self.wave(p) * self.wave(q).conj(),
        }
    }

    /// Angular average of A(p, p) over directions of p at fixed |p|.
    /// Not defined for lattice states.
    pub fn shell_density(&self, p: f64) -> f64 {
        match &self.amplitude {
            Amplitude::GaussianPacket { center, sigma } => shell_average(p, center.norm(), *sigma),
            Amplitude::TwoPacket {
                centers,
                sigma,
                phase,
            } => {
                let n2 = self.two_packet_norm_sqr().unwrap();
                let d2 = (centers[0] - centers[1]).norm_sqr();
                let mid = (centers[0] + centers[1]).scale(0.5);
                let overlap = (-d2 / (8.0 * sigma * sigma)).exp();
                n2 * (shell_average(p, centers[0].norm(), *sigma)
                    + shell_average(p, centers[1].norm(), *sigma)
                    + 2.0 * phase.cos() * overlap * shell_average(p, mid.norm(), *sigma))
            }
            Amplitude::Lattice(_) => panic!("shell_density is not defined for lattice states"),
        }
    }

    /// Radial range [lo, hi] outside which the packet density is below e^{−50}
    /// of its peak, plus the centre radii as breakpoints.
    pub fn radial_support(&self) -> Option<(f64, f64, Vec<f64>)> {
        let (radii, sigma): (Vec<f64>, f64) = match &self.amplitude {
            Amplitude::GaussianPacket { center, sigma } => (vec![center.norm()], *sigma),
            Amplitude::TwoPacket { centers, sigma, .. } => (
                vec![
                    centers[0].norm(),
                    centers[1].norm(),
                    (centers[0] + centers[1]).scale(0.5).norm(),
                ],
                *sigma,
            ),
            Amplitude::Lattice(_) => return None,
        };
        let reach = 10.0 * sigma;
        let lo = radii.iter().fold(f64::INFINITY, |m, r| m.min(*r)) - reach;
        let hi = radii.iter().fold(0.0f64, |m, r| m.max(*r)) + reach;
        Some((lo.max(0.0), hi, radii))
    }

    /// ∫d³p A(p, p) f(|p|). Packets: adaptive radial quadrature over
    /// [`radial_support`](Self::radial_support); lattice: Σ A_ii Δp f(|p_i|).
    pub fn integrate_diagonal<V, F>(&self, f: F, cfg: &QuadratureConfig) -> IntegralResult<V>
    where
        V: QuadValue,
        F: Fn(f64) -> V,
    {
        match &self.amplitude {
            Amplitude::Lattice(k) => {
                let mut acc = V::zero();
                for i in 0..k.lattice.n {
                    let w = k.matrix[(i, i)].re * k.lattice.spacing;
                    if w != 0.0 {
                        acc = acc + f(k.lattice.momentum(i).abs()) * w;
                    }
                }
                IntegralResult::exact(acc)
            }
            _ => {
                let (lo, hi, bps) = self.radial_support().unwrap();
                let g = |p: f64| f(p) * (4.0 * PI * p * p * self.shell_density(p));
                integrate_adaptive(&g, lo, hi, &bps, cfg)
            }
        }
    }

    /// Tr ρ: exact for packets, lattice sum otherwise.
    pub fn trace(&self) -> f64 {
        match &self.amplitude {
            Amplitude::Lattice(k) => k.trace(),
            _ => 1.0,
        }
    }

    /// Tr ρ by radial quadrature of the diagonal.
    pub fn trace_numeric(&self, cfg: &QuadratureConfig) -> IntegralResult<f64> {
        self.integrate_diagonal(|_| 1.0, cfg)
    }

    /// Rejects states whose trace deviates from 1 by more than [`TRACE_TOLERANCE`].
    pub fn validate(&self) -> Result<(), StateError> {
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(StateError::NotNormalized(tr));
        }
        Ok(())
    }

    /// ⟨H⟩ = ∫d³p A(p, p) E_p.
    pub fn mean_energy(&self, cfg: &QuadratureConfig) -> IntegralResult<f64> {
        let m = self.mass.value();
        self.integrate_diagonal(|p| energy_from_norm_sqr(p * p, m), cfg)
    }

    /// Whether A vanishes (relative [`NR_VIOLATION_TOLERANCE`]) once either
    /// momentum exceeds κm.
    pub fn is_nonrelativistic(&self, kappa: NrThreshold) -> NrCheck {
        let cut = kappa.value() * self.mass.value();
        let max_violation = match &self.amplitude {
            Amplitude::Lattice(k) => {
                let peak = k.matrix.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                let mut worst = 0.0f64;
                for i in 0..k.lattice.n {
                    for j in 0..k.lattice.n {
                        if k.lattice.momentum(i).abs() > cut || k.lattice.momentum(j).abs() > cut {
                            worst = worst.max(k.matrix[(i, j)].norm());
                        }
                    }
                }
                if peak > 0.0 {
                    worst / peak
                } else {
                    0.0
                }
            }
            // |A(p, q)| = |ψ(p)||ψ(q)|, so the ratio is sup_{|p|>κm}|ψ| / sup|ψ|
            Amplitude::GaussianPacket { center, sigma } => {
                let d = (cut - center.norm()).max(0.0);
                (-d * d / (4.0 * sigma * sigma)).exp()
            }
            Amplitude::TwoPacket { centers, sigma, .. } => {
                let tail: f64 = centers
                    .iter()
                    .map(|c| {
                        let d = (cut - c.norm()).max(0.0);
                        (-d * d / (4.0 * sigma * sigma)).exp()
                    })
                    .sum();
                let n = self.two_packet_norm_sqr().unwrap().sqrt();
                let outside = n * (2.0 * PI * sigma * sigma).powf(-0.75) * tail;
                (outside / self.two_packet_peak()).min(1.0)
            }
        };
        NrCheck {
            nonrelativistic: max_violation < NR_VIOLATION_TOLERANCE,
            max_violation,
        }
    }

    /// sup |ψ| for two packets; it lies on the line through the centres.
    fn two_packet_peak(&self) -> f64 {
        let Amplitude::TwoPacket { centers, sigma, .. } = &self.amplitude else {
            unreachable!()
        };
        let dir = centers[1] - centers[0];
        let span = dir.norm() + 8.0 * sigma;
        let unit = if dir.norm() > 0.0 {
            dir.scale(1.0 / dir.norm())
        } else {
            ThreeMomentum::along_x(1.0)
        };
        let at = |s: f64| self.wave(&(centers[0] + unit.scale(s))).norm();
        let n = 4000;
        let (mut best_s, mut best) = (0.0, at(0.0));
        for i in 0..=n {
            let s = -4.0 * sigma + span * i as f64 / n as f64;
            let v = at(s);
            if v > best {
                best = v;
                best_s = s;
            }
        }
        // refine by golden section on the bracketing cell
        let h = span / n as f64;
        let (mut a, mut b) = (best_s - h, best_s + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if at(c) > at(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(at(0.5 * (a + b)))
    }

    pub fn energy_at(&self, p: &ThreeMomentum) -> f64 {
        energy(p, self.mass)
    }

    /// Packet centres and width, when the state is a packet family.
    pub fn packet_geometry(&self) -> Option<(Vec<ThreeMomentum>, f64)> {
        match &self.amplitude {
            Amplitude::GaussianPacket { center, sigma } => Some((vec![*center], *sigma)),
            Amplitude::TwoPacket { centers, sigma, .. } => Some((centers.to_vec(), *sigma)),
            Amplitude::Lattice(_) => None,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<(), StateError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(StateError::InvalidParameter(format!(
            "σ must be positive, got {sigma}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1() -> Mass {
        Mass::new(1.0).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            ..Default::default()
        }
    }

    /// Brute-force ∫d³p f(p) on a Cartesian product grid (composite Simpson).
    fn cube_integral(
        f: impl Fn(&ThreeMomentum) -> f64,
        center: ThreeMomentum,
        half: f64,
        n: usize,
    ) -> f64 {
        let h = 2.0 * half / n as f64;
        let w = |i: usize| {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut acc = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let p = center
                        + ThreeMomentum::new(
                            -half + i as f64 * h,
                            -half + j as f64 * h,
                            -half + k as f64 * h,
                        );
                    acc += w(i) * w(j) * w(k) * f(&p);
                }
            }
        }
        acc * (h / 3.0).powi(3)
    }

    #[test]
    fn gaussian_peak_value() {
        let sigma: f64 = 0.3;
        let p0 = ThreeMomentum::new(0.2, -0.1, 0.4);
        let s = SingleParticleState::gaussian(m1(), p0, sigma).unwrap();
        let a = s.amplitude(&p0, &p0);
        assert!((a.re - (2.0 * PI * sigma * sigma).powf(-1.5)).abs() < 1e-12 * a.re);
        assert_eq!(a.im, 0.0);
    }

    #[test]
    fn gaussian_trace_quadrature() {
        let s =
            SingleParticleState::gaussian(m1(), ThreeMomentum::new(0.3, 0.0, 0.1), 0.05).unwrap();
        assert_eq!(s.trace(), 1.0);
        assert!((s.trace_numeric(&cfg()).value - 1.0).abs() < 1e-8);
        // cartesian brute force, independent of the shell average
        let bf = cube_integral(
            |p| s.amplitude(p, p).re,
            ThreeMomentum::new(0.3, 0.0, 0.1),
            0.5,
            80,
        );
        assert!((bf - 1.0).abs() < 1e-8, "{bf}");
    }

    #[test]
    fn two_packet_trace_with_interference() {
        let c = [
            ThreeMomentum::new(0.1, 0.0, 0.0),
            ThreeMomentum::new(-0.05, 0.05, 0.0),
        ];
        for phase in [0.0, 1.0, PI - 0.3] {
            let s = SingleParticleState::two_packet(m1(), c, 0.08, phase).unwrap();
            assert!((s.trace_numeric(&cfg()).value - 1.0).abs() < 1e-8);
            let bf = cube_integral(
                |p| s.amplitude(p, p).re,
                ThreeMomentum::new(0.025, 0.025, 0.0),
                0.8,
                80,
            );
            assert!((bf - 1.0).abs() < 1e-7, "phase {phase}: {bf}");
        }
    }

    #[test]
    fn shell_density_matches_angular_quadrature() {
        let s =
            SingleParticleState::gaussian(m1(), ThreeMomentum::new(0.0, 0.3, 0.4), 0.2).unwrap();
        for p in [0.0, 0.1, 0.5, 0.9] {
            let (nt, np) = (400usize, 64usize);
            let mut acc = 0.0;
            for i in 0..=nt {
                let th = PI * i as f64 / nt as f64;
                let w = if i == 0 || i == nt {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                for j in 0..np {
                    let ph = 2.0 * PI * j as f64 / np as f64;
                    let q = ThreeMomentum::new(
                        p * th.sin() * ph.cos(),
                        p * th.sin() * ph.sin(),
                        p * th.cos(),
                    );
                    acc += w
                        * th.sin()
                        * s.amplitude(&q, &q).re
                        * (PI / nt as f64 / 3.0)
                        * (2.0 * PI / np as f64);
                }
            }
            let avg = acc / (4.0 * PI);
            assert!(
                (avg - s.shell_density(p)).abs() < 1e-9 * s.shell_density(0.5),
                "p={p}"
            );
        }
    }

    #[test]
    fn mean_energy_examples() {
        let rest = SingleParticleState::gaussian(m1(), ThreeMomentum::ZERO, 1e-4).unwrap();
        assert!((rest.mean_energy(&cfg()).value - 1.0).abs() < 1e-7);
        let moving =
            SingleParticleState::gaussian(m1(), ThreeMomentum::along_x(1.0), 0.01).unwrap();
        let e = moving.mean_energy(&cfg()).value;
        // narrow-packet saddle plus the σ² Laplacian correction: √2 + σ²(3/E − p²/E³)/2
        let corr = 0.01f64.powi(2) * (3.0 / 2f64.sqrt() - 1.0 / 2f64.powf(1.5)) / 2.0;
        assert!((e - 2f64.sqrt() - corr).abs() < 1e-8, "{e}");
        let lat = MomentumLattice::new(8, 0.3).unwrap();
        let mix = SingleParticleState::lattice(m1(), LatticeKernel::uniform_mix(lat));
        let mean: f64 = lat.energies(m1()).iter().sum::<f64>() / 8.0;
        assert!((mix.mean_energy(&cfg()).value - mean).abs() < 1e-14);
    }

    #[test]
    fn uniform_mix_amplitude() {
        let lat = MomentumLattice::new(10, 0.05).unwrap();
        let s = SingleParticleState::lattice(m1(), LatticeKernel::uniform_mix(lat));
        let p = ThreeMomentum::along_x(lat.momentum(3));
        assert!((s.amplitude(&p, &p).re - 1.0 / (10.0 * 0.05)).abs() < 1e-12);
        assert!((s.trace() - 1.0).abs() < 1e-14);
        // off-grid queries are zero
        assert_eq!(s.amplitude(&ThreeMomentum::along_x(0.013), &p).norm(), 0.0);
        assert_eq!(
            s.amplitude(&ThreeMomentum::new(lat.momentum(3), 0.1, 0.0), &p)
                .norm(),
            0.0
        );
    }

    #[test]
    fn nr_examples() {
        let k = NrThreshold::new(0.1).unwrap();
        let slow = SingleParticleState::gaussian(m1(), ThreeMomentum::ZERO, 0.01).unwrap();
        assert!(slow.is_nonrelativistic(k).nonrelativistic);
        let fast = SingleParticleState::gaussian(m1(), ThreeMomentum::along_x(5.0), 0.01).unwrap();
        let c = fast.is_nonrelativistic(k);
        assert!(!c.nonrelativistic);
        assert_eq!(c.max_violation, 1.0);
        // lattice zeroed outside |p| < 0.05
        let lat = MomentumLattice::new(40, 0.01).unwrap();
        let kern = LatticeKernel::pure(lat, |p| {
            if p.abs() < 0.05 {
                Complex64::new((-p * p / 0.001).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        assert!(
            SingleParticleState::lattice(m1(), kern)
                .is_nonrelativistic(k)
                .nonrelativistic
        );
        assert!(NrThreshold::new(0.0).is_err());
    }

    #[test]
    fn lattice_validation() {
        let lat = MomentumLattice::new(3, 0.5).unwrap();
        let mut m = DMatrix::from_element(3, 3, Complex64::new(0.0, 0.0));
        m[(0, 0)] = Complex64::new(2.0, 0.0);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        m[(1, 0)] = Complex64::new(0.0, 1.0);
        assert!(matches!(
            LatticeKernel::new(lat, m.clone()),
            Err(StateError::NotHermitian(_))
        ));
        m[(1, 0)] = Complex64::new(0.0, -1.0);
        assert!(LatticeKernel::new(lat, m.clone()).is_ok());
        m[(1, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            LatticeKernel::new(lat, m.clone()),
            Err(StateError::NotNormalized(_))
        ));
        assert!((LatticeKernel::normalized(lat, m).unwrap().trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lattice_csv_round_trip() {
        let lat = MomentumLattice::new(5, 0.1).unwrap();
        let k =
            LatticeKernel::pure(lat, |p| Complex64::from_polar((-p * p).exp(), 3.0 * p)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        k.save(&path, m1()).unwrap();
        let (back, mass) = LatticeKernel::load(&path).unwrap();
        assert_eq!(mass, m1());
        assert!((&back.matrix - &k.matrix).iter().all(|z| z.norm() < 1e-15));
        assert!(dir.path().join("rho.csv.json").exists());
    }

    proptest! {
        #[test]
        fn hermitian_and_normalized(
            c0 in prop::array::uniform3(-1.0f64..1.0),
            c1 in prop::array::uniform3(-1.0f64..1.0),
            sigma in 0.05f64..0.5,
            phase in -3.0f64..3.0,
            p in prop::array::uniform3(-1.0f64..1.0),
            q in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let (p, q) = (ThreeMomentum(p), ThreeMomentum(q));
            let g = SingleParticleState::gaussian(m1(), ThreeMomentum(c0), sigma).unwrap();
            let t = SingleParticleState::two_packet(m1(), [ThreeMomentum(c0), ThreeMomentum(c1)], sigma, phase);
            let mut states = vec![g];
            if let Ok(t) = t { states.push(t); }
            for s in &states {
                let a = s.amplitude(&p, &q);
                let b = s.amplitude(&q, &p).conj();
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
                let tr = s.trace_numeric(&cfg()).value;
                prop_assert!((tr - 1.0).abs() < 1e-8, "trace {}", tr);
            }
        }

        #[test]
        fn random_lattice_fill_normalizes(seed in 0u64..1000, n in 2usize..12) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let lat = MomentumLattice::new(n, 0.07).unwrap();
            let mut m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            m = &m * m.adjoint();
            let k = LatticeKernel::normalized(lat, m).unwrap();
            prop_assert!((k.trace() - 1.0).abs() < 1e-12);
            let s = SingleParticleState::lattice(m1(), k.clone());
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let (p, q) = (ThreeMomentum::along_x(lat.momentum(i)), ThreeMomentum::along_x(lat.momentum(j)));
            prop_assert_eq!(s.amplitude(&p, &q), s.amplitude(&q, &p).conj());
        }

        #[test]
        fn nr_predicate_monotone_in_kappa(
            c in 0.0f64..0.5, sigma in 0.005f64..0.1, k1 in 0.01f64..1.0, dk in 0.0f64..1.0,
        ) {
            let s = SingleParticleState::gaussian(m1(), ThreeMomentum::along_x(c), sigma).unwrap();
            let t = SingleParticleState::two_packet(
                m1(), [ThreeMomentum::along_x(c), ThreeMomentum::along_x(-c)], sigma, 0.5).unwrap();
            for st in [s, t] {
                let a = st.is_nonrelativistic(NrThreshold::new(k1).unwrap());
                let b = st.is_nonrelativistic(NrThreshold::new(k1 + dk).unwrap());
                prop_assert!(b.max_violation <= a.max_violation);
                if a.nonrelativistic { prop_assert!(b.nonrelativistic); }
            }
        }
    }
}
