//! First-order averaged collapse map on a 1D momentum lattice.
//!
//! The mass-density Fourier component in the interaction picture is
//! K(q,t) = Σ_i κ_i e^{i a_i t} |p_i⟩⟨p_i − q|, κ_i = m/(2√(E_i E_{i−q})),
//! a_i = E_i − E_{i−q}. With C(a,b) = ∫₀ᵗds∫₀ˢdτ D̃(q,s−τ) e^{i(as − bτ)},
//! the generator
//!
//!   𝓛_t[ρ] = Σ_q (Δp/2π) ∫∫ D̃ { K_s ρ K_τ† + K_τ ρ K_s† − K_s K_τ† ρ − ρ K_τ K_s† }
//!
//! becomes, entry by entry,
//!
//!   𝓛[ρ]_ij = Σ_q w_q κ_iκ_j (C(a_i,a_j) + conj C(a_j,a_i)) ρ_{i−q, j−q} − (ℓ_i + conj ℓ_j) ρ_ij,
//!   ℓ_i = Σ_q w_q κ_i² C(a_i, a_i).
//!
//! Transitions leaving the lattice are dropped. Both ±q are summed, which is
//! what makes the map trace preserving.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Mass;
use crate::noise::{NoiseCorrelator, NoiseError};
use crate::quadrature::{reduce_double_time_phase, QuadratureConfig, QuadratureError};
use crate::states::{LatticeKernel, MomentumLattice, StateError};

pub type LatticeDensityMatrix = LatticeKernel;

/// γ‖𝓛ρ‖/‖ρ‖ above which a first-order step is flagged.
pub const PERTURBATIVITY_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid evolution request: {0}")]
    Invalid(String),
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// ⟨p_i| K(q,t) |p_j⟩ for q = `shift`·Δp: nonzero only on the band j = i − shift.
pub fn build_k_matrix(
    lat: &MomentumLattice,
    mass: Mass,
    shift: isize,
    t: f64,
) -> DMatrix<Complex64> {
    let e = lat.energies(mass);
    let m = mass.value();
    let n = lat.n as isize;
    DMatrix::from_fn(lat.n, lat.n, |i, j| {
        if j as isize == i as isize - shift && (0..n).contains(&(i as isize - shift)) {
            Complex64::from_polar(m / (2.0 * (e[i] * e[j]).sqrt()), (e[i] - e[j]) * t)
        } else {
            ZERO
        }
    })
}

struct Band {
    shift: isize,
    /// w_q κ_iκ_j (C(a_i,a_j) + conj C(a_j,a_i)) for rows/cols with i−q, j−q on the lattice
    transfer: DMatrix<Complex64>,
}

/// 𝓛_t precomputed for one lattice, mass, noise and horizon.
pub struct Generator {
    lattice: MomentumLattice,
    bands: Vec<Band>,
    loss: DVector<Complex64>,
    /// Summed error estimate of the time reductions, weighted like the map.
    pub error_estimate: f64,
}

impl Generator {
    pub fn new(
        lattice: MomentumLattice,
        mass: Mass,
        noise: &NoiseCorrelator,
        t: f64,
        cfg: &QuadratureConfig,
    ) -> Result<Self, EvolveError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(EvolveError::Invalid(format!(
                "horizon must be ≥ 0, got {t}"
            )));
        }
        noise.validate()?;
        cfg.validate()?;
        let n = lattice.n;
        let e = lattice.energies(mass);
        let m = mass.value();
        let w = lattice.spacing / (2.0 * std::f64::consts::PI);
        let shifts: Vec<isize> = (-(n as isize - 1)..n as isize).collect();
        let cfg_t = cfg.inner();

        let bands: Vec<Result<(Band, DVector<Complex64>, f64), EvolveError>> = shifts
            .par_iter()
            .map(|&k| {
                let q = (k as f64 * lattice.spacing).abs();
                let rows: Vec<usize> = (0..n)
                    .filter(|&i| (0..n as isize).contains(&(i as isize - k)))
                    .collect();
                let kappa = |i: usize| m / (2.0 * (e[i] * e[(i as isize - k) as usize]).sqrt());
                let a = |i: usize| e[i] - e[(i as isize - k) as usize];
                let mut c = DMatrix::from_element(n, n, ZERO);
                let mut err = 0.0;
                let mut failure = None;
                noise.with_time_kernel(q, |tk| {
                    for &i in &rows {
                        for &j in &rows {
                            let r = reduce_double_time_phase(tk, a(i), a(j), t, &cfg_t);
                            if !r.converged && failure.is_none() {
                                failure = Some(r.require().unwrap_err());
                            }
                            err += r.error_estimate * kappa(i) * kappa(j);
                            c[(i, j)] = r.value;
                        }
                    }
                })?;
                if let Some(f) = failure {
                    return Err(f.into());
                }
                let mut transfer = DMatrix::from_element(n, n, ZERO);
                let mut loss = DVector::from_element(n, ZERO);
                for &i in &rows {
                    for &j in &rows {
                        transfer[(i, j)] =
                            (c[(i, j)] + c[(j, i)].conj()) * (w * kappa(i) * kappa(j));
                    }
                    loss[i] = c[(i, i)] * (w * kappa(i) * kappa(i));
                }
                Ok((Band { shift: k, transfer }, loss, 2.0 * w * err))
            })
            .collect();

        let mut out = Vec::with_capacity(bands.len());
        let mut loss = DVector::from_element(n, ZERO);
        let mut error_estimate = 0.0;
        for b in bands {
            let (band, l, err) = b?;
            loss += l;
            error_estimate += err;
            out.push(band);
        }
        Ok(Generator {
            lattice,
            bands: out,
            loss,
            error_estimate,
        })
    }

    pub fn lattice(&self) -> &MomentumLattice {
        &self.lattice
    }

    /// 𝓛_t[ρ] for an arbitrary N×N matrix.
    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.lattice.n;
        assert_eq!(rho.shape(), (n, n), "matrix does not match the lattice");
        let mut out = DMatrix::from_fn(n, n, |i, j| {
            -(self.loss[i] + self.loss[j].conj()) * rho[(i, j)]
        });
        for b in &self.bands {
            let k = b.shift;
            for i in 0..n {
                let si = i as isize - k;
                if !(0..n as isize).contains(&si) {
                    continue;
                }
                for j in 0..n {
                    let sj = j as isize - k;
                    if (0..n as isize).contains(&sj) {
                        out[(i, j)] += b.transfer[(i, j)] * rho[(si as usize, sj as usize)];
                    }
                }
            }
        }
        out
    }

    /// Heisenberg-picture adjoint: Tr(X 𝓛[ρ]) = Tr(𝓛*[X] ρ).
    pub fn apply_adjoint(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.lattice.n;
        assert_eq!(x.shape(), (n, n), "matrix does not match the lattice");
        let mut out = DMatrix::from_fn(n, n, |a, b| {
            -(self.loss[b] + self.loss[a].conj()) * x[(a, b)]
        });
        for band in &self.bands {
            let k = band.shift;
            for a in 0..n {
                let ia = a as isize + k;
                if !(0..n as isize).contains(&ia) {
                    continue;
                }
                for b in 0..n {
                    let ib = b as isize + k;
                    if (0..n as isize).contains(&ib) {
                        let (ia, ib) = (ia as usize, ib as usize);
                        out[(a, b)] += band.transfer[(ib, ia)] * x[(ia, ib)];
                    }
                }
            }
        }
        out
    }
}

/// 𝓛_t[ρ] without keeping the precomputed plan.
pub fn apply_generator(
    rho: &LatticeDensityMatrix,
    mass: Mass,
    noise: &NoiseCorrelator,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<DMatrix<Complex64>, EvolveError> {
    Ok(Generator::new(rho.lattice, mass, noise, t, cfg)?.apply(&rho.matrix))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rho: LatticeDensityMatrix,
    /// γ‖𝓛ρ‖_F / ‖ρ‖_F
    pub perturbativity: f64,
    pub warning: bool,
}

/// ρ + γ𝓛_t[ρ].
pub fn step_first_order(
    gen: &Generator,
    rho: &LatticeDensityMatrix,
    gamma: f64,
) -> Result<StepOutcome, EvolveError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(EvolveError::Invalid(format!(
            "coupling must be ≥ 0, got {gamma}"
        )));
    }
    if rho.lattice != gen.lattice {
        return Err(EvolveError::Invalid(
            "state and generator live on different lattices".into(),
        ));
    }
    let delta = gen.apply(&rho.matrix);
    let perturbativity = gamma * delta.norm() / rho.matrix.norm();
    let warning = perturbativity > PERTURBATIVITY_LIMIT;
    if warning {
        log::warn!("first-order step outside its regime: γ‖𝓛ρ‖/‖ρ‖ = {perturbativity:.3}");
    }
    let next = &rho.matrix + delta * Complex64::new(gamma, 0.0);
    let herm = (&next + next.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(StepOutcome {
        rho: LatticeKernel::new(rho.lattice, herm)?,
        perturbativity,
        warning,
    })
}

/// Smallest eigenvalue of the unit-trace operator A·Δp.
pub fn min_eigenvalue(rho: &LatticeDensityMatrix) -> f64 {
    let op = rho.matrix.map(|z| z * rho.lattice.spacing);
    let op = (&op + op.adjoint()) * Complex64::new(0.5, 0.0);
    op.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v))
}

/// Frobenius norm of ρ minus its block-diagonal part; `labels[i]` names the block of site i.
pub fn decoherence_observable(rho: &DMatrix<Complex64>, labels: &[usize]) -> f64 {
    assert_eq!(labels.len(), rho.nrows(), "one block label per site");
    let mut acc = 0.0;
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            if labels[i] != labels[j] {
                acc += rho[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Two blocks: p < 0 and p ≥ 0.
pub fn sign_blocks(lat: &MomentumLattice) -> Vec<usize> {
    (0..lat.n)
        .map(|i| usize::from(lat.momentum(i) >= 0.0))
        .collect()
}

/// Operator norm of 𝓛*[AB] − 𝓛*[A]B − A𝓛*[B].
pub fn nonfactorization_witness(
    gen: &Generator,
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> f64 {
    let ab = a * b;
    let w = gen.apply_adjoint(&ab) - gen.apply_adjoint(a) * b - a * gen.apply_adjoint(b);
    if w.iter().all(|z| *z == ZERO) {
        return 0.0;
    }
    w.singular_values().iter().fold(0.0f64, |m, v| m.max(*v))
}

/// |p_i⟩⟨p_i| as a lattice observable.
pub fn site_projector(lat: &MomentumLattice, i: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(lat.n, lat.n, |a, b| {
        if a == i && b == i {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub trace: f64,
    pub off_diagonal_norm: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub history: Vec<HistoryRow>,
    pub final_state: LatticeDensityMatrix,
    pub max_perturbativity: f64,
    pub warnings: usize,
}

fn row(step: usize, rho: &LatticeDensityMatrix, labels: &[usize]) -> HistoryRow {
    HistoryRow {
        step,
        trace: rho.trace(),
        off_diagonal_norm: decoherence_observable(&rho.matrix, labels),
        min_eigenvalue: min_eigenvalue(rho),
    }
}

/// `steps` repeated first-order steps with a fixed horizon, recording the history.
pub fn run(
    rho0: &LatticeDensityMatrix,
    gen: &Generator,
    gamma: f64,
    steps: usize,
    labels: &[usize],
) -> Result<EvolutionRun, EvolveError> {
    let mut rho = rho0.clone();
    let mut history = vec![row(0, &rho, labels)];
    let mut max_perturbativity: f64 = 0.0;
    let mut warnings = 0;
    for s in 1..=steps {
        let out = step_first_order(gen, &rho, gamma)?;
        max_perturbativity = max_perturbativity.max(out.perturbativity);
        warnings += usize::from(out.warning);
        rho = out.rho;
        history.push(row(s, &rho, labels));
    }
    Ok(EvolutionRun {
        history,
        final_state: rho,
        max_perturbativity,
        warnings,
    })
}
