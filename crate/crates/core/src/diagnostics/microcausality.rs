//! First-order collapse correction to [φ(z₁,t), φ(z₂,0)].
//!
//! The correction is γm² ∫₀ᵗdτ ∫d³x D(x,τ) (F − F̄) = 2iγm² Im ∫₀ᵗdτ X(τ),
//! X(τ) = ∫d³x D(x,τ) F(Δz,x,t,τ). Carrying the x integral into momentum
//! space (q = k − k′) leaves
//!
//!   ∫₀ᵗX = (1/2π²) ∫k²dk reg(k)/(2E_k) sinc(k|Δz|) e^{−iE_k t} W(k),
//!   W(k) = ∫d³q/(2π)³ reg(|k−q|)/(4E²_{k−q}) ∫₀ᵗ D̃(q,τ) e^{i(E_k − E_{k−q})τ} dτ.
//!
//! For white noise W is k-independent (shift q → k − q) and the residual
//! collapses to a multiple of Im g₁(|Δz|, t), the free commutator.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::wightman::{free_commutator, g2, regulator, REGULATOR_REACH};
use super::{ConvergenceFlag, DiagnosticsError, MicrocausalityRequest};
use crate::kinematics::energy_from_norm_sqr;
use crate::noise::{NoiseCorrelator, NoiseError, TemporalKernel};
use crate::quadrature::{
    integrate_adaptive, integrate_oscillatory, Est, IntegralResult, QuadratureConfig, TimeKernel,
};

const SUPPORT_EPS: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrocausalityOutcome {
    /// Collapse contribution to the commutator.
    pub residual: IntegralResult<Complex64>,
    /// Free Pauli–Jordan term, for reference.
    pub free_commutator: IntegralResult<Complex64>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn scale_est(e: Est<Complex64>, c: Complex64) -> Est<Complex64> {
    Est::new(e.value * c, e.inner_error * c.norm())
}

struct Kernel<'a> {
    noise: &'a NoiseCorrelator,
    t: f64,
    m: f64,
    cutoff: f64,
    cfg: QuadratureConfig,
    flag: &'a ConvergenceFlag,
    err: std::cell::RefCell<Option<NoiseError>>,
}

impl Kernel<'_> {
    /// ∫₀ᵗ D̃(q,τ) e^{iωτ} dτ
    fn time_transform(&self, q: f64, omega: f64) -> Est<Complex64> {
        let t = self.t;
        if let (Some(TemporalKernel::Exponential { omega_c }), Some(g)) =
            (self.noise.temporal(), self.noise.spatial_spectrum(q))
        {
            return match g {
                Ok(g) => {
                    let z = Complex64::new(*omega_c, -omega);
                    let v = (Complex64::new(1.0, 0.0) - (-z * t).exp()) / z * (0.5 * omega_c * g);
                    Est::new(v, 0.0)
                }
                Err(e) => self.fail(e),
            };
        }
        let r = self.noise.with_time_kernel(q, |tk| match tk {
            TimeKernel::Dirac { weight } => Est::new(Complex64::new(0.5 * weight, 0.0), 0.0),
            TimeKernel::Smooth(h) => {
                let f = |tau: f64| Complex64::from_polar(h(tau), omega * tau);
                let r = integrate_oscillatory(&f, 0.0, t, omega.abs(), &self.cfg.inner());
                self.flag.note(&r);
                Est::from_result(r)
            }
        });
        match r {
            Ok(v) => v,
            Err(e) => self.fail(e),
        }
    }

    fn fail(&self, e: NoiseError) -> Est<Complex64> {
        self.flag.fail();
        self.err.borrow_mut().get_or_insert(e);
        Est::new(Complex64::new(0.0, 0.0), 0.0)
    }

    /// W(k), integrating q over [0, q_max] and the relative angle μ.
    fn w(&self, k: f64, q_max: f64) -> Est<Complex64> {
        let m = self.m;
        let ek = energy_from_norm_sqr(k * k, m);
        let cfg_q = self.cfg.inner();
        let cfg_mu = cfg_q.inner();
        let shell = |q: f64| -> Est<Complex64> {
            let f = |mu: f64| {
                let kq2 = (k * k + q * q - 2.0 * k * q * mu).max(0.0);
                let ekq = energy_from_norm_sqr(kq2, m);
                let tt = self.time_transform(q, ek - ekq);
                let w = regulator(kq2.sqrt(), self.cutoff) / (4.0 * ekq * ekq);
                tt * w
            };
            let r = integrate_adaptive(&f, -1.0, 1.0, &[], &cfg_mu);
            self.flag.note(&r);
            Est::new(r.value.value, r.value.inner_error + r.error_estimate) * (q * q)
        };
        let r = integrate_adaptive(&shell, 0.0, q_max, &[], &cfg_q);
        self.flag.note(&r);
        Est::new(r.value.value, r.value.inner_error + r.error_estimate)
            * (2.0 * PI / (2.0 * PI).powi(3))
    }
}

/// Collapse-induced commutator at (z₁, t), (z₂, 0), with the free term alongside.
pub fn microcausality_residual(
    req: &MicrocausalityRequest,
) -> Result<MicrocausalityOutcome, DiagnosticsError> {
    req.validate()?;
    let dz = req.separation();
    let d = (dz[0] * dz[0] + dz[1] * dz[1] + dz[2] * dz[2]).sqrt();
    let m = req.mass.value();
    let t = req.t;
    let cutoff = req.cfg.momentum_cutoff;
    let free = free_commutator(dz, t, req.mass, &req.cfg).require()?;
    let pref = 2.0 * req.coupling * m * m;

    let residual = match &req.noise {
        NoiseCorrelator::Zero => IntegralResult::zero(),
        _ if req.coupling == 0.0 || t == 0.0 => IntegralResult::zero(),
        NoiseCorrelator::WhiteNoise { .. } => {
            let weight = match req.noise.with_time_kernel(0.0, |tk| match tk {
                TimeKernel::Dirac { weight } => weight,
                TimeKernel::Smooth(_) => unreachable!("white noise is a delta in time"),
            }) {
                Ok(w) => w,
                Err(e) => return Err(e.into()),
            };
            let c = g2(0.0, 0.0, req.mass, &req.cfg).require()?;
            // free.value = 2i Im g₁
            let a = pref * 0.5 * weight * c.value.re;
            IntegralResult {
                value: Complex64::new(0.0, a * 0.5 * free.value.im),
                error_estimate: (a * 0.5).abs() * free.error_estimate
                    + (pref * 0.5 * weight * 0.5 * free.value.im).abs() * c.error_estimate,
                converged: true,
                evaluations: free.evaluations + c.evaluations,
            }
        }
        noise => {
            // the regulators sit on k and k − q, so q runs over the whole
            // support of D̃ (or far enough for reg(|k − q|) to die)
            let support = noise.momentum_support_bound(SUPPORT_EPS)?.finite();
            let flag = ConvergenceFlag::new();
            let kern = Kernel {
                noise,
                t,
                m,
                cutoff,
                cfg: req.cfg.clone(),
                flag: &flag,
                err: std::cell::RefCell::new(None),
            };
            let k_max = REGULATOR_REACH * cutoff;
            let f = |k: f64| {
                let ek = energy_from_norm_sqr(k * k, m);
                let c = Complex64::from_polar(
                    k * k * regulator(k, cutoff) / (2.0 * ek) * sinc(k * d),
                    -ek * t,
                );
                scale_est(
                    kern.w(k, support.unwrap_or(k + REGULATOR_REACH * cutoff)),
                    c,
                )
            };
            let r = integrate_oscillatory(&f, 0.0, k_max, d + t, &req.cfg);
            if let Some(e) = kern.err.into_inner() {
                return Err(e.into());
            }
            let s = 1.0 / (2.0 * PI * PI);
            let im = r.value.value.im * s;
            IntegralResult {
                value: Complex64::new(0.0, pref * im),
                error_estimate: pref * s * (r.error_estimate + r.value.inner_error),
                converged: r.converged && flag.ok(),
                evaluations: r.evaluations,
            }
            .require()?
        }
    };
    Ok(MicrocausalityOutcome {
        residual,
        free_commutator: free,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::testutil::gauss_legendre;
    use crate::diagnostics::wightman::wightman_g1;
    use crate::kinematics::{Mass, SpacetimePoint};

    fn req(noise: NoiseCorrelator, dz: [f64; 3], t: f64, cutoff: f64) -> MicrocausalityRequest {
        MicrocausalityRequest {
            z1: SpacetimePoint::new(t, dz),
            z2: SpacetimePoint::new(0.0, [0.0; 3]),
            t,
            noise,
            coupling: 1e-2,
            mass: Mass::new(1.0).unwrap(),
            cfg: QuadratureConfig::default().with_cutoff(cutoff),
        }
    }

    fn csl(r_c: f64) -> NoiseCorrelator {
        NoiseCorrelator::csl(r_c, 1.0, TemporalKernel::Exponential { omega_c: 0.1 }).unwrap()
    }

    #[test]
    fn zero_noise_is_exactly_zero() {
        let out = microcausality_residual(&req(NoiseCorrelator::Zero, [3.0, 0.0, 0.0], 1.0, 10.0))
            .unwrap();
        assert_eq!(out.residual.value, Complex64::new(0.0, 0.0));
        assert_eq!(out.residual.error_estimate, 0.0);
    }

    #[test]
    fn white_noise_residual_vanishes_space_like() {
        let out = microcausality_residual(&req(
            NoiseCorrelator::white(1.0).unwrap(),
            [3.0, 0.0, 0.0],
            1.0,
            20.0,
        ))
        .unwrap();
        assert!(out.residual.value.norm() <= 3.0 * out.residual.error_estimate + 1e-300);
    }

    #[test]
    fn white_noise_shift_matches_direct_w() {
        // W(k) for white noise with q integrated far enough to cover reg(|k−q|)
        let cutoff = 2.0;
        let noise = NoiseCorrelator::white(1.0).unwrap();
        let flag = ConvergenceFlag::new();
        let cfg = QuadratureConfig::default().with_cutoff(cutoff);
        let kern = Kernel {
            noise: &noise,
            t: 1.0,
            m: 1.0,
            cutoff,
            cfg: cfg.clone(),
            flag: &flag,
            err: Default::default(),
        };
        let weight = (2.0 * PI).powi(3);
        let expect = 0.5 * weight * g2(0.0, 0.0, Mass::new(1.0).unwrap(), &cfg).value.re;
        for k in [0.0, 0.7, 3.0] {
            let w = kern.w(k, k + REGULATOR_REACH * cutoff);
            assert!(
                (w.value - Complex64::new(expect, 0.0)).norm() < 1e-8 * expect,
                "k={k}: {} vs {expect}",
                w.value
            );
        }
    }

    #[test]
    fn exchange_of_points_leaves_residual_unchanged() {
        let a = microcausality_residual(&req(csl(1.0), [2.5, 0.0, 0.0], 1.0, 6.0))
            .unwrap()
            .residual;
        let b = microcausality_residual(&req(csl(1.0), [-2.5, 0.0, 0.0], 1.0, 6.0))
            .unwrap()
            .residual;
        assert!((a.value - b.value).norm() <= 1e-12 * a.value.norm());
    }

    #[test]
    fn coloured_noise_matches_position_space_oracle() {
        // ∫₀ᵗdτ ∫d³x D(x,τ) F(Δz,x,t,τ) on a Gauss–Legendre product grid
        let (r_c, omega_c, t, d, cutoff) = (1.0, 0.1, 1.0, 2.0, 3.0);
        let noise = csl(r_c);
        let m = Mass::new(1.0).unwrap();
        let cfg = QuadratureConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            ..Default::default()
        }
        .with_cutoff(cutoff);
        let gl = |n: usize, a: f64, b: f64| {
            let (x, w) = gauss_legendre(n);
            x.iter()
                .zip(&w)
                .map(|(x, w)| (0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w))
                .collect::<Vec<_>>()
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for &(tau, wt) in &gl(20, 0.0, t) {
            let h = 0.5 * omega_c * (-omega_c * tau).exp();
            for &(r, wr) in &gl(64, 0.0, 9.0) {
                let g = noise.correlator_value([r, 0.0, 0.0], 0.0).unwrap()
                    / noise.temporal().unwrap().value(0.0).unwrap();
                let g2v = g2(r, tau, m, &cfg).value;
                let mut ang = Complex64::new(0.0, 0.0);
                for &(mu, wm) in &gl(64, -1.0, 1.0) {
                    let dist = (d * d + r * r - 2.0 * d * r * mu).max(0.0).sqrt();
                    ang += wightman_g1(dist, t - tau, m, &cfg).value * wm;
                }
                acc += ang * g2v * (2.0 * PI * r * r * g * h * wr * wt);
            }
        }
        let expect = 2.0 * 1e-2 * acc.im;
        let got = microcausality_residual(&req(noise, [d, 0.0, 0.0], t, cutoff))
            .unwrap()
            .residual;
        assert!(got.value.re == 0.0);
        assert!(
            (got.value.im - expect).abs() < 1e-4 * expect.abs(),
            "{} vs {expect}",
            got.value.im
        );
    }
}
