//! Generator matrix elements ⟨p_L| 𝓛_t[ρ] |p_R⟩ and the NR-sector check.
//!
//! With ΔE_X = E_{X−q} − E_X and u = s − τ,
//!
//!   ⟨p_L|𝓛_t[ρ]|p_R⟩ = ∫d³q/(2π)³ ∫₀ᵗds∫₀ˢdτ D̃(q,u) {
//!       m²/(4√(E_L E_{L−q} E_{R−q} E_R)) A(p_L−q, p_R−q)
//!           [e^{i(ΔE_R s − ΔE_L τ)} + e^{−i(ΔE_L s − ΔE_R τ)}]
//!     − (m²/4) A(p_L, p_R) [e^{−iΔE_L u}/(E_L E_{L−q}) + e^{iΔE_R u}/(E_R E_{R−q})] }.
//!
//! The first ("transfer") term moves weight from p − q to p; the second
//! ("loss") term removes it from p itself.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ConvergenceFlag, DiagnosticsError};
use crate::kinematics::{energy_from_norm_sqr, Mass, ThreeMomentum};
use crate::noise::{NoiseCorrelator, NoiseError};
use crate::quadrature::{
    integrate_adaptive, reduce_double_time_phase, Est, IntegralResult, QuadratureConfig, TimeKernel,
};
use crate::states::{Amplitude, NrThreshold, SingleParticleState};

/// Leakage / diagonal ratio below which the NR sector counts as closed.
pub const NR_LEAKAGE_RATIO: f64 = 1e-3;

const SUPPORT_EPS: f64 = 1e-16;
/// Half-width of the transfer q-ball beyond the packet spread, in units of σ.
const BALL_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NrVerdictKind {
    WellBehaved,
    Leaking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrVerdict {
    pub verdict: NrVerdictKind,
    pub ratio: f64,
    pub max_leakage: f64,
    pub leakage_error: f64,
    pub diagonal_scale: f64,
    /// (p_L, p_R) of the largest leakage, if any probe was evaluated.
    pub worst_probe: Option<(ThreeMomentum, ThreeMomentum)>,
}

/// `n`=12 momenta log-spaced in [κm, 10κm] along x.
pub fn default_probe_grid(kappa: NrThreshold, mass: Mass) -> Vec<ThreeMomentum> {
    let lo = kappa.value() * mass.value();
    let n = 12;
    (0..n)
        .map(|i| ThreeMomentum::along_x(lo * 10f64.powf(i as f64 / (n - 1) as f64)))
        .collect()
}

/// Two-particle matrix element of the first-order generator acting on a
/// single-particle state: identically zero, because every term of the
/// generator carries an even number of field operators and the element
/// would need an odd number of creation/annihilation operators.
pub fn particle_creation_element(
    _state: &SingleParticleState,
    _noise: &NoiseCorrelator,
    _probes: [ThreeMomentum; 2],
    _t: f64,
) -> Complex64 {
    Complex64::new(0.0, 0.0)
}

struct Ctx<'a> {
    state: &'a SingleParticleState,
    noise: &'a NoiseCorrelator,
    m: f64,
    t: f64,
    cfg_time: QuadratureConfig,
    flag: ConvergenceFlag,
    err: std::cell::RefCell<Option<NoiseError>>,
}

impl Ctx<'_> {
    fn with_kernel(
        &self,
        q: f64,
        f: impl FnOnce(TimeKernel<'_>) -> Est<Complex64>,
    ) -> Est<Complex64> {
        match self.noise.with_time_kernel(q, f) {
            Ok(v) => v,
            Err(e) => {
                self.flag.fail();
                self.err.borrow_mut().get_or_insert(e);
                Est::new(Complex64::new(0.0, 0.0), 0.0)
            }
        }
    }

    fn phase(&self, tk: TimeKernel<'_>, a: f64, b: f64) -> Est<Complex64> {
        let r = reduce_double_time_phase(tk, a, b, self.t, &self.cfg_time);
        self.flag.note(&r);
        Est::from_result(r)
    }

    fn transfer_integrand(
        &self,
        pl: &ThreeMomentum,
        pr: &ThreeMomentum,
        q: &ThreeMomentum,
    ) -> Est<Complex64> {
        let a = self.state.amplitude(&(*pl - *q), &(*pr - *q));
        if a == Complex64::new(0.0, 0.0) {
            return Est::new(a, 0.0);
        }
        let m = self.m;
        let e = |p: ThreeMomentum| energy_from_norm_sqr(p.norm_sqr(), m);
        let (el, er) = (e(*pl), e(*pr));
        let (elq, erq) = (e(*pl - *q), e(*pr - *q));
        let (dl, dr) = (elq - el, erq - er);
        let pre = a * (m * m / (4.0 * (el * elq * erq * er).sqrt()));
        let c = self.with_kernel(q.norm(), |tk| {
            self.phase(tk, dr, dl) + self.phase(tk, -dl, -dr)
        });
        Est::new(c.value * pre, c.inner_error * pre.norm())
    }

    /// ∫d³q/(2π)³ ∫∫ D̃ e^{∓iΔE u}/(E E_{p−q}) for one side of the loss term.
    fn loss_side(&self, p: f64, q_max: f64, left: bool) -> Est<Complex64> {
        let m = self.m;
        let ep = energy_from_norm_sqr(p * p, m);
        let cfg_q = self.cfg_time;
        let shell = |q: f64| -> Est<Complex64> {
            let f = |mu: f64| {
                let epq = energy_from_norm_sqr((p * p + q * q - 2.0 * p * q * mu).max(0.0), m);
                let de = epq - ep;
                let c = self.with_kernel(q, |tk| {
                    if left {
                        self.phase(tk, -de, -de)
                    } else {
                        self.phase(tk, de, de)
                    }
                });
                c * (1.0 / (ep * epq))
            };
            let r = integrate_adaptive(&f, -1.0, 1.0, &[], &cfg_q.inner());
            self.flag.note(&r);
            Est::new(r.value.value, r.value.inner_error + r.error_estimate) * (q * q)
        };
        let r = integrate_adaptive(&shell, 0.0, q_max, &[], &cfg_q);
        self.flag.note(&r);
        Est::new(r.value.value, r.value.inner_error + r.error_estimate)
            * (2.0 * PI / (2.0 * PI).powi(3))
    }
}

fn orthonormal_frame(axis: [f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let e3 = if n > 0.0 {
        [axis[0] / n, axis[1] / n, axis[2] / n]
    } else {
        [1.0, 0.0, 0.0]
    };
    let helper = if e3[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let dot = helper[0] * e3[0] + helper[1] * e3[1] + helper[2] * e3[2];
    let e1 = [
        helper[0] - dot * e3[0],
        helper[1] - dot * e3[1],
        helper[2] - dot * e3[2],
    ];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = [
        e3[1] * e1[2] - e3[2] * e1[1],
        e3[2] * e1[0] - e3[0] * e1[2],
        e3[0] * e1[1] - e3[1] * e1[0],
    ];
    (e1, e2, e3)
}

fn collinear(vs: &[ThreeMomentum], axis: [f64; 3]) -> bool {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    vs.iter().all(|v| {
        let v = v.0;
        let c = [
            v[1] * axis[2] - v[2] * axis[1],
            v[2] * axis[0] - v[0] * axis[2],
            v[0] * axis[1] - v[1] * axis[0],
        ];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
            <= 1e-14 * n * v.iter().map(|x| x.abs()).fold(0.0, f64::max)
    })
}

struct Parts {
    transfer: IntegralResult<Complex64>,
    loss: IntegralResult<Complex64>,
}

fn element_parts(
    state: &SingleParticleState,
    noise: &NoiseCorrelator,
    pl: &ThreeMomentum,
    pr: &ThreeMomentum,
    t: f64,
    cfg: &QuadratureConfig,
    with_loss: bool,
) -> Result<Parts, DiagnosticsError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(DiagnosticsError::InvalidRequest(format!(
            "horizon must be positive, got {t}"
        )));
    }
    state.validate()?;
    noise.validate()?;
    cfg.validate()?;
    let Some((centers, sigma)) = state.packet_geometry() else {
        return Err(DiagnosticsError::Unsupported(
            "NR leakage needs a packet state, not a lattice kernel".into(),
        ));
    };
    if matches!(noise, NoiseCorrelator::Zero) {
        return Ok(Parts {
            transfer: IntegralResult::zero(),
            loss: IntegralResult::zero(),
        });
    }
    let ctx = Ctx {
        state,
        noise,
        m: state.mass.value(),
        t,
        cfg_time: cfg.inner(),
        flag: ConvergenceFlag::new(),
        err: std::cell::RefCell::new(None),
    };

    // transfer: ball around the peak of A(p_L − q, p_R − q)
    let mean_c = centers
        .iter()
        .fold(ThreeMomentum::ZERO, |a, c| a + *c)
        .scale(1.0 / centers.len() as f64);
    let center = (*pl + *pr).scale(0.5) - mean_c;
    let spread = centers
        .iter()
        .map(|c| (*c - mean_c).norm())
        .fold(0.0, f64::max);
    let radius = spread + BALL_SIGMAS * sigma;
    let mut axis = center.0;
    if center.norm() == 0.0 {
        axis = (*pl - *pr).0;
    }
    if axis.iter().all(|x| *x == 0.0) {
        axis = (centers[0] - mean_c).0;
    }
    let (e1, e2, e3) = orthonormal_frame(axis);
    let mut pts = vec![*pl, *pr, center];
    pts.extend(centers.iter().copied());
    let axial = collinear(&pts, e3);
    let c_ang = cfg.inner();
    let c_az = c_ang.inner();
    let point = |rho: f64, ct: f64, phi: f64| {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let (x, y, z) = (rho * st * phi.cos(), rho * st * phi.sin(), rho * ct);
        let c = center.0;
        ThreeMomentum([
            c[0] + x * e1[0] + y * e2[0] + z * e3[0],
            c[1] + x * e1[1] + y * e2[1] + z * e3[1],
            c[2] + x * e1[2] + y * e2[2] + z * e3[2],
        ])
    };
    let radial = |rho: f64| -> Est<Complex64> {
        let polar = |ct: f64| -> Est<Complex64> {
            if axial {
                ctx.transfer_integrand(pl, pr, &point(rho, ct, 0.0)) * (2.0 * PI)
            } else {
                let f = |phi: f64| ctx.transfer_integrand(pl, pr, &point(rho, ct, phi));
                let r = integrate_adaptive(&f, 0.0, 2.0 * PI, &[], &c_az);
                ctx.flag.note(&r);
                Est::new(r.value.value, r.value.inner_error + r.error_estimate)
            }
        };
        let r = integrate_adaptive(&polar, -1.0, 1.0, &[], &c_ang);
        ctx.flag.note(&r);
        Est::new(r.value.value, r.value.inner_error + r.error_estimate) * (rho * rho)
    };
    let tr = integrate_adaptive(&radial, 0.0, radius, &[], cfg);
    let norm = 1.0 / (2.0 * PI).powi(3);
    let transfer = IntegralResult {
        value: tr.value.value * norm,
        error_estimate: (tr.error_estimate + tr.value.inner_error) * norm,
        converged: tr.converged,
        evaluations: tr.evaluations,
    };

    // loss: isotropic in q about p_L and p_R separately
    let a = state.amplitude(pl, pr);
    let loss = if with_loss && a != Complex64::new(0.0, 0.0) {
        let q_max = match noise.momentum_support_bound(SUPPORT_EPS)?.finite() {
            Some(b) => b.min(cfg.momentum_cutoff),
            None => cfg.momentum_cutoff,
        };
        let l = ctx.loss_side(pl.norm(), q_max, true);
        let r = ctx.loss_side(pr.norm(), q_max, false);
        let s = a * (-ctx.m * ctx.m / 4.0);
        let sum = l + r;
        IntegralResult {
            value: sum.value * s,
            error_estimate: sum.inner_error * s.norm(),
            converged: true,
            evaluations: 0,
        }
    } else {
        IntegralResult::zero()
    };

    if let Some(e) = ctx.err.into_inner() {
        return Err(e.into());
    }
    let ok = ctx.flag.ok();
    Ok(Parts {
        transfer: IntegralResult {
            converged: transfer.converged && ok,
            ..transfer
        },
        loss: IntegralResult {
            converged: ok,
            ..loss
        },
    })
}

/// ⟨p_L| 𝓛_t[ρ] |p_R⟩ for a packet state, truncating white-noise q
/// integrals at `cfg.momentum_cutoff`.
pub fn nr_leakage(
    state: &SingleParticleState,
    noise: &NoiseCorrelator,
    pl: &ThreeMomentum,
    pr: &ThreeMomentum,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult<Complex64>, DiagnosticsError> {
    let p = element_parts(state, noise, pl, pr, t, cfg, true)?;
    Ok(p.transfer.combine(p.loss).require()?)
}

/// Largest generator element over relativistic probes (p, p) and (p, 0),
/// relative to the largest diagonal transfer element at the packet centres
/// and one σ either side.
pub fn nr_sector_verdict(
    state: &SingleParticleState,
    noise: &NoiseCorrelator,
    kappa: NrThreshold,
    t: f64,
    probes: &[ThreeMomentum],
    cfg: &QuadratureConfig,
) -> Result<NrVerdict, DiagnosticsError> {
    let check = state.is_nonrelativistic(kappa);
    if !check.nonrelativistic {
        return Err(DiagnosticsError::InvalidRequest(format!(
            "state is not non-relativistic at κ = {} (violation {:.3e})",
            kappa.value(),
            check.max_violation
        )));
    }
    if matches!(state.amplitude, Amplitude::Lattice(_)) {
        return Err(DiagnosticsError::Unsupported(
            "NR verdict needs a packet state".into(),
        ));
    }
    let (centers, sigma) = state.packet_geometry().expect("packet state");
    let threshold = kappa.value() * state.mass.value() * (1.0 - 1e-12);

    let mut scale = 0.0f64;
    for c in &centers {
        for off in [-sigma, 0.0, sigma] {
            let p = *c + ThreeMomentum::along_x(off);
            let parts = element_parts(state, noise, &p, &p, t, cfg, false)?;
            let tr = parts.transfer.require()?;
            scale = scale.max(tr.value.norm());
        }
    }

    let mut max_leak = 0.0f64;
    let mut err = 0.0;
    let mut worst = None;
    for p in probes.iter().filter(|p| p.norm() >= threshold) {
        for pr in [*p, ThreeMomentum::ZERO] {
            let v = nr_leakage(state, noise, p, &pr, t, cfg)?;
            if v.value.norm() > max_leak || worst.is_none() {
                max_leak = v.value.norm();
                err = v.error_estimate;
                worst = Some((*p, pr));
            }
        }
    }
    let ratio = if max_leak == 0.0 {
        0.0
    } else {
        max_leak / scale
    };
    Ok(NrVerdict {
        verdict: if ratio < NR_LEAKAGE_RATIO {
            NrVerdictKind::WellBehaved
        } else {
            NrVerdictKind::Leaking
        },
        ratio,
        max_leakage: max_leak,
        leakage_error: err,
        diagonal_scale: scale,
        worst_probe: worst,
    })
}
