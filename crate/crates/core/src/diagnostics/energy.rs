//! Energy rate γ·Tr(H 𝓛_t[ρ]).
//!
//! Tr(H 𝓛_t ρ) = −(m²/(2π)³) ∫d³q∫d³p ∫₀ᵗdu (t−u) D̃(q,u) cos(ΔE u) A(p,p)
//!               × (1/2E_{p−q} − 1/2E_p),   ΔE = E_{p−q} − E_p.
//!
//! D̃ depends on |q| only, so the p-integral needs just the angular average
//! of A(p,p) and the relative angle μ between p and q is integrated in
//! closed form: with k = |p−q| and δ = E_k − E_p, k dk = E_k dE_k turns
//! ∫dμ cos(δu)(1/2E_k − 1/2E_p) into −(1/(2pqE_p)) ∫_{δ₁}^{δ₂} δ cos(δu) dδ,
//! δ₁ at k = |p−q| and δ₂ at k = p+q.

use std::cell::RefCell;
use std::f64::consts::PI;

use super::{ConvergenceFlag, DiagnosticsError, EnergyRateRequest};
use crate::kinematics::energy_from_norm_sqr;
use crate::noise::{NoiseCorrelator, NoiseError};
use crate::quadrature::{
    cutoff_scan, integrate_adaptive, Est, IntegralResult, ScanRecord, ScanThresholds, ScanVerdict,
    TimeKernel,
};

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// ε used to cut the q range at the noise's support bound.
const SUPPORT_EPS: f64 = 1e-16;

/// (δu sin δu + cos δu − 1)/u², an antiderivative of δ cos(δu) in δ.
fn antiderivative(delta: f64, u: f64) -> f64 {
    let x = delta * u;
    if x.abs() < 0.1 {
        // δ² Σ_k (−1)^{k−1} (2k−1)/(2k)! x^{2k−2}
        let x2 = x * x;
        let mut term = 0.5;
        let mut sum = 0.0;
        let mut fact_ratio = 1.0;
        for k in 1..=8 {
            let kk = k as f64;
            if k > 1 {
                fact_ratio *= -x2 / ((2.0 * kk - 1.0) * (2.0 * kk));
                term = fact_ratio * (2.0 * kk - 1.0) / 2.0;
            }
            sum += term;
        }
        delta * delta * sum
    } else {
        (x * x.sin() + x.cos() - 1.0) / (u * u)
    }
}

/// ∫_{−1}^{1} dμ cos(δu) (1/2E_{p−q} − 1/2E_p) at |p|, |q|.
pub(crate) fn angular_kernel(p: f64, q: f64, u: f64, m: f64) -> f64 {
    let ep = energy_from_norm_sqr(p * p, m);
    let e_lo = energy_from_norm_sqr((p - q) * (p - q), m);
    let e_hi = energy_from_norm_sqr((p + q) * (p + q), m);
    let d1 = (q * q - 2.0 * p * q) / (e_lo + ep);
    let d2 = (q * q + 2.0 * p * q) / (e_hi + ep);
    // δ₂ − δ₁ without cancellation; equals 4pq/(E_{p+q} + E_{|p−q|})
    let span_over_pq = 4.0 / (e_hi + e_lo);
    let span = span_over_pq * p * q;
    let integral_over_pq = if span * u <= 1.0 {
        let (mid, half) = (0.5 * (d1 + d2), 0.5 * span_over_pq);
        let mut acc = 0.0;
        for i in 0..4 {
            for s in [-1.0, 1.0] {
                let d = mid + s * GL8_X[i] * 0.5 * span;
                acc += GL8_W[i] * d * (d * u).cos();
            }
        }
        acc * half
    } else {
        (antiderivative(d2, u) - antiderivative(d1, u)) / (p * q)
    };
    -integral_over_pq / (2.0 * ep)
}

struct ErrorSlot(RefCell<Option<NoiseError>>);

impl ErrorSlot {
    fn put(&self, e: NoiseError) {
        self.0.borrow_mut().get_or_insert(e);
    }
}

fn q_range(noise: &NoiseCorrelator, cutoff: f64) -> Result<f64, NoiseError> {
    Ok(match noise.momentum_support_bound(SUPPORT_EPS)?.finite() {
        Some(b) => b.min(cutoff),
        None => cutoff,
    })
}

/// γ · Tr(H 𝓛_t[ρ]), truncated at `cfg.momentum_cutoff`.
pub fn energy_rate(req: &EnergyRateRequest) -> Result<IntegralResult<f64>, DiagnosticsError> {
    req.validate()?;
    let m = req.state.mass.value();
    let t = req.horizon;
    let q_max = q_range(&req.noise, req.cfg.momentum_cutoff)?;
    if q_max <= 0.0 {
        return Ok(IntegralResult::zero());
    }
    let cfg_q = req.cfg.inner();
    let cfg_u = cfg_q.inner();
    let flag = ConvergenceFlag::new();
    let slot = ErrorSlot(RefCell::new(None));

    // time-reduced angular kernel at fixed (p, q)
    let time_part = |p: f64, q: f64| -> Est<f64> {
        let r = req.noise.with_time_kernel(q, |tk| match tk {
            TimeKernel::Dirac { weight } => {
                Est::new(0.5 * weight * t * angular_kernel(p, q, 0.0, m), 0.0)
            }
            TimeKernel::Smooth(h) => {
                let f = |u: f64| (t - u) * h(u) * angular_kernel(p, q, u, m);
                let rate =
                    energy_from_norm_sqr((p + q) * (p + q), m) - energy_from_norm_sqr(p * p, m);
                let n = ((rate * t / PI).ceil() as usize).clamp(1, 2000);
                let bps: Vec<f64> = (1..n).map(|i| t * i as f64 / n as f64).collect();
                let r = integrate_adaptive(&f, 0.0, t, &bps, &cfg_u);
                flag.note(&r);
                Est::from_result(r)
            }
        });
        match r {
            Ok(v) if v.value.is_finite() => v,
            Ok(_) => {
                flag.fail();
                Est::new(0.0, 0.0)
            }
            Err(e) => {
                slot.put(e);
                flag.fail();
                Est::new(0.0, 0.0)
            }
        }
    };

    let shell = |p: f64| -> Est<f64> {
        let f = |q: f64| time_part(p, q) * (q * q);
        let r = integrate_adaptive(&f, 0.0, q_max, &[], &cfg_q);
        flag.note(&r);
        Est::new(r.value.value, r.value.inner_error + r.error_estimate) * (2.0 * PI)
    };

    let outer = req.state.integrate_diagonal(shell, &req.cfg);
    if let Some(e) = slot.0.into_inner() {
        return Err(e.into());
    }
    let pref = -req.coupling * m * m / (2.0 * PI).powi(3);
    let result = IntegralResult {
        value: pref * outer.value.value,
        error_estimate: pref.abs() * (outer.error_estimate + outer.value.inner_error),
        converged: outer.converged && flag.ok(),
        evaluations: outer.evaluations,
    };
    Ok(result.require()?)
}

/// Energy rate at each cutoff, classified as plateau / diverging / inconclusive.
pub fn energy_rate_scan(
    req: &EnergyRateRequest,
    cutoffs: &[f64],
    thresholds: &ScanThresholds,
) -> Result<ScanRecord, DiagnosticsError> {
    cutoff_scan(
        |c| {
            let mut r = req.clone();
            r.cfg = r.cfg.with_cutoff(c);
            energy_rate(&r)
        },
        cutoffs,
        thresholds,
    )
}

/// Turns a diverging white-noise scan into [`DiagnosticsError::WhiteNoiseDivergent`].
pub fn require_finite(noise: &NoiseCorrelator, scan: &ScanRecord) -> Result<(), DiagnosticsError> {
    if noise.is_white() && scan.verdict == ScanVerdict::Diverging {
        let n = scan.values.len();
        return Err(DiagnosticsError::WhiteNoiseDivergent {
            last: scan.values[n - 1],
            cutoff: scan.cutoffs[n - 1],
        });
    }
    Ok(())
}
