//! Double-time reduction.
//!
//! Every diagnostic carries a nested time integral ∫₀ᵗds∫₀ˢdτ over a
//! stationary kernel h(s−τ). Substituting u = s − τ collapses it to one
//! dimension:
//!
//! ∫₀ᵗds∫₀ˢdτ h(s−τ) e^{i(a s − b τ)} = ∫₀ᵗdu h(u) e^{iau} Φ(a−b, t−u),
//! Φ(δ, w) = ∫₀^w e^{iδτ}dτ,
//!
//! which for a = b = ΔE reduces further to ∫₀ᵗ (t−u) h(u) e^{iΔE u} du.
//! A Dirac kernel sits on the boundary u = 0 of the domain and receives
//! weight ½ (the limit of symmetric kernels narrowing onto the diagonal).

use num_complex::Complex64;

use super::{integrate_adaptive, IntegralResult, QuadratureConfig};

/// Temporal kernel as seen by the reduction.
#[derive(Clone, Copy)]
pub enum TimeKernel<'a> {
    /// weight·δ(u)
    Dirac { weight: f64 },
    /// Pointwise-evaluable h(u), u ≥ 0.
    Smooth(&'a (dyn Fn(f64) -> f64 + Sync)),
}

/// ∫₀ᵗ (t−u) h(u) cos(ΔE·u) du.
pub fn reduce_double_time(
    kernel: TimeKernel<'_>,
    delta_e: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> IntegralResult<f64> {
    assert!(t >= 0.0, "horizon must be non-negative");
    match kernel {
        TimeKernel::Dirac { weight } => IntegralResult::exact(0.5 * weight * t),
        TimeKernel::Smooth(h) => {
            let f = |u: f64| (t - u) * h(u) * (delta_e * u).cos();
            let bps = oscillation_breakpoints(delta_e.abs(), t);
            integrate_adaptive(&f, 0.0, t, &bps, cfg)
        }
    }
}

/// ∫₀ᵗds∫₀ˢdτ h(s−τ) e^{i(a s − b τ)}.
pub fn reduce_double_time_phase(
    kernel: TimeKernel<'_>,
    a: f64,
    b: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> IntegralResult<Complex64> {
    assert!(t >= 0.0, "horizon must be non-negative");
    let delta = a - b;
    match kernel {
        TimeKernel::Dirac { weight } => {
            IntegralResult::exact(phase_window(delta, t) * (0.5 * weight))
        }
        TimeKernel::Smooth(h) => {
            let f = |u: f64| Complex64::from_polar(h(u), a * u) * phase_window(delta, t - u);
            let bps = oscillation_breakpoints(a.abs().max(delta.abs()), t);
            integrate_adaptive(&f, 0.0, t, &bps, cfg)
        }
    }
}

/// Φ(δ, w) = ∫₀^w e^{iδτ} dτ = w·e^{iδw/2}·sinc(δw/2).
fn phase_window(delta: f64, w: f64) -> Complex64 {
    let x = 0.5 * delta * w;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    Complex64::from_polar(w * sinc, x)
}

fn oscillation_breakpoints(rate: f64, t: f64) -> Vec<f64> {
    if rate * t <= std::f64::consts::PI {
        return Vec::new();
    }
    let n = ((rate * t / std::f64::consts::PI).ceil() as usize).min(2000);
    (1..n).map(|i| t * i as f64 / n as f64).collect()
}
