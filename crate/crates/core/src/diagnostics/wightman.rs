//! Radial Wightman-type integrals.
//!
//! g₁(r, s) = ∫d³k/(2π)³ e^{i(k·r − E_k s)} / (2E_k)
//! g₂(r, s) = ∫d³k/(2π)³ e^{i(k·r − E_k s)} / (4E_k²)
//!
//! Both are distributions; they are evaluated with the smooth regulator
//! e^{−(k/Λ)²}, Λ = `cfg.momentum_cutoff`, which smears light-cone
//! singularities over a width ~1/Λ. Away from the cone it acts as a spatial
//! Gaussian smoothing of variance 2/Λ², shifting smooth values by O(1/Λ²). The k range stops at
//! [`REGULATOR_REACH`]·Λ where the regulator has fallen below 1e−16, and
//! that truncation is added to the error estimate.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::kinematics::Mass;
use crate::quadrature::{integrate_oscillatory, IntegralResult, QuadratureConfig};

/// k_max / Λ, chosen so that e^{−(k_max/Λ)²} = 1e−16.
pub const REGULATOR_REACH: f64 = 6.069_726_104_935_873;

/// e^{−(k/Λ)²}
pub fn regulator(k: f64, cutoff: f64) -> f64 {
    (-(k / cutoff).powi(2)).exp()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn radial(
    r: f64,
    s: f64,
    m: f64,
    cfg: &QuadratureConfig,
    measure: impl Fn(f64, f64) -> f64,
) -> IntegralResult<Complex64> {
    assert!(r >= 0.0, "radius must be non-negative");
    let cutoff = cfg.momentum_cutoff;
    let k_max = REGULATOR_REACH * cutoff;
    let f = |k: f64| {
        let e = (k * k + m * m).sqrt();
        Complex64::from_polar(
            k * k * measure(k, e) * sinc(k * r) * regulator(k, cutoff),
            -e * s,
        )
    };
    let mut res = integrate_oscillatory(&f, 0.0, k_max, r + s.abs(), cfg);
    // tail beyond k_max: the measure is at most k/(2m)·k², bounded via the Gaussian
    let tail = k_max * k_max * measure(k_max, (k_max * k_max + m * m).sqrt()) * cutoff * cutoff
        / (2.0 * k_max)
        * 1e-16;
    res.error_estimate += tail;
    res.scale(1.0 / (2.0 * PI * PI))
}

/// g₁(r, s): positive-frequency Wightman function of a free scalar of mass m.
pub fn wightman_g1(r: f64, s: f64, m: Mass, cfg: &QuadratureConfig) -> IntegralResult<Complex64> {
    radial(r, s, m.value(), cfg, |_, e| 0.5 / e)
}

/// g₂(r, s): the same integral with measure 1/(4E²).
pub fn g2(r: f64, s: f64, m: Mass, cfg: &QuadratureConfig) -> IntegralResult<Complex64> {
    radial(r, s, m.value(), cfg, |_, e| 0.25 / (e * e))
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// F(Δz, x, t, τ) = g₁(|Δz − x|, t − τ) · g₂(|x|, τ).
///
/// Regrouping the phase of the double k, k′ integral as
/// k·(Δz − x) − E_k(t − τ) plus k′·x − E_{k′}τ factorizes it exactly.
pub fn f_function(
    dz: [f64; 3],
    x: [f64; 3],
    t: f64,
    tau: f64,
    m: Mass,
    cfg: &QuadratureConfig,
) -> IntegralResult<Complex64> {
    let a = wightman_g1(
        norm3([dz[0] - x[0], dz[1] - x[1], dz[2] - x[2]]),
        t - tau,
        m,
        cfg,
    );
    let b = g2(norm3(x), tau, m, cfg);
    IntegralResult {
        value: a.value * b.value,
        error_estimate: a.error_estimate * b.value.norm() + b.error_estimate * a.value.norm(),
        converged: a.converged && b.converged,
        evaluations: a.evaluations + b.evaluations,
    }
}

/// [φ(z₁, t), φ(z₂, 0)] = g₁ − conj(g₁) = 2i Im g₁(|Δz|, t).
pub fn free_commutator(
    dz: [f64; 3],
    t: f64,
    m: Mass,
    cfg: &QuadratureConfig,
) -> IntegralResult<Complex64> {
    let g = wightman_g1(norm3(dz), t, m, cfg);
    IntegralResult {
        value: Complex64::new(0.0, 2.0 * g.value.im),
        error_estimate: 2.0 * g.error_estimate,
        ..g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::mc_integrate;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn m1() -> Mass {
        Mass::new(1.0).unwrap()
    }

    fn cfg(cutoff: f64) -> QuadratureConfig {
        QuadratureConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            ..Default::default()
        }
        .with_cutoff(cutoff)
    }

    /// J₁(x) = (1/π)∫₀^π cos(θ − x sin θ) dθ
    fn bessel_j1(x: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let th = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (th - x * th.sin()).cos();
        }
        acc * h / 3.0 / PI
    }

    /// ∫d³k/(2π)³ e^{−k²/Λ²} φ(k) as an expectation over k ~ N(0, Λ²/2)³,
    /// sampled through the inverse normal CDF on the unit cube.
    fn gaussian_mc(
        dim_blocks: usize,
        cutoff: f64,
        phi: impl Fn(&[[f64; 3]]) -> Complex64 + Sync,
        samples: usize,
    ) -> IntegralResult<Complex64> {
        let normal = Normal::new(0.0, cutoff / 2f64.sqrt()).unwrap();
        let norm = ((PI * cutoff * cutoff).powf(1.5) / (2.0 * PI).powi(3)).powi(dim_blocks as i32);
        let f = |u: &[f64]| {
            let mut ks = [[0.0; 3]; 2];
            for b in 0..dim_blocks {
                for d in 0..3 {
                    ks[b][d] = normal.inverse_cdf(u[3 * b + d].clamp(1e-300, 1.0 - 1e-16));
                }
            }
            phi(&ks[..dim_blocks])
        };
        let d = 3 * dim_blocks;
        mc_integrate(&f, &vec![0.0; d], &vec![1.0; d], samples, 2024)
            .unwrap()
            .scale(norm)
    }

    #[test]
    fn conjugation_symmetry() {
        for (r, s) in [(0.5, 0.7), (2.0, 1.5), (0.0, 0.3)] {
            let a = wightman_g1(r, s, m1(), &cfg(10.0)).value;
            let b = wightman_g1(r, -s, m1(), &cfg(10.0)).value;
            assert!((a.conj() - b).norm() < 1e-12 * a.norm());
            let a = g2(r, s, m1(), &cfg(10.0)).value;
            let b = g2(r, -s, m1(), &cfg(10.0)).value;
            assert!((a.conj() - b).norm() < 1e-12 * a.norm());
        }
    }

    #[test]
    fn equal_time_decay_is_monotone_past_five() {
        for f in [wightman_g1, g2] {
            let mut prev = f64::INFINITY;
            for i in 0..12 {
                let r = 5.0 + 0.5 * i as f64;
                let v = f(r, 0.0, m1(), &cfg(20.0)).value.norm();
                assert!(v < prev, "r={r}");
                prev = v;
            }
        }
        // massive fall-off: at equal times g₁ = m K₁(mr)/(4π² r)
        let far = wightman_g1(8.0, 0.0, m1(), &cfg(20.0)).value.norm();
        assert!(far < 1e-4);
    }

    #[test]
    fn g1_matches_monte_carlo() {
        let cutoff = 3.0;
        let q = wightman_g1(1.0, 1.0, m1(), &cfg(cutoff));
        let mc = gaussian_mc(
            1,
            cutoff,
            |ks| {
                let k = ks[0];
                let e = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + 1.0).sqrt();
                Complex64::from_polar(0.5 / e, k[0] - e)
            },
            1 << 20,
        );
        assert!(
            (q.value - mc.value).norm() < 3.0 * mc.error_estimate,
            "{} vs {} ± {}",
            q.value,
            mc.value,
            mc.error_estimate
        );
    }

    #[test]
    fn g2_matches_monte_carlo() {
        let cutoff = 3.0;
        let q = g2(1.0, 1.0, m1(), &cfg(cutoff));
        let mc = gaussian_mc(
            1,
            cutoff,
            |ks| {
                let k = ks[0];
                let e2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + 1.0;
                Complex64::from_polar(0.25 / e2, k[2] - e2.sqrt())
            },
            1 << 20,
        );
        assert!((q.value - mc.value).norm() < 3.0 * mc.error_estimate);
    }

    #[test]
    fn f_factorization_matches_six_dim_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let cutoff = 2.5;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut tuples = vec![([1.0, 0.0, 0.0], [0.5, 0.0, 0.0], 1.0, 0.3)];
        for _ in 0..4 {
            let v = |rng: &mut rand_chacha::ChaCha8Rng| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            };
            tuples.push((
                v(&mut rng),
                v(&mut rng),
                rng.gen_range(0.0..1.5),
                rng.gen_range(0.0..1.0),
            ));
        }
        for (dz, x, t, tau) in tuples {
            let q = f_function(dz, x, t, tau, m1(), &cfg(cutoff));
            // raw integrand: e^{i[k·Δz − E t]} e^{−i[(k−k′)·x − (E−E′)τ]} / (2E · 4E′²)
            let mc = gaussian_mc(
                2,
                cutoff,
                |ks| {
                    let (k, kp) = (ks[0], ks[1]);
                    let e = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + 1.0).sqrt();
                    let e2p = kp[0] * kp[0] + kp[1] * kp[1] + kp[2] * kp[2] + 1.0;
                    let kdz = k[0] * dz[0] + k[1] * dz[1] + k[2] * dz[2];
                    let dkx = (k[0] - kp[0]) * x[0] + (k[1] - kp[1]) * x[1] + (k[2] - kp[2]) * x[2];
                    let phase = kdz - e * t - (dkx - (e - e2p.sqrt()) * tau);
                    Complex64::from_polar(1.0 / (2.0 * e * 4.0 * e2p), phase)
                },
                1 << 20,
            );
            assert!(
                (q.value - mc.value).norm() < 3.0 * mc.error_estimate,
                "{dz:?} {x:?} {t} {tau}: {} vs {} ± {}",
                q.value,
                mc.value,
                mc.error_estimate
            );
        }
    }

    #[test]
    fn f_at_origin_depends_only_on_distance() {
        let a = f_function([2.0, 0.0, 0.0], [0.0; 3], 1.0, 0.4, m1(), &cfg(10.0)).value;
        let b = f_function([0.0, 1.2, -1.6], [0.0; 3], 1.0, 0.4, m1(), &cfg(10.0)).value;
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn commutator_vanishes_at_equal_time_and_space_like() {
        let c = free_commutator([2.0, 0.0, 0.0], 0.0, m1(), &cfg(20.0));
        assert_eq!(c.value.norm(), 0.0);
        let c = free_commutator([3.0, 0.0, 0.0], 1.0, m1(), &cfg(20.0));
        assert!(
            c.value.norm() <= 3.0 * c.error_estimate,
            "{} ± {}",
            c.value,
            c.error_estimate
        );
    }

    #[test]
    fn commutator_space_like_grid() {
        for i in 0..10 {
            let r = 2.0 + 0.4 * i as f64;
            let t = 0.5 * (i % 3) as f64;
            let c = free_commutator([r, 0.0, 0.0], t, m1(), &cfg(20.0));
            assert!(
                c.value.norm() <= 3.0 * c.error_estimate + 1e-15,
                "r={r} t={t}: {}",
                c.value
            );
        }
    }

    #[test]
    fn commutator_time_like_matches_textbook() {
        // away from the cone, i∆ = 2i Im g₁ with ∆ = m J₁(m√λ) / (4π√λ) for t > 0;
        // the regulator shifts this by O(1/Λ²)
        for i in 0..10 {
            let r = 0.1 * i as f64;
            let t = r + 1.5 + 0.3 * i as f64;
            let lam = (t * t - r * r).sqrt();
            let c = free_commutator([0.0, r, 0.0], t, m1(), &cfg(60.0));
            assert!(c.value.norm() > 1e-4);
            let expect = bessel_j1(lam) / (8.0 * PI * lam);
            assert!(
                (c.value.im / 2.0 - expect).abs() < 2e-3 * expect.abs() + 2e-6,
                "r={r} t={t}: {} vs {expect}",
                c.value.im / 2.0
            );
        }
        let c = free_commutator([0.5, 0.0, 0.0], 2.0, m1(), &cfg(20.0));
        let lam: f64 = (4.0f64 - 0.25).sqrt();
        assert_eq!(c.value.im.signum(), bessel_j1(lam).signum());
    }
}
