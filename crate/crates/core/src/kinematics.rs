//! Relativistic single-particle kinematics in natural units (ħ = c = 1).
//!
//! Metric signature is (+,−,−,−); the squared interval is exposed directly and
//! is negative for space-like separations.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("mass must be finite and strictly positive, got {0}")]
    NonPositiveMass(f64),
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
}

/// Spatial three-momentum (units of mass).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreeMomentum(pub [f64; 3]);

impl ThreeMomentum {
    pub const ZERO: ThreeMomentum = ThreeMomentum([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        ThreeMomentum([x, y, z])
    }

    pub fn along_x(p: f64) -> Self {
        ThreeMomentum([p, 0.0, 0.0])
    }

    pub fn try_new(c: [f64; 3]) -> Result<Self, KinematicsError> {
        if c.iter().all(|v| v.is_finite()) {
            Ok(ThreeMomentum(c))
        } else {
            Err(KinematicsError::NonFinite("ThreeMomentum"))
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &ThreeMomentum) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        ThreeMomentum([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Add for ThreeMomentum {
    type Output = ThreeMomentum;
    fn add(self, o: ThreeMomentum) -> ThreeMomentum {
        ThreeMomentum([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for ThreeMomentum {
    type Output = ThreeMomentum;
    fn sub(self, o: ThreeMomentum) -> ThreeMomentum {
        ThreeMomentum([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for ThreeMomentum {
    type Output = ThreeMomentum;
    fn neg(self) -> ThreeMomentum {
        ThreeMomentum([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Positive particle mass. The only scale in the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Mass(f64);

impl Mass {
    pub fn new(value: f64) -> Result<Self, KinematicsError> {
        if value.is_finite() && value > 0.0 {
            Ok(Mass(value))
        } else {
            Err(KinematicsError::NonPositiveMass(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for Mass {
    fn default() -> Self {
        Mass(1.0)
    }
}

impl TryFrom<f64> for Mass {
    type Error = KinematicsError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Mass::new(v)
    }
}

impl From<Mass> for f64 {
    fn from(m: Mass) -> f64 {
        m.0
    }
}

impl fmt::Display for Mass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Event in Minkowski space: time plus spatial position (units 1/mass).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub time: f64,
    pub position: [f64; 3],
}

impl SpacetimePoint {
    pub fn new(time: f64, position: [f64; 3]) -> Self {
        SpacetimePoint { time, position }
    }

    pub fn try_new(time: f64, position: [f64; 3]) -> Result<Self, KinematicsError> {
        if time.is_finite() && position.iter().all(|v| v.is_finite()) {
            Ok(SpacetimePoint { time, position })
        } else {
            Err(KinematicsError::NonFinite("SpacetimePoint"))
        }
    }

    /// Component-wise difference `self − other`.
    pub fn separation(&self, other: &SpacetimePoint) -> SpacetimePoint {
        SpacetimePoint {
            time: self.time - other.time,
            position: [
                self.position[0] - other.position[0],
                self.position[1] - other.position[1],
                self.position[2] - other.position[2],
            ],
        }
    }

    pub fn spatial_norm(&self) -> f64 {
        self.position.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Pure boost parametrised by its rapidity vector. Direction is the boost
/// axis, magnitude the rapidity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Boost {
    pub rapidity: [f64; 3],
}

impl Boost {
    pub fn new(rapidity: [f64; 3]) -> Self {
        Boost { rapidity }
    }

    pub fn along_x(eta: f64) -> Self {
        Boost {
            rapidity: [eta, 0.0, 0.0],
        }
    }

    pub fn identity() -> Self {
        Boost::default()
    }

    pub fn magnitude(&self) -> f64 {
        self.rapidity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// E_p = √(m² + |p|²).
pub fn energy(p: &ThreeMomentum, m: Mass) -> f64 {
    energy_from_norm_sqr(p.norm_sqr(), m.value())
}

/// Same as [`energy`] for a squared momentum magnitude; used by the radial
/// reductions where only |p|² is known.
#[inline]
pub fn energy_from_norm_sqr(p2: f64, m: f64) -> f64 {
    (m * m + p2).sqrt()
}

/// ΔE(p, q) = E_{p−q} − E_p.
pub fn delta_energy(p: &ThreeMomentum, q: &ThreeMomentum, m: Mass) -> f64 {
    let e_p = energy(p, m);
    let e_pq = energy(&(*p - *q), m);
    // (E_{p-q}² − E_p²)/(E_{p-q} + E_p) avoids cancellation for small transfers.
    let num = (*p - *q).norm_sqr() - p.norm_sqr();
    let den = e_pq + e_p;
    if den > 0.0 {
        num / den
    } else {
        e_pq - e_p
    }
}

/// Squared interval (Δt)² − |Δx|².
pub fn invariant_interval(z1: &SpacetimePoint, z2: &SpacetimePoint) -> f64 {
    let d = z1.separation(z2);
    let r2: f64 = d.position.iter().map(|v| v * v).sum();
    d.time * d.time - r2
}

pub fn is_spacelike(z1: &SpacetimePoint, z2: &SpacetimePoint) -> bool {
    invariant_interval(z1, z2) < 0.0
}

/// Proper orthochronous boost of an event.
///
/// With n̂ the unit rapidity direction and η its magnitude:
/// t′ = cosh η · t − sinh η · (n̂·x),
/// x′ = x + ((cosh η − 1)(n̂·x) − sinh η · t) n̂.
pub fn boost(z: &SpacetimePoint, b: &Boost) -> SpacetimePoint {
    let eta = b.magnitude();
    if eta == 0.0 {
        return *z;
    }
    let n = [
        b.rapidity[0] / eta,
        b.rapidity[1] / eta,
        b.rapidity[2] / eta,
    ];
    let (ch, sh) = (eta.cosh(), eta.sinh());
    let n_dot_x = n[0] * z.position[0] + n[1] * z.position[1] + n[2] * z.position[2];
    let t = ch * z.time - sh * n_dot_x;
    let shift = (ch - 1.0) * n_dot_x - sh * z.time;
    SpacetimePoint {
        time: t,
        position: [
            z.position[0] + shift * n[0],
            z.position[1] + shift * n[1],
            z.position[2] + shift * n[2],
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1() -> Mass {
        Mass::new(1.0).unwrap()
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&ThreeMomentum::ZERO, m1()), 1.0);
        assert!((energy(&ThreeMomentum::new(0.0, 0.0, 1.0), m1()) - 2f64.sqrt()).abs() < 1e-15);
        assert!(Mass::new(0.0).is_err());
        assert!(Mass::new(-1.0).is_err());
        let e = energy(
            &ThreeMomentum::new(3.0, 4.0, 0.0),
            Mass::new(1e-12).unwrap(),
        );
        assert!((e - 5.0).abs() < 1e-12);
    }

    #[test]
    fn delta_energy_examples() {
        let p = ThreeMomentum::new(0.3, -0.2, 1.1);
        assert_eq!(delta_energy(&p, &ThreeMomentum::ZERO, m1()), 0.0);
        let d = delta_energy(
            &ThreeMomentum::ZERO,
            &ThreeMomentum::new(0.0, 0.0, 1.0),
            m1(),
        );
        assert!((d - (2f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn interval_examples() {
        let o = SpacetimePoint::default();
        assert_eq!(invariant_interval(&o, &o), 0.0);
        let t1 = SpacetimePoint::new(1.0, [0.0; 3]);
        assert_eq!(invariant_interval(&t1, &o), 1.0);
        assert!(!is_spacelike(&t1, &o));
        let x2 = SpacetimePoint::new(0.0, [2.0, 0.0, 0.0]);
        assert_eq!(invariant_interval(&x2, &o), -4.0);
        assert!(is_spacelike(&x2, &o));
        assert!(!is_spacelike(&o, &o));
    }

    #[test]
    fn textbook_boost_along_x() {
        let eta = 0.7;
        let z = SpacetimePoint::new(0.0, [1.0, 0.0, 0.0]);
        let zb = boost(&z, &Boost::along_x(eta));
        assert!((zb.time + eta.sinh()).abs() < 1e-14);
        assert!((zb.position[0] - eta.cosh()).abs() < 1e-14);
        assert_eq!(zb.position[1], 0.0);
        assert_eq!(boost(&z, &Boost::identity()), z);
    }

    fn finite() -> impl Strategy<Value = f64> {
        -10.0f64..10.0
    }

    proptest! {
        #[test]
        fn energy_at_least_mass(px in finite(), py in finite(), pz in finite(), m in 0.01f64..5.0) {
            let p = ThreeMomentum::new(px, py, pz);
            let mm = Mass::new(m).unwrap();
            prop_assert!(energy(&p, mm) >= m);
        }

        #[test]
        fn delta_energy_matches_energy_difference(
            px in finite(), py in finite(), pz in finite(),
            qx in finite(), qy in finite(), qz in finite(), m in 0.05f64..5.0
        ) {
            let p = ThreeMomentum::new(px, py, pz);
            let q = ThreeMomentum::new(qx, qy, qz);
            let mm = Mass::new(m).unwrap();
            let direct = energy(&(p - q), mm) - energy(&p, mm);
            prop_assert!((delta_energy(&p, &q, mm) - direct).abs() < 1e-12 * (1.0 + direct.abs()));
            // exchange symmetry
            let swapped = delta_energy(&(p - q), &(-q), mm);
            prop_assert!((delta_energy(&p, &q, mm) + swapped).abs() < 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn boost_preserves_interval(
            t1 in finite(), x1 in finite(), y1 in finite(), w1 in finite(),
            t2 in finite(), x2 in finite(), y2 in finite(), w2 in finite(),
            bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0
        ) {
            let a = SpacetimePoint::new(t1, [x1, y1, w1]);
            let b = SpacetimePoint::new(t2, [x2, y2, w2]);
            let bo = Boost::new([bx, by, bz]);
            let before = invariant_interval(&a, &b);
            let after = invariant_interval(&boost(&a, &bo), &boost(&b, &bo));
            let scale = 1.0 + a.separation(&b).time.powi(2) + a.separation(&b).spatial_norm().powi(2);
            prop_assert!((before - after).abs() < 1e-10 * scale);
        }

        #[test]
        fn collinear_boosts_add_rapidity(eta1 in -2.0f64..2.0, eta2 in -2.0f64..2.0,
                                         t in finite(), x in finite(), y in finite()) {
            let z = SpacetimePoint::new(t, [x, y, 0.3]);
            let two = boost(&boost(&z, &Boost::along_x(eta1)), &Boost::along_x(eta2));
            let one = boost(&z, &Boost::along_x(eta1 + eta2));
            let scale = 1.0 + t.abs() + x.abs();
            prop_assert!((two.time - one.time).abs() < 1e-10 * scale);
            prop_assert!((two.position[0] - one.position[0]).abs() < 1e-10 * scale);
        }
    }
}
