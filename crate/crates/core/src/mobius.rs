//! PSL(2,ℝ) acting on the circle, in the disk chart `(z, a)`.
//!
//! `φ_{z,a}(t) = a − (i/2π) ln[(e^{2πit} − z)/(1 − z̄e^{2πit})]`. Writing
//! `w = e^{2πit}` the bracket is `w · conj(u)/u` with `u = 1 − z̄w`, and
//! `Re u > 0`, so the lift is `a + t − arg(u)/π` with the principal argument.
//! No branch tracking is needed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::circle::{CircleJet, CircleMap, PeriodicJet};
use crate::error::{Error, Result};
use crate::quadrature::periodic_trapezoid_converged;
use crate::smooth::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MobiusElement {
    #[serde(serialize_with = "serialize_complex")]
    z: Complex64,
    a: f64,
}

fn serialize_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

impl Default for MobiusElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl MobiusElement {
    pub fn new(z: Complex64, a: f64) -> Result<Self> {
        if !(z.norm() < 1.0) || !a.is_finite() {
            return Err(Error::Parameter(format!(
                "Möbius element needs |z| < 1 and finite a, got z = {z}, a = {a}"
            )));
        }
        Ok(Self {
            z,
            a: a.rem_euclid(1.0),
        })
    }

    /// `z = ρ e^{2πiθ}`.
    pub fn from_polar(rho: f64, theta: f64, a: f64) -> Result<Self> {
        Self::new(Complex64::from_polar(rho, 2.0 * PI * theta), a)
    }

    pub fn identity() -> Self {
        Self {
            z: Complex64::new(0.0, 0.0),
            a: 0.0,
        }
    }

    pub fn rotation(a: f64) -> Self {
        Self {
            z: Complex64::new(0.0, 0.0),
            a: a.rem_euclid(1.0),
        }
    }

    /// `ρ` uniform on `[0, rho_max]`, `θ` and `a` uniform on `[0, 1)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, rho_max: f64) -> Self {
        let rho = rng.gen::<f64>() * rho_max.min(1.0 - 1e-12);
        let theta = rng.gen::<f64>();
        let a = rng.gen::<f64>();
        Self::from_polar(rho, theta, a).expect("rho < 1")
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn rho(&self) -> f64 {
        self.z.norm()
    }

    /// `arg(z) / 2π` in `[0, 1)`.
    pub fn theta(&self) -> f64 {
        (self.z.arg() / (2.0 * PI)).rem_euclid(1.0)
    }

    fn denominator(&self, t: f64) -> (f64, f64, f64) {
        let rho = self.rho();
        let (s, c) = (2.0 * PI * (t - self.theta())).sin_cos();
        (
            1.0 + rho * rho - 2.0 * rho * c,
            4.0 * PI * rho * s,
            8.0 * PI * PI * rho * c,
        )
    }

    /// `φ_{z,a}(t) mod 1`.
    pub fn apply(&self, t: f64) -> f64 {
        self.lift_at(t).rem_euclid(1.0)
    }

    /// The increasing lift `a + t − arg(1 − z̄ e^{2πit})/π`.
    pub fn lift_at(&self, t: f64) -> f64 {
        let w = Complex64::from_polar(1.0, 2.0 * PI * t);
        let u = Complex64::new(1.0, 0.0) - self.z.conj() * w;
        self.a + t - u.arg() / PI
    }

    /// The Poisson kernel `(1 − |z|²)/|e^{2πit} − z|²`.
    pub fn derivative_at(&self, t: f64) -> f64 {
        let rho = self.rho();
        (1.0 - rho * rho) / self.denominator(t).0
    }

    pub fn jet_at(&self, t: f64) -> Jet {
        let rho = self.rho();
        let k = 1.0 - rho * rho;
        let (d, d1, d2) = self.denominator(t);
        [
            self.lift_at(t),
            k / d,
            -k * d1 / (d * d),
            -k * (d2 * d - 2.0 * d1 * d1) / (d * d * d),
        ]
    }

    /// `∫ φ'² = (1 + ρ²)/(1 − ρ²)`.
    pub fn energy(&self) -> f64 {
        let r2 = self.z.norm_sqr();
        (1.0 + r2) / (1.0 - r2)
    }

    /// `∫ φ'²` by the periodic trapezoid rule, doubling until converged.
    pub fn energy_quadrature(&self) -> f64 {
        let (v, _) = periodic_trapezoid_converged(
            |t| {
                let d = self.derivative_at(t);
                d * d
            },
            64,
            1e-15,
            1 << 22,
        );
        v
    }

    /// `[[e^{2πia}, −e^{2πia} z], [−z̄, 1]]` acting on the unit disk.
    pub fn to_matrix(&self) -> [Complex64; 4] {
        let ea = Complex64::from_polar(1.0, 2.0 * PI * self.a);
        [ea, -ea * self.z, -self.z.conj(), Complex64::new(1.0, 0.0)]
    }

    /// Inverse of [`Self::to_matrix`] up to a complex scalar.
    pub fn from_matrix(m: [Complex64; 4]) -> Result<Self> {
        let [a, b, _c, d] = m;
        if a.norm() == 0.0 || d.norm() == 0.0 {
            return Err(Error::Singular("degenerate Möbius matrix".into()));
        }
        let z = -b / a;
        let angle = (a / d).arg() / (2.0 * PI);
        Self::new(z, angle)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let p = self.to_matrix();
        let q = other.to_matrix();
        let m = [
            p[0] * q[0] + p[1] * q[2],
            p[0] * q[1] + p[1] * q[3],
            p[2] * q[0] + p[3] * q[2],
            p[2] * q[1] + p[3] * q[3],
        ];
        Self::from_matrix(m).expect("products of disk automorphisms are disk automorphisms")
    }

    pub fn inverse(&self) -> Self {
        let [a, b, c, d] = self.to_matrix();
        Self::from_matrix([d, -b, -c, a]).expect("inverse of a disk automorphism")
    }
}

impl CircleMap for MobiusElement {
    fn lift(&self, x: f64) -> f64 {
        self.lift_at(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.derivative_at(x)
    }
}

impl CircleJet for MobiusElement {
    fn jet(&self, x: f64) -> Jet {
        self.jet_at(x)
    }
}

impl PeriodicJet for MobiusElement {
    fn check_periodic(&self, _tol: f64) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{cross_ratio, Composed};
    use crate::schwarzian::schwarzian_of_jet;
    use crate::smooth::SmoothMap;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle_gap(x: f64, y: f64) -> f64 {
        let d = (x - y).rem_euclid(1.0);
        d.min(1.0 - d)
    }

    #[test]
    fn identity_and_rotation() {
        let id = MobiusElement::identity();
        for &t in &[0.0, 0.3, 0.99] {
            assert_relative_eq!(id.apply(t), t, epsilon = 1e-15);
            assert_eq!(id.derivative_at(t), 1.0);
        }
        let r = MobiusElement::rotation(0.25);
        assert_relative_eq!(r.apply(0.5), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn winding_number_one() {
        let m = MobiusElement::new(Complex64::new(0.5, 0.3), 0.1).unwrap();
        for &t in &[0.0, 0.2, 0.7] {
            assert_relative_eq!(m.lift_at(t + 1.0) - m.lift_at(t), 1.0, epsilon = 1e-13);
        }
        let mut prev = m.lift_at(0.0);
        for i in 1..=4000 {
            let x = m.lift_at(i as f64 / 4000.0);
            assert!(x > prev);
            prev = x;
        }
    }

    #[test]
    fn derivative_closed_forms() {
        let rho = 0.6;
        let m = MobiusElement::from_polar(rho, 0.0, 0.0).unwrap();
        assert_relative_eq!(m.derivative_at(0.0), (1.0 + rho) / (1.0 - rho), max_relative = 1e-14);
        let m = MobiusElement::new(Complex64::new(-0.2, 0.55), 0.4).unwrap();
        let h = 1e-5;
        for &t in &[0.05, 0.4, 0.8] {
            let fd = (m.lift_at(t + h) - m.lift_at(t - h)) / (2.0 * h);
            assert_relative_eq!(m.derivative_at(t), fd, max_relative = 1e-6);
            let j = m.jet_at(t);
            let fd2 = (m.derivative_at(t + h) - m.derivative_at(t - h)) / (2.0 * h);
            let fd3 = (m.jet_at(t + h)[2] - m.jet_at(t - h)[2]) / (2.0 * h);
            assert_relative_eq!(j[2], fd2, max_relative = 1e-6, epsilon = 1e-8);
            assert_relative_eq!(j[3], fd3, max_relative = 1e-6, epsilon = 1e-6);
            // Möbius circle maps conjugate to real Möbius maps under the
            // tangent, so S(φ) + 2π² φ'² = 2π².
            assert_relative_eq!(schwarzian_of_jet(j) + 2.0 * PI * PI * j[1] * j[1], 2.0 * PI * PI, max_relative = 1e-10);
        }
        let (mean, _) = periodic_trapezoid_converged(|t| m.derivative_at(t), 32, 1e-15, 1 << 16);
        assert_relative_eq!(mean, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn poisson_energy() {
        assert_eq!(MobiusElement::identity().energy(), 1.0);
        assert_relative_eq!(
            MobiusElement::from_polar(0.5, 0.2, 0.0).unwrap().energy(),
            5.0 / 3.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            MobiusElement::from_polar(0.9, 0.0, 0.0).unwrap().energy(),
            1.81 / 0.19,
            max_relative = 1e-14
        );
        for &rho in &[0.0, 0.3, 0.9, 0.99] {
            let m = MobiusElement::from_polar(rho, 0.37, 0.1).unwrap();
            assert_relative_eq!(m.energy_quadrature(), m.energy(), max_relative = 1e-10);
        }
    }

    #[test]
    fn group_action_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m1 = MobiusElement::random(&mut rng, 0.95);
            let m2 = MobiusElement::random(&mut rng, 0.95);
            let m12 = m1.compose(&m2);
            let inv = m1.inverse();
            for k in 0..10 {
                let t = k as f64 / 10.0 + 0.013;
                assert!(circle_gap(m1.apply(m2.apply(t)), m12.apply(t)) < 1e-10);
                assert!(circle_gap(inv.apply(m1.apply(t)), t) < 1e-10);
            }
        }
    }

    #[test]
    fn cross_ratio_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = SmoothMap::sine_perturbation(0.4, 2).unwrap();
        for _ in 0..20 {
            let m = MobiusElement::random(&mut rng, 0.9);
            let composed = Composed::new(&m, &phi);
            let (s, t) = (rng.gen::<f64>(), rng.gen::<f64>());
            let base = cross_ratio(&phi, s, t).unwrap();
            assert_relative_eq!(cross_ratio(&composed, s, t).unwrap(), base, max_relative = 1e-8);
        }
    }
}
