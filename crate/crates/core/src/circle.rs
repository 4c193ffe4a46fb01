//! Circle maps as degree-one lifts `ℝ → ℝ` with `φ(x + 1) = φ(x) + 1`, and
//! the cross-ratio observable.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::smooth::{compose_jets, Jet};

/// A circle map given by its continuous lift.
pub trait CircleMap {
    fn lift(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// A circle map with derivatives up to order three.
pub trait CircleJet: CircleMap {
    fn jet(&self, x: f64) -> Jet;
}

/// A circle jet whose periodicity at `0 ~ 1` can be certified.
pub trait PeriodicJet: CircleJet {
    /// Derivatives of orders one to three agree at `0` and `1` within `tol`.
    fn check_periodic(&self, tol: f64) -> Result<()>;
}

/// `outer ∘ inner`.
#[derive(Debug, Clone, Copy)]
pub struct Composed<'a, A: ?Sized, B: ?Sized> {
    pub outer: &'a A,
    pub inner: &'a B,
}

impl<'a, A: ?Sized, B: ?Sized> Composed<'a, A, B> {
    pub fn new(outer: &'a A, inner: &'a B) -> Self {
        Self { outer, inner }
    }
}

impl<A: CircleMap + ?Sized, B: CircleMap + ?Sized> CircleMap for Composed<'_, A, B> {
    fn lift(&self, x: f64) -> f64 {
        self.outer.lift(self.inner.lift(x))
    }

    fn derivative(&self, x: f64) -> f64 {
        self.outer.derivative(self.inner.lift(x)) * self.inner.derivative(x)
    }
}

impl<A: CircleJet + ?Sized, B: CircleJet + ?Sized> CircleJet for Composed<'_, A, B> {
    fn jet(&self, x: f64) -> Jet {
        let inner = self.inner.jet(x);
        compose_jets(self.outer.jet(inner[0]), inner)
    }
}

/// The identity circle map.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl CircleMap for IdentityMap {
    fn lift(&self, x: f64) -> f64 {
        x
    }

    fn derivative(&self, _x: f64) -> f64 {
        1.0
    }
}

impl CircleJet for IdentityMap {
    fn jet(&self, x: f64) -> Jet {
        [x, 1.0, 0.0, 0.0]
    }
}

impl PeriodicJet for IdentityMap {
    fn check_periodic(&self, _tol: f64) -> Result<()> {
        Ok(())
    }
}

impl<A: PeriodicJet + ?Sized, B: PeriodicJet + ?Sized> PeriodicJet for Composed<'_, A, B> {
    fn check_periodic(&self, tol: f64) -> Result<()> {
        self.outer.check_periodic(tol)?;
        self.inner.check_periodic(tol)
    }
}

/// `π √(φ'(t) φ'(s)) / sin(π [φ(t) − φ(s)])`.
///
/// Invariant under post-composition with Möbius circle maps. Positive when
/// `0 < φ(t) − φ(s) < 1`.
pub fn cross_ratio<M: CircleMap + ?Sized>(phi: &M, s: f64, t: f64) -> Result<f64> {
    let gap = phi.lift(t) - phi.lift(s);
    let frac = gap.rem_euclid(1.0);
    if frac < 1e-14 || 1.0 - frac < 1e-14 {
        return Err(Error::Singular(format!(
            "phi({t}) and phi({s}) coincide mod 1"
        )));
    }
    let ds = phi.derivative(s);
    let dt = phi.derivative(t);
    if !(ds > 0.0 && dt > 0.0) {
        return Err(Error::NonPositiveDerivative {
            t: if ds > 0.0 { t } else { s },
            value: ds.min(dt),
        });
    }
    Ok(PI * (ds * dt).sqrt() / (PI * gap).sin())
}
