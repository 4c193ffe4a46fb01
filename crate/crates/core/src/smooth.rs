//! C³ maps on `[0, 1]` carried as derivative bundles ("jets").
//!
//! Test maps are assembled from a fixed set of combinators (polynomials,
//! trigonometric perturbations, fractional-linear maps, natural cubic splines,
//! composition). There is no general function parser here.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::circle::{CircleJet, CircleMap, PeriodicJet};
use crate::error::{Error, Result};

/// `[f, f', f'', f''']` at one point.
pub type Jet = [f64; 4];

type JetFn = dyn Fn(f64) -> Jet + Send + Sync;

/// Values and first two derivatives of a map at both ends of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointData {
    pub f0: f64,
    pub f1: f64,
    pub d1_0: f64,
    pub d1_1: f64,
    pub d2_0: f64,
    pub d2_1: f64,
}

impl EndpointData {
    fn from_jets(at0: Jet, at1: Jet) -> Self {
        Self {
            f0: at0[0],
            f1: at1[0],
            d1_0: at0[1],
            d1_1: at1[1],
            d2_0: at0[2],
            d2_1: at1[2],
        }
    }

    /// `log f'(1) - log f'(0)`.
    pub fn log_derivative_jump(&self) -> f64 {
        self.d1_1.ln() - self.d1_0.ln()
    }
}

/// A smooth map on `[0, 1]` with analytic (or ODE-propagated) derivatives up
/// to order three.
#[derive(Clone)]
pub struct SmoothMap {
    jet: Arc<JetFn>,
    endpoints: EndpointData,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("endpoints", &self.endpoints)
            .finish_non_exhaustive()
    }
}

/// Chain rule for jets: the jet of `g ∘ f` given the jet of `g` at `f(t)` and
/// the jet of `f` at `t`.
pub fn compose_jets(g: Jet, f: Jet) -> Jet {
    let (f1, f2, f3) = (f[1], f[2], f[3]);
    [
        g[0],
        g[1] * f1,
        g[2] * f1 * f1 + g[1] * f2,
        g[3] * f1 * f1 * f1 + 3.0 * g[2] * f1 * f2 + g[1] * f3,
    ]
}

impl SmoothMap {
    pub fn new<F>(jet: F) -> Self
    where
        F: Fn(f64) -> Jet + Send + Sync + 'static,
    {
        let endpoints = EndpointData::from_jets(jet(0.0), jet(1.0));
        Self {
            jet: Arc::new(jet),
            endpoints,
        }
    }

    #[inline]
    pub fn jet(&self, t: f64) -> Jet {
        (self.jet)(t)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.jet(t)[0]
    }

    #[inline]
    pub fn d1(&self, t: f64) -> f64 {
        self.jet(t)[1]
    }

    #[inline]
    pub fn d2(&self, t: f64) -> f64 {
        self.jet(t)[2]
    }

    #[inline]
    pub fn d3(&self, t: f64) -> f64 {
        self.jet(t)[3]
    }

    pub fn endpoints(&self) -> &EndpointData {
        &self.endpoints
    }

    pub fn identity() -> Self {
        Self::new(|t| [t, 1.0, 0.0, 0.0])
    }

    /// `sum_k c[k] t^k`.
    pub fn polynomial(coeffs: &[f64]) -> Self {
        let c = coeffs.to_vec();
        Self::new(move |t| {
            let mut out = [0.0; 4];
            for (order, slot) in out.iter_mut().enumerate() {
                // Horner on the order-th derivative, coefficients scaled by
                // the falling factorial k (k-1) ... (k-order+1).
                let mut acc = 0.0;
                for k in (order..c.len()).rev() {
                    let falling: f64 = (0..order).map(|m| (k - m) as f64).product();
                    acc = acc * t + c[k] * falling;
                }
                *slot = acc;
            }
            out
        })
    }

    /// `(a t + b) / (c t + d)`; the pole must stay off `[0, 1]`.
    pub fn fractional_linear(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if det == 0.0 {
            return Err(Error::Parameter("degenerate fractional-linear map".into()));
        }
        if d.signum() != (c + d).signum() || d == 0.0 || c + d == 0.0 {
            return Err(Error::Parameter("pole of fractional-linear map in [0, 1]".into()));
        }
        Ok(Self::new(move |t| {
            let q = c * t + d;
            let q2 = q * q;
            [
                (a * t + b) / q,
                det / q2,
                -2.0 * det * c / (q2 * q),
                6.0 * det * c * c / (q2 * q2),
            ]
        }))
    }

    /// The raw exponential `t -> e^{rate t}`, not normalised to `[0, 1]`.
    pub fn exponential(rate: f64) -> Self {
        Self::new(move |t| {
            let e = (rate * t).exp();
            [e, rate * e, rate * rate * e, rate * rate * rate * e]
        })
    }

    /// `(e^{ct} - 1) / (e^c - 1)`, a reparametrisation with
    /// `log f'(1) - log f'(0) = c`.
    pub fn exp_map(c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::Parameter("exp_map rate must be finite and non-zero".into()));
        }
        let norm = c.exp_m1();
        Ok(Self::new(move |t| {
            let e = (c * t).exp();
            [(c * t).exp_m1() / norm, c * e / norm, c * c * e / norm, c * c * c * e / norm]
        }))
    }

    /// `t + eps sin(2πkt) / (2πk)`: a smooth circle diffeomorphism for
    /// `|eps| < 1` with all derivatives periodic.
    pub fn sine_perturbation(eps: f64, k: u32) -> Result<Self> {
        if eps.abs() >= 1.0 || k == 0 {
            return Err(Error::Parameter(format!(
                "sine perturbation needs |eps| < 1 and k >= 1 (eps = {eps}, k = {k})"
            )));
        }
        let w = 2.0 * PI * k as f64;
        Ok(Self::new(move |t| {
            let (s, c) = (w * t).sin_cos();
            [t + eps * s / w, 1.0 + eps * c, -eps * w * s, -eps * w * w * c]
        }))
    }

    /// `t + eps sin²(πt)`, periodic first and second derivatives.
    pub fn sin_squared_bump(eps: f64) -> Result<Self> {
        if eps.abs() * PI >= 1.0 {
            return Err(Error::Parameter(format!("sin² bump needs |eps| < 1/π, got {eps}")));
        }
        Ok(Self::new(move |t| {
            let s = (PI * t).sin();
            let (s2, c2) = (2.0 * PI * t).sin_cos();
            [
                t + eps * s * s,
                1.0 + eps * PI * s2,
                2.0 * eps * PI * PI * c2,
                -4.0 * eps * PI * PI * PI * s2,
            ]
        }))
    }

    /// Natural cubic spline through `(xs[i], ys[i])`. Third derivative is
    /// piecewise constant.
    pub fn cubic_spline(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::Parameter("cubic spline needs >= 3 matching knots".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("spline knots must be strictly increasing".into()));
        }
        // Tridiagonal solve for the knot second derivatives, natural ends.
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        for i in 1..n - 1 {
            let lower = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
        let xs = xs.to_vec();
        let ys = ys.to_vec();
        Ok(Self::new(move |t| {
            let i = match xs.partition_point(|&x| x <= t) {
                0 => 0,
                p if p >= xs.len() => xs.len() - 2,
                p => p - 1,
            };
            let hi = xs[i + 1] - xs[i];
            let a = (xs[i + 1] - t) / hi;
            let b = (t - xs[i]) / hi;
            let value = a * ys[i]
                + b * ys[i + 1]
                + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * hi * hi / 6.0;
            let d1 = (ys[i + 1] - ys[i]) / hi
                + ((1.0 - 3.0 * a * a) * m[i] + (3.0 * b * b - 1.0) * m[i + 1]) * hi / 6.0;
            let d2 = a * m[i] + b * m[i + 1];
            let d3 = (m[i + 1] - m[i]) / hi;
            [value, d1, d2, d3]
        }))
    }

    /// A random increasing natural spline through `n_knots + 1` knots with
    /// `f(0) = 0`, `f(1) = 1`; the perturbation is shrunk until `f' > 0`.
    pub fn random_spline_diffeo<R: Rng + ?Sized>(rng: &mut R, n_knots: usize, amplitude: f64) -> Self {
        let n = n_knots.max(2);
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let noise: Vec<f64> = (0..=n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut amp = amplitude;
        loop {
            let ys: Vec<f64> = xs
                .iter()
                .zip(&noise)
                .enumerate()
                .map(|(i, (&x, &u))| if i == 0 || i == n { x } else { x + amp * u / n as f64 })
                .collect();
            let spline = Self::cubic_spline(&xs, &ys).expect("valid knots");
            if spline.min_derivative(512) > 0.05 {
                return spline;
            }
            amp *= 0.5;
        }
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Self {
        let outer = outer.clone();
        let inner = inner.clone();
        Self::new(move |t| {
            let f = inner.jet(t);
            compose_jets(outer.jet(f[0]), f)
        })
    }

    /// Minimum of `f'` over `n + 1` uniform nodes of `[0, 1]`.
    pub fn min_derivative(&self, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.d1(i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks `f(0) = 0`, `f(1) = 1` within `tol` and `f' > 0` on a grid.
    pub fn check_reparametrisation(&self, tol: f64) -> Result<()> {
        let e = &self.endpoints;
        if (e.f0).abs() > tol || (e.f1 - 1.0).abs() > tol {
            return Err(Error::Parameter(format!(
                "not a reparametrisation of [0, 1]: f(0) = {}, f(1) = {}",
                e.f0, e.f1
            )));
        }
        let n = 1024;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let d = self.d1(t);
            if !(d > 0.0) {
                return Err(Error::NonPositiveDerivative { t, value: d });
            }
        }
        Ok(())
    }

    /// Derivatives of orders one to three agree at `0` and `1` within `tol`.
    pub fn check_periodic(&self, tol: f64) -> Result<()> {
        let j0 = self.jet(0.0);
        let j1 = self.jet(1.0);
        for order in 1..4 {
            let scale = 1.0f64.max(j0[order].abs()).max(j1[order].abs());
            if (j0[order] - j1[order]).abs() > tol * scale {
                return Err(Error::Periodicity(format!(
                    "derivative of order {order}: {} at 0 vs {} at 1",
                    j0[order], j1[order]
                )));
            }
        }
        Ok(())
    }
}

/// Reparametrisations of `[0, 1]` act on the circle through their degree-one
/// lift `x -> floor(x) + f(x - floor(x))`.
impl CircleMap for SmoothMap {
    fn lift(&self, x: f64) -> f64 {
        let n = x.floor();
        n + self.eval(x - n)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.d1(x - x.floor())
    }
}

impl CircleJet for SmoothMap {
    fn jet(&self, x: f64) -> Jet {
        let n = x.floor();
        let mut j = SmoothMap::jet(self, x - n);
        j[0] += n;
        j
    }
}

impl PeriodicJet for SmoothMap {
    fn check_periodic(&self, tol: f64) -> Result<()> {
        SmoothMap::check_periodic(self, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_check(map: &SmoothMap, t: f64) {
        let h = 1e-5;
        let j = map.jet(t);
        let jp = map.jet(t + h);
        let jm = map.jet(t - h);
        for order in 0..3 {
            let fd = (jp[order] - jm[order]) / (2.0 * h);
            assert_relative_eq!(fd, j[order + 1], epsilon = 1e-5, max_relative = 1e-6);
        }
    }

    #[test]
    fn polynomial_jet() {
        let p = SmoothMap::polynomial(&[1.0, -2.0, 0.5, 3.0]);
        let t = 0.3;
        assert_relative_eq!(p.eval(t), 1.0 - 0.6 + 0.045 + 0.081, epsilon = 1e-15);
        assert_relative_eq!(p.d1(t), -2.0 + 0.3 + 9.0 * 0.09, epsilon = 1e-15);
        assert_relative_eq!(p.d2(t), 1.0 + 18.0 * 0.3, epsilon = 1e-14);
        assert_relative_eq!(p.d3(t), 18.0, epsilon = 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let maps = vec![
            SmoothMap::polynomial(&[0.0, 1.3, -0.3]),
            SmoothMap::fractional_linear(2.0, 0.1, 0.5, 1.0).unwrap(),
            SmoothMap::exp_map(0.7).unwrap(),
            SmoothMap::sine_perturbation(0.4, 2).unwrap(),
            SmoothMap::sin_squared_bump(0.1).unwrap(),
            SmoothMap::random_spline_diffeo(&mut rng, 8, 1.0),
        ];
        for map in &maps {
            for &t in &[0.13, 0.37, 0.71] {
                fd_check(map, t);
            }
        }
    }

    #[test]
    fn spline_interpolates_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SmoothMap::random_spline_diffeo(&mut rng, 10, 2.0);
        assert!(s.check_reparametrisation(1e-14).is_ok());
        let xs = [0.0, 0.5, 1.0];
        let lin = SmoothMap::cubic_spline(&xs, &xs).unwrap();
        assert_relative_eq!(lin.eval(0.3), 0.3, epsilon = 1e-15);
        assert_relative_eq!(lin.d2(0.3), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn periodicity_check() {
        assert!(SmoothMap::sine_perturbation(0.5, 1).unwrap().check_periodic(1e-10).is_ok());
        assert!(SmoothMap::exp_map(0.5).unwrap().check_periodic(1e-10).is_err());
    }

    #[test]
    fn exp_map_log_jump() {
        let f = SmoothMap::exp_map(0.5).unwrap();
        assert_relative_eq!(f.endpoints().log_derivative_jump(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(f.endpoints().f1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fractional_linear_rejects_pole() {
        assert!(SmoothMap::fractional_linear(1.0, 0.0, -2.0, 1.0).is_err());
    }
}
