//! Brownian bridges on uniform grids and the Malliavin–Shavgulidze map
//! `ξ ↦ φ = Θ + ∫₀^· e^ξ / ∫₀¹ e^ξ`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::circle::CircleJet;
use crate::error::{Error, Result};
use crate::quadrature::trapezoid;

/// A path on the uniform grid `t_i = i T / N`, `i = 0..=N`, with `ξ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    values: Vec<f64>,
    horizon: f64,
}

impl GridPath {
    pub fn new(values: Vec<f64>, horizon: f64) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Parameter(format!(
                "grid path needs N >= 2, got {} values",
                values.len()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        if values[0] != 0.0 {
            return Err(Error::Parameter(format!("path must start at 0, got {}", values[0])));
        }
        Ok(Self { values, horizon })
    }

    /// Samples `f` at the nodes of `[0, T]`, shifted so that the path starts
    /// at zero.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, n: usize, horizon: f64) -> Result<Self> {
        let f0 = f(0.0);
        let values = (0..=n)
            .map(|i| f(i as f64 * horizon / n as f64) - f0)
            .collect();
        Self::new(values, horizon)
    }

    pub fn zeros(n: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0; n + 1], horizon)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of grid intervals.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n() as f64
    }

    /// The endpoint value `ξ(T)`.
    pub fn endpoint(&self) -> f64 {
        self.values[self.n()]
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    /// Linear interpolation between nodes.
    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.values, t / self.horizon)
    }

    /// `t,xi` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,xi\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.time(i), v));
        }
        out
    }
}

fn interpolate(values: &[f64], u: f64) -> f64 {
    let n = values.len() - 1;
    let x = (u * n as f64).clamp(0.0, n as f64);
    let i = (x.floor() as usize).min(n - 1);
    let w = x - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

fn check_bridge_params(sigma2: f64, horizon: f64, n: usize) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("grid needs N >= 2, got {n}")));
    }
    Ok(())
}

/// Overwrites `out` (length `N + 1`) with an exact bridge sample from `0` to
/// `a` on `[0, T]`: a Brownian motion from Gaussian increments, corrected by
/// `W(t) − (t/T)(W(T) − a)`.
pub fn fill_bridge<R: Rng + ?Sized>(out: &mut [f64], sigma2: f64, a: f64, horizon: f64, rng: &mut R) {
    let n = out.len() - 1;
    let scale = (sigma2 * horizon / n as f64).sqrt();
    out[0] = 0.0;
    let mut w = 0.0;
    for slot in out.iter_mut().skip(1) {
        let z: f64 = rng.sample(StandardNormal);
        w += scale * z;
        *slot = w;
    }
    let drift = w - a;
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        *slot -= drift * (i as f64 / n as f64);
    }
    out[n] = a;
}

/// One normalised bridge sample.
pub fn sample_bridge<R: Rng + ?Sized>(
    sigma2: f64,
    a: f64,
    horizon: f64,
    n: usize,
    rng: &mut R,
) -> Result<GridPath> {
    check_bridge_params(sigma2, horizon, n)?;
    if !a.is_finite() {
        return Err(Error::Parameter(format!("bridge endpoint must be finite, got {a}")));
    }
    let mut values = vec![0.0; n + 1];
    fill_bridge(&mut values, sigma2, a, horizon, rng);
    Ok(GridPath { values, horizon })
}

/// Refines a bridge sample from `N` to `2N` intervals by sampling each
/// midpoint from its conditional law given the two neighbours (mean the
/// average, variance `σ² h / 4`).
pub fn levy_refine<R: Rng + ?Sized>(coarse: &[f64], fine: &mut [f64], sigma2: f64, horizon: f64, rng: &mut R) {
    let n = coarse.len() - 1;
    debug_assert_eq!(fine.len(), 2 * n + 1);
    let sd = (sigma2 * horizon / n as f64 / 4.0).sqrt();
    for i in 0..n {
        fine[2 * i] = coarse[i];
        let z: f64 = rng.sample(StandardNormal);
        fine[2 * i + 1] = 0.5 * (coarse[i] + coarse[i + 1]) + sd * z;
    }
    fine[2 * n] = coarse[n];
}

/// Total mass `exp{−a²/(2Tσ²)} / √(2πTσ²)` of the unnormalised bridge.
pub fn bridge_mass(sigma2: f64, a: f64, horizon: f64) -> f64 {
    let v = horizon * sigma2;
    (-a * a / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// `(∫₀¹ e^ξ, ∫₀¹ e^{2ξ})` by the trapezoid rule; the cheap path for
/// functionals that only need the energy and `φ'(0) = 1/I`.
pub fn exp_integrals(xi: &[f64]) -> (f64, f64) {
    let n = xi.len() - 1;
    let h = 1.0 / n as f64;
    let mut i_int = 0.0;
    let mut j_int = 0.0;
    for (k, &x) in xi.iter().enumerate() {
        let e = x.exp();
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        i_int += w * e;
        j_int += w * e * e;
    }
    (h * i_int, h * j_int)
}

/// Nodal data of a circle map on the grid `t_i = i/N`: lift values and first
/// derivatives.
pub trait GridDiffeo {
    fn phi_nodes(&self) -> &[f64];
    fn dphi_nodes(&self) -> &[f64];

    fn n(&self) -> usize {
        self.phi_nodes().len() - 1
    }

    fn step(&self) -> f64 {
        1.0 / self.n() as f64
    }

    /// `∫ φ'²` by the trapezoid rule.
    fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.dphi_nodes().iter().map(|d| d * d).collect();
        trapezoid(&sq, self.step())
    }
}

/// `φ = Θ + P_ξ` for a path `ξ` on `[0, 1]`.
#[derive(Debug, Clone, Serialize)]
pub struct CircleDiffeo {
    theta: f64,
    xi: GridPath,
    i_int: f64,
    j_int: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl CircleDiffeo {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn xi(&self) -> &GridPath {
        &self.xi
    }

    /// `I = ∫₀¹ e^ξ`.
    pub fn i_integral(&self) -> f64 {
        self.i_int
    }

    /// `J = ∫₀¹ e^{2ξ}`.
    pub fn j_integral(&self) -> f64 {
        self.j_int
    }

    /// `J / I²`, at least one by Cauchy–Schwarz.
    pub fn energy(&self) -> f64 {
        self.j_int / (self.i_int * self.i_int)
    }

    /// `P_ξ` at the nodes, without the zero mode.
    pub fn p_at_node(&self, i: usize) -> f64 {
        self.phi[i] - self.theta
    }

    /// `φ(t)` on the lift, by linear interpolation of the cumulative integral.
    pub fn phi(&self, t: f64) -> f64 {
        let n = t.floor();
        n + interpolate(&self.phi, t - n)
    }

    /// `φ(t) mod 1`.
    pub fn phi_mod(&self, t: f64) -> f64 {
        self.phi(t).rem_euclid(1.0)
    }

    /// `e^{ξ(t)}/I` with `ξ` interpolated linearly.
    pub fn dphi(&self, t: f64) -> f64 {
        let u = t - t.floor();
        interpolate(&self.xi.values, u).exp() / self.i_int
    }
}

impl GridDiffeo for CircleDiffeo {
    fn phi_nodes(&self) -> &[f64] {
        &self.phi
    }

    fn dphi_nodes(&self) -> &[f64] {
        &self.dphi
    }

    fn energy(&self) -> f64 {
        CircleDiffeo::energy(self)
    }
}

/// The Malliavin–Shavgulidze map with trapezoid cumulative integrals.
pub fn ms_map(xi: GridPath, theta: f64) -> Result<CircleDiffeo> {
    if (xi.horizon - 1.0).abs() > 1e-15 {
        return Err(Error::Parameter(format!(
            "the MS map needs a path on [0, 1], got horizon {}",
            xi.horizon
        )));
    }
    let n = xi.n();
    let h = 1.0 / n as f64;
    let e: Vec<f64> = xi.values.iter().map(|v| v.exp()).collect();
    let mut cumulative = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut j_acc = 0.0;
    cumulative.push(0.0);
    for w in e.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        j_acc += 0.5 * h * (w[0] * w[0] + w[1] * w[1]);
        cumulative.push(acc);
    }
    let i_int = acc;
    let phi = cumulative.iter().map(|c| theta + c / i_int).collect();
    let dphi = e.iter().map(|v| v / i_int).collect();
    Ok(CircleDiffeo {
        theta,
        xi,
        i_int,
        j_int: j_acc,
        phi,
        dphi,
    })
}

/// `ξ = log φ' − log φ'(0)` at the nodes.
pub fn ms_inverse<D: GridDiffeo + ?Sized>(phi: &D) -> Result<GridPath> {
    let d = phi.dphi_nodes();
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveDerivative {
            t: i as f64 / (d.len() - 1) as f64,
            value: v,
        });
    }
    let base = d[0].ln();
    let values = d.iter().map(|v| v.ln() - base).collect();
    GridPath::new(values, 1.0)
}

/// A circle map known only through nodal values and first derivatives.
/// Composition applies the chain rule node by node, so nodal identities
/// derived from the chain rule hold to rounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalDiffeo {
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl NodalDiffeo {
    pub fn new(phi: Vec<f64>, dphi: Vec<f64>) -> Result<Self> {
        if phi.len() != dphi.len() || phi.len() < 3 {
            return Err(Error::Parameter("nodal diffeo needs matching arrays of length >= 3".into()));
        }
        Ok(Self { phi, dphi })
    }

    /// Samples a circle map at `t_i = i/N`.
    pub fn sample<M: CircleJet + ?Sized>(map: &M, n: usize) -> Self {
        let (phi, dphi) = (0..=n)
            .map(|i| {
                let j = map.jet(i as f64 / n as f64);
                (j[0], j[1])
            })
            .unzip();
        Self { phi, dphi }
    }

    pub fn from_grid<D: GridDiffeo + ?Sized>(d: &D) -> Self {
        Self {
            phi: d.phi_nodes().to_vec(),
            dphi: d.dphi_nodes().to_vec(),
        }
    }

    /// `f ∘ φ`.
    pub fn compose<M: CircleJet + ?Sized, D: GridDiffeo + ?Sized>(f: &M, phi: &D) -> Self {
        let (values, derivs) = phi
            .phi_nodes()
            .iter()
            .zip(phi.dphi_nodes())
            .map(|(&x, &d)| {
                let j = f.jet(x);
                (j[0], j[1] * d)
            })
            .unzip();
        Self { phi: values, dphi: derivs }
    }
}

impl GridDiffeo for NodalDiffeo {
    fn phi_nodes(&self) -> &[f64] {
        &self.phi
    }

    fn dphi_nodes(&self) -> &[f64] {
        &self.dphi
    }
}
