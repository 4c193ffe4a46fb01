//! Schwarzian theory with a varying metric `ρ²`: the reparametrisation `h`,
//! the normalisation `C(ρ)`, the partition function `Z(ρ)` and the formal
//! Schwarzian correlators obtained by differentiating `log Z` in `1/ρ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::orbital::schwarzian_partition;
use crate::quadrature::{periodic_trapezoid, spectral_derivative, GaussLegendre};

/// Periodic trapezoid nodes used for all metric integrals.
pub const METRIC_NODES: usize = 1 << 10;

type Profile = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// A smooth positive periodic `ρ` (the metric is `ρ²`) with its derivative.
#[derive(Clone)]
pub struct MetricProfile {
    f: Arc<Profile>,
    sigma2_rho: f64,
}

impl fmt::Debug for MetricProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricProfile")
            .field("sigma2_rho", &self.sigma2_rho)
            .finish_non_exhaustive()
    }
}

impl MetricProfile {
    /// `f(τ) = (ρ(τ), ρ'(τ))`. Positivity and periodicity are checked on the
    /// quadrature nodes.
    pub fn new<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        for j in 0..METRIC_NODES {
            let t = j as f64 / METRIC_NODES as f64;
            let (r, d) = f(t);
            if !(r > 0.0) || !r.is_finite() || !d.is_finite() {
                return Err(Error::Positivity(format!("rho({t}) = {r} is not positive")));
            }
        }
        let (r0, d0) = f(0.0);
        let (r1, d1) = f(1.0);
        if (r0 - r1).abs() > 1e-10 * r0.abs().max(1.0) || (d0 - d1).abs() > 1e-8 * d0.abs().max(1.0) {
            return Err(Error::Periodicity(format!(
                "rho is not periodic: ({r0}, {d0}) at 0 vs ({r1}, {d1}) at 1"
            )));
        }
        let sigma2_rho = periodic_trapezoid(|t| f(t).0, METRIC_NODES);
        Ok(Self {
            f: Arc::new(f),
            sigma2_rho,
        })
    }

    pub fn constant(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::Positivity(format!("constant metric needs sigma2 > 0, got {sigma2}")));
        }
        Self::new(move |_| (sigma2, 0.0))
    }

    /// `ρ = p(τ)` for a trigonometric polynomial `p`.
    pub fn trig(p: TrigPoly) -> Result<Self> {
        Self::new(move |t| {
            let [v, d, _] = p.eval(t);
            (v, d)
        })
    }

    /// `1/ρ = 1/σ² + Σ εᵢ hᵢ`.
    pub fn reciprocal(sigma2: f64, perturbations: &[(f64, TestFunction)]) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::Positivity(format!("sigma2 must be positive, got {sigma2}")));
        }
        let base = 1.0 / sigma2;
        let perturbations = perturbations.to_vec();
        if perturbations.iter().all(|(e, _)| *e == 0.0) {
            return Self::constant(sigma2);
        }
        Self::new(move |t| {
            let (mut w, mut dw) = (base, 0.0);
            for (eps, h) in &perturbations {
                let [v, d, _] = h.eval(t);
                w += eps * v;
                dw += eps * d;
            }
            if w <= 0.0 {
                return (f64::NAN, f64::NAN);
            }
            (1.0 / w, -dw / (w * w))
        })
    }

    /// `ρ(· + shift)`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let f = Arc::clone(&self.f);
        Self::new(move |t| f((t + shift).rem_euclid(1.0)))
    }

    /// `λ ρ`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let f = Arc::clone(&self.f);
        Self::new(move |t| {
            let (r, d) = f(t);
            (lambda * r, lambda * d)
        })
    }

    pub fn rho(&self, t: f64) -> f64 {
        (self.f)(t.rem_euclid(1.0)).0
    }

    pub fn drho(&self, t: f64) -> f64 {
        (self.f)(t.rem_euclid(1.0)).1
    }

    /// The metric `ρ²`.
    pub fn rho2(&self, t: f64) -> f64 {
        let r = self.rho(t);
        r * r
    }

    /// `σ²_ρ = ∫ ρ`.
    pub fn sigma2_rho(&self) -> f64 {
        self.sigma2_rho
    }

    fn node_values(&self) -> Vec<(f64, f64)> {
        (0..METRIC_NODES)
            .map(|j| (self.f)(j as f64 / METRIC_NODES as f64))
            .collect()
    }
}

/// `c₀ + Σ_k a_k cos 2πkτ + b_k sin 2πkτ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPoly {
    pub c0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn constant(c0: f64) -> Self {
        Self {
            c0,
            cos: vec![],
            sin: vec![],
        }
    }

    pub fn cos(k: usize, amplitude: f64) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amplitude;
        Self { c0: 0.0, cos, sin: vec![] }
    }

    pub fn sin(k: usize, amplitude: f64) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = amplitude;
        Self { c0: 0.0, cos: vec![], sin }
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.c0 += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.c0 *= s;
        self.cos.iter_mut().for_each(|a| *a *= s);
        self.sin.iter_mut().for_each(|b| *b *= s);
        self
    }

    /// Value and first two derivatives.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let mut out = [self.c0, 0.0, 0.0];
        for (k, &a) in self.cos.iter().enumerate() {
            let w = 2.0 * PI * (k + 1) as f64;
            let (s, c) = (w * t).sin_cos();
            out[0] += a * c;
            out[1] -= a * w * s;
            out[2] -= a * w * w * c;
        }
        for (k, &b) in self.sin.iter().enumerate() {
            let w = 2.0 * PI * (k + 1) as f64;
            let (s, c) = (w * t).sin_cos();
            out[0] += b * s;
            out[1] += b * w * c;
            out[2] -= b * w * w * s;
        }
        out
    }
}

type TestFn = dyn Fn(f64) -> [f64; 3] + Send + Sync;

/// Smooth periodic test functions for functional derivatives.
#[derive(Clone, Serialize)]
pub enum TestFunction {
    Trig(TrigPoly),
    /// `exp(1 − 1/(1 − x²))` with `x = (τ − center)/width` on the circle.
    Bump { center: f64, width: f64 },
    /// Value and first two derivatives supplied by the caller.
    Custom {
        name: String,
        #[serde(skip)]
        f: Arc<TestFn>,
    },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Trig(p) => f.debug_tuple("Trig").field(p).finish(),
            Self::Bump { center, width } => f
                .debug_struct("Bump")
                .field("center", center)
                .field("width", width)
                .finish(),
            Self::Custom { name, .. } => f.debug_tuple("Custom").field(name).finish(),
        }
    }
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        Self::Trig(TrigPoly::constant(c))
    }

    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> [f64; 3] + Send + Sync + 'static,
    {
        Self::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Value and first two derivatives.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        match self {
            Self::Trig(p) => p.eval(t),
            Self::Bump { center, width } => {
                let d = (t - center + 0.5).rem_euclid(1.0) - 0.5;
                let x = d / width;
                if x.abs() >= 1.0 {
                    return [0.0, 0.0, 0.0];
                }
                let u = 1.0 - x * x;
                let b = (1.0 - 1.0 / u).exp();
                let d1 = b * (-2.0 * x / (u * u));
                let d2 = b * (4.0 * x * x / u.powi(4) - 2.0 / (u * u) - 8.0 * x * x / u.powi(3));
                [b, d1 / width, d2 / (width * width)]
            }
            Self::Custom { f, .. } => f(t.rem_euclid(1.0)),
        }
    }
}

/// `∫ f` over the circle by the periodic trapezoid rule.
fn circle_integral<F: FnMut(f64) -> f64>(f: F) -> f64 {
    periodic_trapezoid(f, METRIC_NODES)
}

/// `h(t) = ∫₀^t ρ / σ²_ρ`.
pub fn reparam_h(rho: &MetricProfile, t: f64) -> f64 {
    let rule = GaussLegendre::new(16);
    let panels = 32;
    let edges: Vec<f64> = (0..=panels).map(|i| t * i as f64 / panels as f64).collect();
    rule.integrate_panels(|s| rho.rho(s), &edges) / rho.sigma2_rho()
}

/// `h'(t) = ρ(t) / σ²_ρ`.
pub fn reparam_h_derivative(rho: &MetricProfile, t: f64) -> f64 {
    rho.rho(t) / rho.sigma2_rho()
}

/// The three evaluations of `log C(ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormaliserRoutes {
    /// `½ ∫ ρ'²/ρ³` with the analytic `ρ'`.
    pub gradient: f64,
    /// `∫ S(h, τ) dτ/ρ(τ)` with `S(h)` from spectral derivatives of `log ρ`.
    pub schwarzian: f64,
    /// `½ ∫ h''²/h'³ / σ²_ρ` with `h''` from a spectral derivative of `h'`.
    pub reparam: f64,
}

impl NormaliserRoutes {
    pub fn max_rel_gap(&self) -> f64 {
        let scale = self.gradient.abs().max(1e-300);
        ((self.schwarzian - self.gradient).abs().max((self.reparam - self.gradient).abs())) / scale
    }
}

pub fn normaliser_routes(rho: &MetricProfile) -> NormaliserRoutes {
    let nodes = rho.node_values();
    let n = nodes.len() as f64;
    let gradient = 0.5 * nodes.iter().map(|(r, d)| d * d / (r * r * r)).sum::<f64>() / n;

    let log_rho: Vec<f64> = nodes.iter().map(|(r, _)| r.ln()).collect();
    let l1 = spectral_derivative(&log_rho);
    let l2 = spectral_derivative(&l1);
    let schwarzian = nodes
        .iter()
        .zip(l1.iter().zip(&l2))
        .map(|((r, _), (a, b))| (b - 0.5 * a * a) / r)
        .sum::<f64>()
        / n;

    let s2 = rho.sigma2_rho();
    let hp: Vec<f64> = nodes.iter().map(|(r, _)| r / s2).collect();
    let hpp = spectral_derivative(&hp);
    let reparam = 0.5 * hp.iter().zip(&hpp).map(|(a, b)| b * b / (a * a * a)).sum::<f64>() / n / s2;

    NormaliserRoutes {
        gradient,
        schwarzian,
        reparam,
    }
}

/// `C(ρ) = exp{½ ∫ ρ'²/ρ³}`.
pub fn normaliser_c(rho: &MetricProfile) -> f64 {
    normaliser_routes(rho).gradient.exp()
}

/// `log Z(ρ) = ½ ∫ ρ'²/ρ³ + log Z(σ²_ρ)`, free of overflow.
pub fn log_partition_z_metric(rho: &MetricProfile) -> f64 {
    normaliser_routes(rho).gradient + log_schwarzian_partition(rho.sigma2_rho())
}

/// `Z(ρ) = C(ρ) Z(σ²_ρ)`.
pub fn partition_z_metric(rho: &MetricProfile) -> Result<f64> {
    let c = normaliser_c(rho);
    let z = schwarzian_partition(rho.sigma2_rho())?;
    let v = c * z;
    if !v.is_finite() {
        return Err(Error::Overflow {
            exponent: log_partition_z_metric(rho),
        });
    }
    Ok(v)
}

/// `log Z(s) = (3/2) log(2π/s) + 2π²/s`.
pub fn log_schwarzian_partition(s: f64) -> f64 {
    1.5 * (2.0 * PI / s).ln() + 2.0 * PI * PI / s
}

/// `m`-th derivative of `log Z(s)`, `m ≥ 1`.
pub fn log_schwarzian_partition_derivative(m: u32, s: f64) -> f64 {
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let fm1 = factorial(m - 1);
    // −(3/2) log s contributes −(3/2)(−1)^{m−1}(m−1)!/s^m.
    let log_part = 1.5 * sign * fm1 / s.powi(m as i32);
    let inv_part = 2.0 * PI * PI * sign * fm1 * m as f64 / s.powi(m as i32 + 1);
    log_part + inv_part
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `⟨S(τ₁); … ; S(τ_k)⟩` at non-coinciding points:
/// `2π² k! σ^{2(k−1)} + (3/2)(k−1)! σ^{2k}`.
pub fn truncated_correlator(k: u32, sigma2: f64) -> f64 {
    assert!(k >= 1, "correlators start at k = 1");
    2.0 * PI * PI * factorial(k) * sigma2.powi(k as i32 - 1) + 1.5 * factorial(k - 1) * sigma2.powi(k as i32)
}

/// Prefactor of the gradient term in the `k`-th variation of `log Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum GradientPrefactor {
    /// `(k−2)!`, the polarisation of `(−1)^k k! σ^{2(k−1)} ½ ∫ h'² h^{k−2}`.
    #[default]
    Polarised,
    /// `k!`, as printed in the source statement.
    Printed,
}

/// The closed-form `k`-th variation of `log Z` at `ρ = σ²` in directions
/// `h₁, …, h_k`:
///
/// `(−1)^k c_k σ^{2(k−1)} Σ_{i<j} ∫ h'ᵢ h'ⱼ Π_{l≠i,j} h_l
///  + (−1)^k σ^{2k} Σ_π σ^{2|π|} [log Z]^{(|π|)}(σ²) Π_B |B|! ∫ Π_{b∈B} h_b`
pub fn variation_formula(sigma2: f64, hs: &[TestFunction], prefactor: GradientPrefactor) -> f64 {
    let k = hs.len();
    assert!(k >= 1, "need at least one direction");
    let samples: Vec<Vec<[f64; 3]>> = hs
        .iter()
        .map(|h| (0..METRIC_NODES).map(|j| h.eval(j as f64 / METRIC_NODES as f64)).collect())
        .collect();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };

    let mut gradient = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            gradient += (0..METRIC_NODES)
                .map(|n| {
                    let others: f64 = (0..k).filter(|&l| l != i && l != j).map(|l| samples[l][n][0]).product();
                    samples[i][n][1] * samples[j][n][1] * others
                })
                .sum::<f64>()
                / METRIC_NODES as f64;
        }
    }
    let c_k = match prefactor {
        GradientPrefactor::Polarised => factorial(k.saturating_sub(2) as u32),
        GradientPrefactor::Printed => factorial(k as u32),
    };
    let gradient_term = sign * c_k * sigma2.powi(k as i32 - 1) * gradient;

    let mut partition_term = 0.0;
    for blocks in set_partitions(k) {
        let m = blocks.len() as u32;
        let mut prod = 1.0;
        for block in &blocks {
            let integral = (0..METRIC_NODES)
                .map(|n| block.iter().map(|&b| samples[b][n][0]).product::<f64>())
                .sum::<f64>()
                / METRIC_NODES as f64;
            prod *= factorial(block.len() as u32) * integral;
        }
        partition_term += sigma2.powi(m as i32) * log_schwarzian_partition_derivative(m, sigma2) * prod;
    }
    gradient_term + sign * sigma2.powi(k as i32) * partition_term
}

/// All set partitions of `{0, …, k−1}`.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![vec![]];
    for element in 0..k {
        let mut next = Vec::new();
        for p in &out {
            for i in 0..p.len() {
                let mut q: Vec<Vec<usize>> = p.clone();
                q[i].push(element);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![element]);
            next.push(q);
        }
        out = next;
    }
    out
}

/// Central finite-difference mixed derivative `∂^k/∂ε₁⋯∂ε_k log Z(ρ_ε)` at
/// `ε = 0`, where `1/ρ_ε = 1/σ² + Σ εᵢ hᵢ`.
pub fn variation_finite_difference(sigma2: f64, hs: &[TestFunction], step: f64) -> Result<f64> {
    let k = hs.len();
    if k == 0 || k > 4 {
        return Err(Error::Parameter(format!("finite differences support 1..=4 directions, got {k}")));
    }
    let mut total = 0.0;
    for mask in 0..(1u32 << k) {
        let mut sign = 1.0;
        let perturbations: Vec<(f64, TestFunction)> = hs
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let plus = mask & (1 << i) != 0;
                if !plus {
                    sign = -sign;
                }
                (if plus { step } else { -step }, h.clone())
            })
            .collect();
        let rho = MetricProfile::reciprocal(sigma2, &perturbations)?;
        total += sign * log_partition_z_metric(&rho);
    }
    Ok(total / (2.0 * step).powi(k as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationCheck {
    pub k: usize,
    pub sigma2: f64,
    pub step: f64,
    pub numeric: f64,
    pub formula: f64,
    /// `|numeric − formula| / max(|formula|, 1)`.
    pub rel_gap: f64,
}

/// Finite differences of `log Z(ρ)` against the closed-form variation.
pub fn functional_derivative_check(
    sigma2: f64,
    hs: &[TestFunction],
    step: f64,
    prefactor: GradientPrefactor,
) -> Result<VariationCheck> {
    let numeric = variation_finite_difference(sigma2, hs, step)?;
    let formula = variation_formula(sigma2, hs, prefactor);
    Ok(VariationCheck {
        k: hs.len(),
        sigma2,
        step,
        numeric,
        formula,
        rel_gap: (numeric - formula).abs() / formula.abs().max(1.0),
    })
}

/// One-point function `⟨S⟩ = 2π² + (3/2)σ²`.
pub fn one_point(sigma2: f64) -> f64 {
    -sigma2 * sigma2 * log_schwarzian_partition_derivative(1, sigma2)
}

/// Pairing of `⟨S(0) S(τ)⟩ = [4π⁴ + 10π²σ² + 15σ⁴/4] − 2σ²[2π² + 3σ²/2] δ(τ) − σ² δ''(τ)`
/// with `g₁ ⊗ g₂`, the distributions paired exactly.
pub fn two_point_correlator_smeared(g1: &TestFunction, g2: &TestFunction, sigma2: f64) -> f64 {
    let pi2 = PI * PI;
    let constant = 4.0 * pi2 * pi2 + 10.0 * pi2 * sigma2 + 3.75 * sigma2 * sigma2;
    let delta = 2.0 * sigma2 * (2.0 * pi2 + 1.5 * sigma2);
    let int1 = circle_integral(|t| g1.eval(t)[0]);
    let int2 = circle_integral(|t| g2.eval(t)[0]);
    let prod = circle_integral(|t| g1.eval(t)[0] * g2.eval(t)[0]);
    let curv = circle_integral(|t| g1.eval(t)[0] * g2.eval(t)[2]);
    constant * int1 * int2 - delta * prod - sigma2 * curv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wavy() -> MetricProfile {
        MetricProfile::trig(TrigPoly::cos(1, 0.3).plus_constant(1.0)).unwrap()
    }

    #[test]
    fn constant_metric() {
        let rho = MetricProfile::constant(2.0).unwrap();
        assert_eq!(normaliser_c(&rho), 1.0);
        assert_relative_eq!(reparam_h(&rho, 0.3), 0.3, max_relative = 1e-14);
        assert_eq!(partition_z_metric(&rho).unwrap(), schwarzian_partition(2.0).unwrap());
    }

    #[test]
    fn h_is_a_reparametrisation() {
        let sigma2 = 1.7;
        let shape = MetricProfile::trig(TrigPoly::sin(1, 0.5).plus_constant(1.0)).unwrap();
        let rho = shape.scaled(sigma2 / shape.sigma2_rho()).unwrap();
        assert_relative_eq!(rho.sigma2_rho(), sigma2, max_relative = 1e-14);
        assert_relative_eq!(reparam_h(&rho, 1.0), 1.0, epsilon = 1e-12);
        assert_eq!(reparam_h(&rho, 0.0), 0.0);
        let d = 1e-5;
        for &t in &[0.1, 0.45, 0.8] {
            let fd = (reparam_h(&rho, t + d) - reparam_h(&rho, t - d)) / (2.0 * d);
            assert_relative_eq!(fd, reparam_h_derivative(&rho, t), max_relative = 1e-8);
        }
    }

    #[test]
    fn three_routes_agree() {
        let r = normaliser_routes(&wavy());
        assert!(r.max_rel_gap() < 1e-6, "{r:?}");
        assert!(r.gradient > 0.0);
    }

    #[test]
    fn normaliser_scaling() {
        let rho = wavy();
        let base = normaliser_routes(&rho).gradient;
        for &lambda in &[0.5, 3.0] {
            let scaled = normaliser_c(&rho.scaled(lambda).unwrap());
            assert_relative_eq!(scaled, (base / lambda).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rotation_invariance() {
        let rho = MetricProfile::trig(TrigPoly::cos(1, 0.2).plus_constant(1.0).scaled(2.0 * PI)).unwrap();
        let z = partition_z_metric(&rho).unwrap();
        let z_shift = partition_z_metric(&rho.shifted(0.237).unwrap()).unwrap();
        assert_relative_eq!(z, z_shift, max_relative = 1e-10);
        assert_relative_eq!(z, normaliser_c(&rho) * schwarzian_partition(rho.sigma2_rho()).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn nonpositive_metric_rejected() {
        assert!(matches!(
            MetricProfile::trig(TrigPoly::cos(1, 2.0).plus_constant(1.0)),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn truncated_values() {
        assert_relative_eq!(truncated_correlator(1, 1.0), 2.0 * PI * PI + 1.5, max_relative = 1e-15);
        assert_relative_eq!(truncated_correlator(1, 2.0), 2.0 * PI * PI + 3.0, max_relative = 1e-15);
        assert_relative_eq!(truncated_correlator(2, 1.0), 4.0 * PI * PI + 1.5, max_relative = 1e-15);
        for k in 1..6u32 {
            for &s in &[0.5f64, 1.0, 3.0] {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let via_log = sign * s.powi(2 * k as i32) * log_schwarzian_partition_derivative(k, s);
                assert_relative_eq!(via_log, truncated_correlator(k, s), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let s = 1.3;
        let h = 1e-4;
        let fd1 = (log_schwarzian_partition(s + h) - log_schwarzian_partition(s - h)) / (2.0 * h);
        assert_relative_eq!(fd1, log_schwarzian_partition_derivative(1, s), max_relative = 1e-7);
        let fd2 = (log_schwarzian_partition_derivative(1, s + h) - log_schwarzian_partition_derivative(1, s - h)) / (2.0 * h);
        assert_relative_eq!(fd2, log_schwarzian_partition_derivative(2, s), max_relative = 1e-7);
    }

    #[test]
    fn partitions_are_counted_by_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (k, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(k).len(), b);
        }
    }

    #[test]
    fn one_point_constant_direction() {
        let c = functional_derivative_check(1.0, &[TestFunction::constant(1.0)], 1e-4, GradientPrefactor::Polarised).unwrap();
        assert_relative_eq!(c.formula, 2.0 * PI * PI + 1.5, max_relative = 1e-14);
        assert!(c.rel_gap < 1e-4, "{c:?}");
        assert_relative_eq!(one_point(1.0), 2.0 * PI * PI + 1.5, max_relative = 1e-15);
    }

    #[test]
    fn two_point_gradient_prefactor() {
        let hs = [
            TestFunction::Trig(TrigPoly::cos(1, 1.0)),
            TestFunction::Trig(TrigPoly::cos(1, 1.0)),
        ];
        let good = functional_derivative_check(1.0, &hs, 1e-4, GradientPrefactor::Polarised).unwrap();
        let printed = functional_derivative_check(1.0, &hs, 1e-4, GradientPrefactor::Printed).unwrap();
        assert!(good.rel_gap < 1e-4, "{good:?}");
        assert!(printed.rel_gap > 1e-2, "{printed:?}");
    }

    #[test]
    fn smeared_two_point_matches_moments() {
        let sigma2 = 1.0;
        let g1 = TestFunction::constant(1.0);
        let g2 = TestFunction::constant(1.0);
        let pi2 = PI * PI;
        assert_relative_eq!(
            two_point_correlator_smeared(&g1, &g2, sigma2),
            4.0 * pi2 * pi2 + 6.0 * pi2 * sigma2 + 0.75 * sigma2 * sigma2,
            max_relative = 1e-13
        );
        let g2 = TestFunction::Trig(TrigPoly::cos(1, 1.0));
        let pairing = two_point_correlator_smeared(&TestFunction::Trig(TrigPoly::cos(1, 1.0)), &g2, sigma2);
        let expected = -2.0 * sigma2 * (2.0 * pi2 + 1.5 * sigma2) * 0.5 + sigma2 * 4.0 * pi2 * 0.5;
        assert_relative_eq!(pairing, expected, max_relative = 1e-12);
    }

    #[test]
    fn bump_derivatives() {
        let b = TestFunction::Bump { center: 0.3, width: 0.2 };
        let d = 1e-6;
        for &t in &[0.2, 0.33, 0.45] {
            let v = b.eval(t);
            let fd1 = (b.eval(t + d)[0] - b.eval(t - d)[0]) / (2.0 * d);
            let fd2 = (b.eval(t + d)[1] - b.eval(t - d)[1]) / (2.0 * d);
            assert_relative_eq!(v[1], fd1, max_relative = 1e-6, epsilon = 1e-8);
            assert_relative_eq!(v[2], fd2, max_relative = 1e-6, epsilon = 1e-6);
        }
        assert_eq!(b.eval(0.75), [0.0, 0.0, 0.0]);
    }
}
