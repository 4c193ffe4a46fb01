//! α-orbital reweighting of the bridge measure: exact and Monte Carlo
//! partition functions, the boundary-defect identity, the spectral density,
//! the α → π regularisation and the Haar regulariser `D^α`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::bridge::{exp_integrals, fill_bridge, ms_map, GridDiffeo, GridPath, NodalDiffeo};
use crate::error::{guarded_exp, Error, Result};
use crate::mc::{bias_probe, estimate, estimate_vec, BiasProbe, LevyPairs, MCEstimate, McConfig};
use crate::quadrature::{adaptive_gk, GaussLegendre};
use crate::schwarzian::{alpha_over_sin, eight_sin2_half, f_alpha};

pub const DOMAIN_PARTITION: u64 = 0x5041_5254;
pub const DOMAIN_DEFECT: u64 = 0x4445_4645;

/// Largest elliptic `α²` used for Monte Carlo unless overridden.
pub const ELLIPTIC_MC_LIMIT: f64 = PI * PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitalParams {
    pub alpha2: f64,
    pub sigma2: f64,
}

impl OrbitalParams {
    pub fn new(alpha2: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !alpha2.is_finite() {
            return Err(Error::Parameter(format!("alpha2 must be finite, got {alpha2}")));
        }
        Ok(Self { alpha2, sigma2 })
    }

    fn require_finite_mass(&self) -> Result<()> {
        if self.alpha2 >= PI * PI {
            return Err(Error::Parameter(format!(
                "alpha2 = {} is at or beyond the pole of alpha/sin(alpha) at pi^2",
                self.alpha2
            )));
        }
        Ok(())
    }
}

/// `exp{(2α²/σ²) ∫ φ'²}`.
pub fn weight_alpha<D: GridDiffeo + ?Sized>(phi: &D, p: &OrbitalParams) -> Result<f64> {
    weight_from_energy(phi.energy(), p)
}

fn weight_from_energy(energy: f64, p: &OrbitalParams) -> Result<f64> {
    guarded_exp(2.0 * p.alpha2 / p.sigma2 * energy)
}

/// `Z^α / Z⁰ = (α / sin α) e^{2α²/σ²}`, continued to `α² < 0`.
pub fn partition_ratio_exact(p: &OrbitalParams) -> Result<f64> {
    p.require_finite_mass()?;
    Ok(alpha_over_sin(p.alpha2) * guarded_exp(2.0 * p.alpha2 / p.sigma2)?)
}

/// `Z⁰ = 1/√(2πσ²)`.
pub fn z0(sigma2: f64) -> f64 {
    1.0 / (2.0 * PI * sigma2).sqrt()
}

fn check_mc_alpha(p: &OrbitalParams, allow_large_alpha: bool) -> Result<()> {
    p.require_finite_mass()?;
    if p.alpha2 > ELLIPTIC_MC_LIMIT && !allow_large_alpha {
        return Err(Error::Parameter(format!(
            "alpha2 = {} exceeds pi^2/4; weight variance is uncontrolled (override to force)",
            p.alpha2
        )));
    }
    Ok(())
}

fn check_grid(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Parameter(format!("grid needs N >= 2, got {n}")));
    }
    Ok(())
}

/// `E[weight_alpha(P_ξ)]` over normalised bridges `ξ` from `0` to `0`.
pub fn mc_partition_ratio(
    p: &OrbitalParams,
    grid: usize,
    cfg: &McConfig,
    allow_large_alpha: bool,
) -> Result<MCEstimate> {
    check_mc_alpha(p, allow_large_alpha)?;
    check_grid(grid)?;
    let p = *p;
    estimate(
        move |rng| {
            let mut xi = vec![0.0; grid + 1];
            fill_bridge(&mut xi, p.sigma2, 0.0, 1.0, rng);
            let (i, j) = exp_integrals(&xi);
            weight_from_energy(j / (i * i), &p)
        },
        DOMAIN_PARTITION,
        cfg,
    )
}

/// Paired `N` / `2N` estimates of the partition ratio for grid-bias control.
pub fn partition_ratio_bias_probe(p: &OrbitalParams, grid: usize, cfg: &McConfig) -> Result<BiasProbe> {
    check_mc_alpha(p, true)?;
    check_grid(grid)?;
    let p = *p;
    let sampler = LevyPairs {
        sigma2: p.sigma2,
        a: 0.0,
        n: grid,
    };
    bias_probe(
        move |xi: &GridPath| {
            let (i, j) = exp_integrals(xi.values());
            weight_from_energy(j / (i * i), &p)
        },
        &sampler,
        DOMAIN_PARTITION ^ 0xB1A5,
        cfg,
    )
}

/// Test functionals `G` for the boundary-defect identity.
#[derive(Clone)]
pub enum DefectFunctional {
    One,
    /// `φ'(0)`.
    PhiPrime0,
    /// `exp(−∫ φ'²)`.
    ExpNegEnergy,
    Custom(String, Arc<dyn Fn(&NodalDiffeo) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for DefectFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl DefectFunctional {
    pub fn name(&self) -> String {
        match self {
            Self::One => "one".into(),
            Self::PhiPrime0 => "phid0".into(),
            Self::ExpNegEnergy => "expneg".into(),
            Self::Custom(name, _) => name.clone(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Self::One),
            "phid0" => Ok(Self::PhiPrime0),
            "expneg" => Ok(Self::ExpNegEnergy),
            other => Err(Error::Parameter(format!(
                "unknown functional {other:?} (expected one, phid0, expneg)"
            ))),
        }
    }

    pub fn eval<D: GridDiffeo>(&self, phi: &D) -> f64 {
        match self {
            Self::One => 1.0,
            Self::PhiPrime0 => phi.dphi_nodes()[0],
            Self::ExpNegEnergy => (-phi.energy()).exp(),
            Self::Custom(_, f) => f(&NodalDiffeo::from_grid(phi)),
        }
    }
}

/// The two sides of the boundary-defect identity for one functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectSides {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
}

impl DefectSides {
    pub fn z_score(&self) -> f64 {
        self.lhs.z_score(&self.rhs)
    }
}

/// Pinned at `t₀ = 0` (`φ = P_ξ`), for each `G`:
///
/// * `lhs = Z⁰ E[G(f_α ∘ P_ξ) exp{(2α²/σ²) ∫ P_ξ'²}]`
/// * `rhs = (α / sin α) Z⁰ E[G(P_ξ) exp{8 sin²(α/2) / (σ² I)}]`
///
/// with `P_ξ'(0) = 1/I`. Both sides are evaluated on the same bridges.
pub fn defect_identity_check(
    p: &OrbitalParams,
    functionals: &[DefectFunctional],
    grid: usize,
    cfg: &McConfig,
    allow_large_alpha: bool,
) -> Result<Vec<DefectSides>> {
    check_mc_alpha(p, allow_large_alpha)?;
    check_grid(grid)?;
    let f = f_alpha(p.alpha2)?;
    let k = functionals.len();
    let boundary = eight_sin2_half(p.alpha2) / p.sigma2;
    let needs_composed = functionals.iter().any(|g| !matches!(g, DefectFunctional::One));
    let p = *p;
    let est = estimate_vec(
        2 * k,
        |rng, out| {
            let mut xi = vec![0.0; grid + 1];
            fill_bridge(&mut xi, p.sigma2, 0.0, 1.0, rng);
            let phi = ms_map(GridPath::new(xi, 1.0)?, 0.0)?;
            let weight = weight_alpha(&phi, &p)?;
            let defect = guarded_exp(boundary / phi.i_integral())?;
            let composed = needs_composed.then(|| NodalDiffeo::compose(&f, &phi));
            for (i, g) in functionals.iter().enumerate() {
                let g_composed = match (g, &composed) {
                    (DefectFunctional::One, _) => 1.0,
                    (_, Some(c)) => g.eval(c),
                    (_, None) => unreachable!("composition computed for non-constant G"),
                };
                out[i] = g_composed * weight;
                out[k + i] = g.eval(&phi) * defect;
            }
            Ok(())
        },
        DOMAIN_DEFECT,
        cfg,
    )?;
    let z = z0(p.sigma2);
    let pref = alpha_over_sin(p.alpha2) * z;
    Ok((0..k)
        .map(|i| DefectSides {
            lhs: est[i].scaled(z),
            rhs: est[k + i].scaled(pref),
        })
        .collect())
}

/// `(2π/σ²)^{3/2} e^{2π²/σ²}`.
pub fn schwarzian_partition(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok((2.0 * PI / sigma2).powf(1.5) * guarded_exp(2.0 * PI * PI / sigma2)?)
}

/// `4π(π − α)/σ² · Z^α/Z⁰ · Z⁰` at `α = π − δ`, evaluated with
/// `sin α = sin δ` to avoid cancellation.
pub fn regularised_partition(sigma2: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < PI) {
        return Err(Error::Parameter(format!("delta must lie in (0, pi), got {delta}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let alpha = PI - delta;
    let ratio = alpha / delta.sin() * guarded_exp(2.0 * alpha * alpha / sigma2)?;
    Ok(4.0 * PI * delta / sigma2 * ratio * z0(sigma2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub k: i32,
    pub delta: f64,
    pub value: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTable {
    pub sigma2: f64,
    pub target: f64,
    pub rows: Vec<LimitRow>,
    /// Least-squares slope of `log rel_gap` against `log δ`.
    pub order: f64,
}

/// The regularised sequence at `δ = 10^{-k}`.
pub fn regularisation_limit_table(sigma2: f64, ks: &[i32]) -> Result<LimitTable> {
    let target = schwarzian_partition(sigma2)?;
    let rows = ks
        .iter()
        .map(|&k| {
            let delta = 10f64.powi(-k);
            let value = regularised_partition(sigma2, delta)?;
            Ok(LimitRow {
                k,
                delta,
                value,
                rel_gap: (value - target).abs() / target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta.ln(), r.rel_gap.ln())).collect();
    Ok(LimitTable {
        sigma2,
        target,
        rows,
        order: fit_slope(&pts),
    })
}

/// Least-squares slope.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralCheck {
    pub sigma2: f64,
    /// `∫₀^∞ e^{−σ²E} 2 sinh(2π√(2E)) dE`.
    pub energy_form: f64,
    /// `∫₀^∞ e^{−σ²k²/2} sinh(2πk) 2k dk`.
    pub momentum_form: f64,
    pub closed_form: f64,
    pub rel_gap: f64,
    pub form_gap: f64,
    /// Analytic bound on the truncated tails, relative to the closed form.
    pub tail_bound: f64,
}

/// Laplace transform of the density of states against the closed form.
pub fn spectral_density_check(sigma2: f64) -> Result<SpectralCheck> {
    let closed = schwarzian_partition(sigma2)?;
    let two_pi = 2.0 * PI;
    // 2 sinh(x) e^{−y} written without overflow.
    let integrand_e = |e: f64| {
        let x = two_pi * (2.0 * e).sqrt();
        (x - sigma2 * e).exp() - (-x - sigma2 * e).exp()
    };
    let integrand_k = |k: f64| 2.0 * k * (((two_pi * k) - 0.5 * sigma2 * k * k).exp() - ((-two_pi * k) - 0.5 * sigma2 * k * k).exp()) * 0.5;

    // Beyond the peak, concavity of √E bounds the tail by a pure exponential.
    let peak = 2.0 * PI * PI / (sigma2 * sigma2);
    let mut e_max = 4.0 * peak + 10.0;
    let tail = |e: f64| {
        let slope = sigma2 - two_pi / (2.0 * e).sqrt();
        (two_pi * (2.0 * e).sqrt() - sigma2 * e).exp() / slope
    };
    while tail(e_max) > 1e-17 * closed {
        e_max *= 1.5;
    }
    let k_max = (2.0 * e_max).sqrt();
    let tail_e = tail(e_max);
    // Same bound in the momentum variable: E = k²/2 maps one tail onto the other.
    let tail_k = tail_e;

    let e_form = adaptive_gk(integrand_e, 0.0, peak, 0.0, 1e-15, 4000).value
        + adaptive_gk(integrand_e, peak, e_max, 0.0, 1e-15, 4000).value;
    let k_peak = two_pi / sigma2;
    let k_form = adaptive_gk(integrand_k, 0.0, k_peak, 0.0, 1e-15, 4000).value
        + adaptive_gk(integrand_k, k_peak, k_max, 0.0, 1e-15, 4000).value;

    Ok(SpectralCheck {
        sigma2,
        energy_form: e_form,
        momentum_form: k_form,
        closed_form: closed,
        rel_gap: (e_form - closed).abs() / closed,
        form_gap: (e_form - k_form).abs() / k_form.abs(),
        tail_bound: tail_e.max(tail_k) / closed,
    })
}

/// Resolution of the `D^α` quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaarGrid {
    /// Fourier modes kept in `g = φ' ∘ φ⁻¹`.
    pub modes: usize,
    /// Trapezoid nodes in `θ` (rounded up to a power of two above `2 modes`).
    pub theta_nodes: usize,
    /// Gauss–Legendre order per panel in `w = √(u − 1)`.
    pub gl_order: usize,
    /// Target bound on the truncated `u`-tail, relative to the integral.
    pub tail_tol: f64,
}

impl Default for HaarGrid {
    fn default() -> Self {
        Self {
            modes: 256,
            theta_nodes: 1024,
            gl_order: 24,
            tail_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaarResult {
    pub value: f64,
    /// `2π/(π + α)`.
    pub bound: f64,
    /// `(2π/(π + α)) e^{−2(π² − α²)/σ²}`, the value at `φ = id`.
    pub identity_value: f64,
    /// Bound on the truncated `u`-tail relative to the value.
    pub tail_estimate: f64,
    pub accuracy_warning: bool,
}

/// `D^α(φ) = 4π(π − α)/σ² ∫ exp{−(2(π² − α²)/σ²) ∫ (ψ ∘ φ)'²} dν_H(ψ)`.
///
/// Writing `ψ = φ_{z,a}` with `u = (1 + ρ²)/(1 − ρ²)` the Haar measure is
/// `du dθ da` and `∫ (ψ ∘ φ)'² = Σ_k ĝ_k ρ^{|k|} (|k| + u) e^{2πikθ}` where
/// `ĝ_k` are the Fourier coefficients of `g = φ' ∘ φ⁻¹`, computed as
/// `∫ φ'(τ)² e^{−2πikφ(τ)} dτ` on the nodes of `φ`. The `a`-integral is one.
/// The `u`-integral runs in `w = √(u − 1)` on geometric Gauss–Legendre
/// panels up to a cut-off where `E ≥ u min φ'` bounds the tail; `θ` uses the
/// periodic trapezoid rule through one FFT per `w` node.
pub fn haar_regularizer_d<D: GridDiffeo + ?Sized>(
    phi: &D,
    alpha2: f64,
    sigma2: f64,
    grid: &HaarGrid,
) -> Result<HaarResult> {
    if !(0.0..PI * PI).contains(&alpha2) {
        return Err(Error::Parameter(format!(
            "D^alpha needs 0 <= alpha2 < pi^2 (real alpha), got {alpha2}"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let alpha = alpha2.sqrt();
    let c = 2.0 * (PI * PI - alpha2) / sigma2;
    let prefactor = 4.0 * PI * (PI - alpha) / sigma2;

    let nodes = phi.phi_nodes();
    let derivs = phi.dphi_nodes();
    let n = nodes.len() - 1;
    let modes = grid.modes.min(n / 2).max(1);
    let g_min = derivs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(g_min > 0.0) {
        return Err(Error::Positivity("phi' must be positive for D^alpha".into()));
    }

    // ĝ_k = (1/N) Σ_{i<N} φ'_i² e^{−2πikφ_i}.
    let mut ghat = vec![Complex64::new(0.0, 0.0); modes + 1];
    for i in 0..n {
        let w = derivs[i] * derivs[i] / n as f64;
        let step = Complex64::from_polar(1.0, -2.0 * PI * nodes[i]);
        let mut power = Complex64::new(w, 0.0);
        for g in ghat.iter_mut() {
            *g += power;
            power *= step;
        }
    }

    let m = grid.theta_nodes.max(2 * modes + 2).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(m);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    let mut theta_mean = |w: f64| -> f64 {
        let u = 1.0 + w * w;
        let rho = w / (2.0 + w * w).sqrt();
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        let mut rk = 1.0;
        for (k, g) in ghat.iter().enumerate() {
            let coef = rk * (k as f64 + u);
            if k == 0 {
                buf[0] = g * coef;
            } else {
                buf[k] = g * coef;
                buf[m - k] = g.conj() * coef;
            }
            rk *= rho;
        }
        fft.process(&mut buf);
        buf.iter().map(|e| (-c * e.re).exp()).sum::<f64>() / m as f64
    };

    // Tail in u beyond U: ∫_U^∞ e^{−c g_min u} du, relative to the Jensen
    // lower bound ∫_1^∞ e^{−c ĝ_0 u} du on the whole integral.
    let rate = c * g_min;
    let e0 = ghat[0].re;
    let log_lower = -c * e0 - (c * e0).ln();
    let u_max = (((1.0 / (rate * grid.tail_tol)).ln() - log_lower) / rate).max(2.0);
    let tail = ((-rate * u_max) - rate.ln() - log_lower).exp();
    let w_max = (u_max - 1.0).sqrt();

    let mut edges = vec![0.0];
    let mut edge = 0.25f64.min(w_max);
    while edge < w_max {
        edges.push(edge);
        edge *= 2.0;
    }
    edges.push(w_max);

    let rule = GaussLegendre::new(grid.gl_order);
    let integral = rule.integrate_panels(|w| 2.0 * w * theta_mean(w), &edges);

    Ok(HaarResult {
        value: prefactor * integral,
        bound: 2.0 * PI / (PI + alpha),
        identity_value: 2.0 * PI / (PI + alpha) * (-c).exp(),
        tail_estimate: tail,
        accuracy_warning: tail > 1e-8,
    })
}
