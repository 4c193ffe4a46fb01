//! Radon–Nikodym densities for post-composition `φ ↦ f ∘ φ` and a two-sided
//! Monte Carlo check of the bridge-level density.

use serde::Serialize;

use crate::bridge::{bridge_mass, fill_bridge, ms_map, GridDiffeo, GridPath, NodalDiffeo};
use crate::circle::PeriodicJet;
use crate::error::{guarded_exp, Error, Result};
use crate::mc::{estimate, MCEstimate, McConfig};
use crate::metric::MetricProfile;
use crate::orbital::OrbitalParams;
use crate::quadrature::trapezoid;
use crate::schwarzian::schwarzian_of_jet;
use crate::smooth::{Jet, SmoothMap};

/// Both sides draw from the same streams, so for `b = 0` they are coupled
/// and the identity map gives equal sides exactly.
pub const DOMAIN_PUSH: u64 = 0x5055_5348;

/// Tolerance on endpoint derivative data for maps required to be periodic.
pub const PERIODIC_TOL: f64 = 1e-10;
/// Tolerance on `φ(t₀) ∈ ℤ` for pinned diffeomorphisms.
pub const PIN_TOL: f64 = 1e-9;

/// Where `f'` is evaluated in the `2α²(f'² − 1)` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FPrimeArgument {
    /// `f'(φ(τ))`, consistent with the chain rule.
    #[default]
    AtPhi,
    /// `f'(τ)`, the literal reading. Breaks the cocycle identity.
    AtTau,
}

#[inline]
fn bulk_integrand(jet: Jet, f_prime: f64, alpha2: f64, dphi: f64) -> f64 {
    (schwarzian_of_jet(jet) + 2.0 * alpha2 * (f_prime * f_prime - 1.0)) * dphi * dphi
}

fn check_positive(jet: Jet, x: f64) -> Result<()> {
    if !(jet[1] > 0.0) {
        return Err(Error::NonPositiveDerivative { t: x, value: jet[1] });
    }
    Ok(())
}

/// `∫ [S_f(φ) + 2α²(f'(·)² − 1)] φ'² / ρ` by the trapezoid rule, with `ρ` per node.
fn periodic_bulk<F, D, R>(f: &F, phi: &D, alpha2: f64, reading: FPrimeArgument, rho: R) -> Result<f64>
where
    F: PeriodicJet + ?Sized,
    D: GridDiffeo + ?Sized,
    R: Fn(f64) -> f64,
{
    let n = phi.n();
    let values: Result<Vec<f64>> = phi
        .phi_nodes()
        .iter()
        .zip(phi.dphi_nodes())
        .enumerate()
        .map(|(i, (&x, &d))| {
            let tau = i as f64 / n as f64;
            let jet = f.jet(x);
            check_positive(jet, x)?;
            let f_prime = match reading {
                FPrimeArgument::AtPhi => jet[1],
                FPrimeArgument::AtTau => f.jet(tau)[1],
            };
            Ok(bulk_integrand(jet, f_prime, alpha2, d) / rho(tau))
        })
        .collect();
    Ok(trapezoid(&values?, phi.step()))
}

/// `exp{(1/σ²) ∫ [S_f(φ) + 2α²(f'(φ)² − 1)] φ'²}`.
pub fn rn_unquotiented<F, D>(f: &F, phi: &D, p: &OrbitalParams, reading: FPrimeArgument) -> Result<f64>
where
    F: PeriodicJet + ?Sized,
    D: GridDiffeo + ?Sized,
{
    f.check_periodic(PERIODIC_TOL)?;
    let sigma2 = p.sigma2;
    guarded_exp(periodic_bulk(f, phi, p.alpha2, reading, |_| sigma2)?)
}

/// `exp{∫ [S(tan(πf − π/2), φ) − 2π²] φ'² / ρ}`; for constant `ρ ≡ σ²` this is
/// the same floating-point computation as [`rn_unquotiented`] at `α² = π²`.
pub fn rn_metric<F, D>(f: &F, phi: &D, rho: &MetricProfile) -> Result<f64>
where
    F: PeriodicJet + ?Sized,
    D: GridDiffeo + ?Sized,
{
    f.check_periodic(PERIODIC_TOL)?;
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    guarded_exp(periodic_bulk(f, phi, pi2, FPrimeArgument::AtPhi, |t| rho.rho(t))?)
}

fn check_endpoints(f: &SmoothMap) -> Result<()> {
    let e = f.endpoints();
    if e.f0.abs() > PERIODIC_TOL || (e.f1 - 1.0).abs() > PERIODIC_TOL {
        return Err(Error::Parameter(format!(
            "map must fix 0 and 1, got f(0) = {}, f(1) = {}",
            e.f0, e.f1
        )));
    }
    if !(e.d1_0 > 0.0) || !(e.d1_1 > 0.0) {
        return Err(Error::NonPositiveDerivative {
            t: if e.d1_0 > 0.0 { 1.0 } else { 0.0 },
            value: e.d1_0.min(e.d1_1),
        });
    }
    Ok(())
}

/// `f''(0)/f'(0) − f''(1)/f'(1)`.
fn boundary_defect(f: &SmoothMap) -> f64 {
    let e = f.endpoints();
    e.d2_0 / e.d1_0 - e.d2_1 / e.d1_1
}

/// Density of `f ∘ φ` for `φ` pinned at the grid node `t₀` (`φ(t₀) ∈ ℤ`):
///
/// `1/√(f'(0)f'(1)) exp{(1/σ²)[f''(0)/f'(0) − f''(1)/f'(1)] φ'(t₀)
///  + (1/σ²) ∫_{𝕋∖{t₀}} [S_f(φ) + 2α²(f'(φ)² − 1)] φ'²}`.
///
/// `f` is evaluated on `[0, 1]` only, so the jump of `f''` at the pin is
/// kept in the isolated boundary term; at the pin node the bulk integrand is
/// the mean of its one-sided limits.
pub fn rn_pinned<D: GridDiffeo + ?Sized>(f: &SmoothMap, phi: &D, t0: f64, p: &OrbitalParams) -> Result<f64> {
    check_endpoints(f)?;
    let e = f.endpoints();
    if (e.d1_0 - e.d1_1).abs() > PERIODIC_TOL * e.d1_0.max(1.0) {
        return Err(Error::Periodicity(format!(
            "pinned density needs f'(0) = f'(1), got {} and {}",
            e.d1_0, e.d1_1
        )));
    }
    let n = phi.n();
    let i0 = (t0.rem_euclid(1.0) * n as f64).round() as usize % n;
    if (i0 as f64 / n as f64 - t0.rem_euclid(1.0)).abs() > 1e-12 {
        return Err(Error::Parameter(format!("t0 = {t0} is not a node of the grid with N = {n}")));
    }
    let nodes = phi.phi_nodes();
    let dphi = phi.dphi_nodes();
    let m = nodes[i0].round();
    if (nodes[i0] - m).abs() > PIN_TOL {
        return Err(Error::PinMismatch { t0, value: nodes[i0] });
    }
    let alpha2 = p.alpha2;
    let at = |u: f64, d: f64| -> Result<f64> {
        let jet = f.jet(u.clamp(0.0, 1.0));
        check_positive(jet, u)?;
        Ok(bulk_integrand(jet, jet[1], alpha2, d))
    };
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let v = if i == i0 || (i0 == 0 && i == n) {
            if i0 == 0 {
                at(if i == 0 { 0.0 } else { 1.0 }, dphi[i])?
            } else {
                0.5 * (at(0.0, dphi[i])? + at(1.0, dphi[i])?)
            }
        } else if i > i0 {
            at(nodes[i] - m, dphi[i])?
        } else {
            at(nodes[i] - m + 1.0, dphi[i])?
        };
        values.push(v);
    }
    let bulk = trapezoid(&values, phi.step());
    let exponent = (boundary_defect(f) * dphi[i0] + bulk) / p.sigma2;
    Ok(guarded_exp(exponent)? / (e.d1_0 * e.d1_1).sqrt())
}

/// Bridge-level density for a path `P` on `[0, 1]` given at the nodes, and
/// the endpoint shift `b = log f'(1) − log f'(0)`:
///
/// `1/√(f'(0)f'(1)) exp{(1/σ²)[f''(0)/f'(0) P'(0) − f''(1)/f'(1) P'(1)]
///  + (1/σ²) ∫₀¹ S_f(P) P'²}`.
pub fn rn_bridge_nodal<D: GridDiffeo + ?Sized>(f: &SmoothMap, path: &D, sigma2: f64) -> Result<(f64, f64)> {
    check_endpoints(f)?;
    let e = f.endpoints();
    let nodes = path.phi_nodes();
    let dp = path.dphi_nodes();
    let values: Result<Vec<f64>> = nodes
        .iter()
        .zip(dp)
        .map(|(&x, &d)| {
            let jet = f.jet(x.clamp(0.0, 1.0));
            check_positive(jet, x)?;
            Ok(schwarzian_of_jet(jet) * d * d)
        })
        .collect();
    let bulk = trapezoid(&values?, path.step());
    let n = path.n();
    let boundary = e.d2_0 / e.d1_0 * dp[0] - e.d2_1 / e.d1_1 * dp[n];
    let density = guarded_exp((boundary + bulk) / sigma2)? / (e.d1_0 * e.d1_1).sqrt();
    Ok((density, e.log_derivative_jump()))
}

/// [`rn_bridge_nodal`] at `P_ξ`.
pub fn rn_bridge(f: &SmoothMap, xi: &GridPath, sigma2: f64) -> Result<(f64, f64)> {
    let p = ms_map(xi.clone(), 0.0)?;
    rn_bridge_nodal(f, &p, sigma2)
}

/// Inverse of an increasing map of `[0, 1]` onto itself: a table of
/// bisection roots at uniform `y`, cubic Hermite interpolation with slopes
/// `1/f'`, then one Newton step kept inside the bracket.
#[derive(Debug, Clone)]
pub struct MonotoneInverse {
    f: SmoothMap,
    xs: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneInverse {
    pub const TABLE: usize = 1024;
    pub const TOL: f64 = 1e-12;

    pub fn new(f: &SmoothMap) -> Result<Self> {
        let e = f.endpoints();
        if e.f0.abs() > Self::TOL || (e.f1 - 1.0).abs() > Self::TOL {
            return Err(Error::Inversion(format!(
                "map must send [0, 1] onto itself, got f(0) = {}, f(1) = {}",
                e.f0, e.f1
            )));
        }
        let m = Self::TABLE;
        let probe = 8 * m;
        let mut prev = f.eval(0.0);
        for i in 1..=probe {
            let t = i as f64 / probe as f64;
            let v = f.eval(t);
            let d = f.d1(t);
            if !(v > prev) || !(d > 0.0) {
                return Err(Error::Inversion(format!(
                    "map is not strictly increasing near t = {t} (f = {v}, f' = {d})"
                )));
            }
            prev = v;
        }
        let mut xs = Vec::with_capacity(m + 1);
        xs.push(0.0);
        for j in 1..m {
            let y = j as f64 / m as f64;
            let (mut lo, mut hi) = (*xs.last().unwrap(), 1.0);
            while hi - lo > 1e-15 {
                let mid = 0.5 * (lo + hi);
                if f.eval(mid) < y {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            xs.push(0.5 * (lo + hi));
        }
        xs.push(1.0);
        let slopes = xs.iter().map(|&x| 1.0 / f.d1(x)).collect();
        Ok(Self {
            f: f.clone(),
            xs,
            slopes,
        })
    }

    pub fn apply(&self, y: f64) -> Result<f64> {
        if !(-Self::TOL..=1.0 + Self::TOL).contains(&y) {
            return Err(Error::Inversion(format!("{y} is outside [0, 1]")));
        }
        let y = y.clamp(0.0, 1.0);
        let m = Self::TABLE;
        let j = ((y * m as f64) as usize).min(m - 1);
        let h = 1.0 / m as f64;
        let s = (y - j as f64 * h) / h;
        let (x0, x1) = (self.xs[j], self.xs[j + 1]);
        let (m0, m1) = (self.slopes[j] * h, self.slopes[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let mut x = (2.0 * s3 - 3.0 * s2 + 1.0) * x0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * x1
            + (s3 - s2) * m1;
        let jet = self.f.jet(x);
        x = (x - (jet[0] - y) / jet[1]).clamp(x0, x1);
        let residual = self.f.eval(x) - y;
        if residual.abs() > Self::TOL {
            return Err(Error::Inversion(format!("residual {residual} at y = {y}")));
        }
        Ok(x)
    }
}

/// The path `η` with `P_η = f⁻¹ ∘ P_ξ`:
/// `ηᵢ = ξᵢ − log f'(f⁻¹(P_ξ(tᵢ))) + log f'(0)`.
pub fn pullback_path(inverse: &MonotoneInverse, xi: &GridPath) -> Result<GridPath> {
    let p = ms_map(xi.clone(), 0.0)?;
    let f = &inverse.f;
    let base = f.endpoints().d1_0.ln();
    let values: Result<Vec<f64>> = xi
        .values()
        .iter()
        .zip(p.phi_nodes())
        .map(|(&v, &y)| Ok(v - f.d1(inverse.apply(y)?).ln() + base))
        .collect();
    GridPath::new(values?, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PushforwardSides {
    /// `bridge_mass(σ², 0, 1) E_{a=0}[F(η)]`.
    pub side_a: MCEstimate,
    /// `bridge_mass(σ², −b, 1) E_{a=−b}[F(ξ) density(ξ)]`.
    pub side_b: MCEstimate,
    pub b: f64,
}

impl PushforwardSides {
    pub fn z_score(&self) -> f64 {
        self.side_a.z_score(&self.side_b)
    }
}

/// Two-sided importance-sampling check of the bridge density. Side A pushes
/// standard bridges forward, side B reweights bridges ending at `−b`.
pub fn verify_pushforward<F>(f: &SmoothMap, functional: F, sigma2: f64, n: usize, cfg: &McConfig) -> Result<PushforwardSides>
where
    F: Fn(&GridPath) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::Parameter(format!("grid needs at least 2 intervals, got {n}")));
    }
    let inverse = MonotoneInverse::new(f)?;
    let b = f.endpoints().log_derivative_jump();
    let side_a = estimate(
        |rng| {
            let mut xi = vec![0.0; n + 1];
            fill_bridge(&mut xi, sigma2, 0.0, 1.0, rng);
            let eta = pullback_path(&inverse, &GridPath::new(xi, 1.0)?)?;
            Ok(functional(&eta))
        },
        DOMAIN_PUSH,
        cfg,
    )?;
    let side_b = estimate(
        |rng| {
            let mut xi = vec![0.0; n + 1];
            fill_bridge(&mut xi, sigma2, -b, 1.0, rng);
            let xi = GridPath::new(xi, 1.0)?;
            let (density, _) = rn_bridge(f, &xi, sigma2)?;
            Ok(functional(&xi) * density)
        },
        DOMAIN_PUSH,
        cfg,
    )?;
    Ok(PushforwardSides {
        side_a: side_a.scaled(bridge_mass(sigma2, 0.0, 1.0)),
        side_b: side_b.scaled(bridge_mass(sigma2, -b, 1.0)),
        b,
    })
}

/// `f ∘ P` as nodal data for a path `P` with values in `[0, 1]`, using the
/// jets of `f` on the interval (no periodic extension at `1`).
pub fn push_interval<D: GridDiffeo + ?Sized>(f: &SmoothMap, path: &D) -> Result<NodalDiffeo> {
    let (values, derivs) = path
        .phi_nodes()
        .iter()
        .zip(path.dphi_nodes())
        .map(|(&x, &d)| {
            let j = f.jet(x.clamp(0.0, 1.0));
            (j[0], j[1] * d)
        })
        .unzip();
    NodalDiffeo::new(values, derivs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{Composed, IdentityMap};
    use crate::mobius::MobiusElement;
    use crate::schwarzian::{alpha_over_sin, f_alpha, two_alpha_tan_half};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sample_phi(seed: u64, n: usize, sigma2: f64, theta: f64) -> crate::bridge::CircleDiffeo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xi = vec![0.0; n + 1];
        fill_bridge(&mut xi, sigma2, 0.0, 1.0, &mut rng);
        ms_map(GridPath::new(xi, 1.0).unwrap(), theta).unwrap()
    }

    #[test]
    fn identity_is_trivial() {
        let phi = sample_phi(1, 256, 1.0, 0.3);
        let p = OrbitalParams::new(0.7, 1.0).unwrap();
        assert_eq!(rn_unquotiented(&IdentityMap, &phi, &p, FPrimeArgument::AtPhi).unwrap(), 1.0);
        let xi = phi.xi().clone();
        assert_eq!(rn_bridge(&SmoothMap::identity(), &xi, 1.0).unwrap(), (1.0, 0.0));
        let pinned = sample_phi(2, 256, 1.0, 0.0);
        assert_eq!(rn_pinned(&SmoothMap::identity(), &pinned, 0.0, &p).unwrap(), 1.0);
    }

    #[test]
    fn mobius_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = OrbitalParams::new(PI * PI, 1.3).unwrap();
        let phi = sample_phi(3, 512, 1.0, 0.2);
        let mut maps: Vec<MobiusElement> = (0..19).map(|_| MobiusElement::random(&mut rng, 0.9)).collect();
        maps.push(MobiusElement::from_polar(0.99, 1.1, 0.4).unwrap());
        for m in &maps {
            let d = rn_unquotiented(m, &phi, &p, FPrimeArgument::AtPhi).unwrap();
            assert!((d - 1.0).abs() < 1e-8, "{m:?}: {d}");
            let rho = MetricProfile::trig(crate::metric::TrigPoly::cos(1, 0.4).plus_constant(1.0)).unwrap();
            let d = rn_metric(m, &phi, &rho).unwrap();
            assert!((d - 1.0).abs() < 1e-8, "{m:?}: {d}");
        }
    }

    #[test]
    fn cocycle_unquotiented_and_metric() {
        let f = SmoothMap::sine_perturbation(0.3, 1).unwrap();
        let g = SmoothMap::sine_perturbation(-0.2, 2).unwrap();
        let gf = Composed::new(&g, &f);
        let phi = sample_phi(11, 512, 1.0, 0.37);
        let f_phi = NodalDiffeo::compose(&f, &phi);
        let p = OrbitalParams::new(1.7, 0.8).unwrap();
        let lhs = rn_unquotiented(&gf, &phi, &p, FPrimeArgument::AtPhi).unwrap();
        let rhs = rn_unquotiented(&g, &f_phi, &p, FPrimeArgument::AtPhi).unwrap()
            * rn_unquotiented(&f, &phi, &p, FPrimeArgument::AtPhi).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);

        let literal_lhs = rn_unquotiented(&gf, &phi, &p, FPrimeArgument::AtTau).unwrap();
        let literal_rhs = rn_unquotiented(&g, &f_phi, &p, FPrimeArgument::AtTau).unwrap()
            * rn_unquotiented(&f, &phi, &p, FPrimeArgument::AtTau).unwrap();
        assert!((literal_lhs / literal_rhs - 1.0).abs() > 1e-4);

        let rho = MetricProfile::trig(crate::metric::TrigPoly::sin(2, 0.3).plus_constant(1.2)).unwrap();
        let lhs = rn_metric(&gf, &phi, &rho).unwrap();
        let rhs = rn_metric(&g, &f_phi, &rho).unwrap() * rn_metric(&f, &phi, &rho).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn constant_metric_reduces_exactly() {
        let f = SmoothMap::sine_perturbation(0.25, 1).unwrap();
        let phi = sample_phi(5, 256, 2.0, 0.1);
        let sigma2 = 1.7;
        let p = OrbitalParams::new(PI * PI, sigma2).unwrap();
        let rho = MetricProfile::constant(sigma2).unwrap();
        assert_eq!(
            rn_metric(&f, &phi, &rho).unwrap(),
            rn_unquotiented(&f, &phi, &p, FPrimeArgument::AtPhi).unwrap()
        );
    }

    #[test]
    fn cocycle_pinned() {
        let f = f_alpha(1.3).unwrap();
        let g = SmoothMap::sine_perturbation(0.2, 1).unwrap();
        let gf = SmoothMap::compose(&g, &f);
        let p = OrbitalParams::new(0.4, 1.1).unwrap();
        for &t0_index in &[0usize, 77] {
            let n = 256;
            let t0 = t0_index as f64 / n as f64;
            let base = sample_phi(13, n, 1.0, 0.0);
            // Rotate so that the pin sits at t0.
            let shift = base.phi_nodes()[t0_index];
            let phi = NodalDiffeo::new(
                base.phi_nodes().iter().map(|x| x - shift).collect(),
                base.dphi_nodes().to_vec(),
            )
            .unwrap();
            let f_phi = NodalDiffeo::compose(&f, &phi);
            let lhs = rn_pinned(&gf, &phi, t0, &p).unwrap();
            let rhs = rn_pinned(&g, &f_phi, t0, &p).unwrap() * rn_pinned(&f, &phi, t0, &p).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn cocycle_bridge() {
        let f = SmoothMap::exp_map(0.7).unwrap();
        let g = SmoothMap::polynomial(&[0.0, 1.0, 0.3, -0.3]);
        let gf = SmoothMap::compose(&g, &f);
        let path = sample_phi(17, 512, 1.0, 0.0);
        let f_path = push_interval(&f, &path).unwrap();
        let (lhs, b_gf) = rn_bridge_nodal(&gf, &path, 1.3).unwrap();
        let (g_part, b_g) = rn_bridge_nodal(&g, &f_path, 1.3).unwrap();
        let (f_part, b_f) = rn_bridge_nodal(&f, &path, 1.3).unwrap();
        assert_relative_eq!(lhs, g_part * f_part, max_relative = 1e-8);
        assert_relative_eq!(b_gf, b_g + b_f, epsilon = 1e-12);
    }

    #[test]
    fn pinned_matches_unpinned_for_periodic_maps() {
        let f = SmoothMap::sine_perturbation(0.3, 2).unwrap();
        let p = OrbitalParams::new(2.0, 0.9).unwrap();
        let phi = sample_phi(19, 512, 1.0, 0.0);
        let pinned = rn_pinned(&f, &phi, 0.0, &p).unwrap();
        let unpinned = rn_unquotiented(&f, &phi, &p, FPrimeArgument::AtPhi).unwrap();
        assert_relative_eq!(pinned * f.endpoints().d1_0, unpinned, max_relative = 1e-8);
    }

    #[test]
    fn f_alpha_pinned_density() {
        let sigma2 = 1.4;
        let p0 = OrbitalParams::new(0.0, sigma2).unwrap();
        let phi = sample_phi(23, 512, sigma2, 0.0);
        for &alpha2 in &[0.8, 2.0, -1.5] {
            let f = f_alpha(alpha2).unwrap();
            let d = rn_pinned(&f, &phi, 0.0, &p0).unwrap();
            let expected = (-2.0 * two_alpha_tan_half(alpha2) * phi.dphi_nodes()[0] / sigma2
                + 2.0 * alpha2 / sigma2 * GridDiffeo::energy(&NodalDiffeo::from_grid(&phi)))
            .exp()
                / alpha_over_sin(alpha2);
            assert_relative_eq!(d, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn f_alpha_bridge_density() {
        let sigma2 = 2.0;
        let alpha2: f64 = 1.0;
        let f = f_alpha(alpha2).unwrap();
        let phi = sample_phi(29, 512, sigma2, 0.0);
        let (d, b) = rn_bridge(&f, phi.xi(), sigma2).unwrap();
        assert!(b.abs() < 1e-12);
        let dp = phi.dphi_nodes();
        let expected = (-two_alpha_tan_half(alpha2) / sigma2 * (dp[0] + dp[512])
            + 2.0 * alpha2 / sigma2 * GridDiffeo::energy(&NodalDiffeo::from_grid(&phi)))
        .exp()
            / alpha_over_sin(alpha2);
        assert_relative_eq!(d, expected, max_relative = 1e-10);
    }

    #[test]
    fn errors() {
        let phi = sample_phi(31, 64, 1.0, 0.25);
        let p = OrbitalParams::new(0.0, 1.0).unwrap();
        let f = f_alpha(1.0).unwrap();
        assert!(matches!(
            rn_pinned(&f, &phi, 0.0, &p),
            Err(Error::PinMismatch { .. })
        ));
        let non_periodic = SmoothMap::exp_map(0.5).unwrap();
        assert!(matches!(
            rn_unquotiented(&non_periodic, &phi, &p, FPrimeArgument::AtPhi),
            Err(Error::Periodicity(_))
        ));
        let folded = SmoothMap::polynomial(&[0.0, 3.0, -2.0]);
        assert!(matches!(MonotoneInverse::new(&folded), Err(Error::Inversion(_))));
    }

    #[test]
    fn inverse_is_accurate() {
        for f in [
            f_alpha(2.0).unwrap(),
            SmoothMap::exp_map(1.5).unwrap(),
            SmoothMap::sin_squared_bump(0.1).unwrap(),
        ] {
            let inv = MonotoneInverse::new(&f).unwrap();
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                assert!((inv.apply(f.eval(x)).unwrap() - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pushforward_identity_is_exact() {
        let cfg = McConfig::new(2000, 3).with_chunks(8);
        let s = verify_pushforward(&SmoothMap::identity(), |xi| (-xi.at(0.5).powi(2)).exp(), 1.0, 64, &cfg).unwrap();
        assert_eq!(s.side_a, s.side_b);
        let inv = MonotoneInverse::new(&SmoothMap::identity()).unwrap();
        let xi = GridPath::from_fn(|t| (3.0 * t).sin() * t * (1.0 - t), 64, 1.0).unwrap();
        let eta = pullback_path(&inv, &xi).unwrap();
        for (a, b) in eta.values().iter().zip(xi.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
