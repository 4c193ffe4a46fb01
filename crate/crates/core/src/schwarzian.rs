//! Schwarzian derivative, its chain rules, and the constant-Schwarzian maps
//! `f_α` of the boundary-defect construction.
//!
//! The orbit parameter is always `α²`, so elliptic (`α² > 0`), parabolic
//! (`α² = 0`) and hyperbolic (`α² < 0`) cases go through one code path.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::smooth::{compose_jets, Jet, SmoothMap};

/// Below this `|α²|` the even power series are used for `α / sin α`.
const SERIES_CUTOFF: f64 = 1e-3;

/// `f'''/f' − (3/2)(f''/f')²` from a jet. No positivity check.
#[inline]
pub fn schwarzian_of_jet(j: Jet) -> f64 {
    let r = j[2] / j[1];
    j[3] / j[1] - 1.5 * r * r
}

fn check_domain(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain {
            value: t,
            domain: "[0, 1]",
        })
    }
}

/// `S(f, t) = (f''/f')' − ½ (f''/f')²`.
pub fn schwarzian(f: &SmoothMap, t: f64) -> Result<f64> {
    check_domain(t)?;
    let j = f.jet(t);
    if !(j[1] > 0.0) {
        return Err(Error::NonPositiveDerivative { t, value: j[1] });
    }
    Ok(schwarzian_of_jet(j))
}

/// Both sides of `S(g ∘ f, t) = S(f, t) + S(g, f(t)) f'(t)²`.
///
/// The left side is computed from the composed jet, the right side from the
/// separate jets.
pub fn schwarzian_chain_check(f: &SmoothMap, g: &SmoothMap, t: f64) -> Result<(f64, f64)> {
    let sf = schwarzian(f, t)?;
    let jf = f.jet(t);
    let sg = schwarzian(g, jf[0])?;
    let composed = compose_jets(g.jet(jf[0]), jf);
    if !(composed[1] > 0.0) {
        return Err(Error::NonPositiveDerivative { t, value: composed[1] });
    }
    let lhs = schwarzian_of_jet(composed);
    let rhs = sf + sg * jf[1] * jf[1];
    Ok((lhs, rhs))
}

/// Jet of `x ↦ tan(αx − α/2)` (hyperbolic: `tanh(βx − β/2)`, parabolic:
/// `x − 1/2`). Its Schwarzian is `2α²`.
pub fn tan_lift_jet(alpha2: f64, x: f64) -> Jet {
    if alpha2 > 0.0 {
        let a = alpha2.sqrt();
        let t = (a * (x - 0.5)).tan();
        let s = 1.0 + t * t;
        [t, a * s, 2.0 * a * a * t * s, 2.0 * a * a * a * s * (1.0 + 3.0 * t * t)]
    } else if alpha2 < 0.0 {
        let b = (-alpha2).sqrt();
        let t = (b * (x - 0.5)).tanh();
        let s = 1.0 - t * t;
        [t, b * s, -2.0 * b * b * t * s, -2.0 * b * b * b * s * (1.0 - 3.0 * t * t)]
    } else {
        [x - 0.5, 1.0, 0.0, 0.0]
    }
}

/// Both sides of `S(tan(αφ − α/2), τ) = S(φ, τ) + 2α² φ'(τ)²`.
pub fn tan_lift_check(phi: &SmoothMap, alpha2: f64, t: f64) -> Result<(f64, f64)> {
    let s_phi = schwarzian(phi, t)?;
    let j = phi.jet(t);
    let lhs = schwarzian_of_jet(compose_jets(tan_lift_jet(alpha2, j[0]), j));
    Ok((lhs, s_phi + 2.0 * alpha2 * j[1] * j[1]))
}

/// `α / sin α` as a function of `α²`; `β / sinh β` for `α² = −β²`.
pub fn alpha_over_sin(alpha2: f64) -> f64 {
    if alpha2.abs() < SERIES_CUTOFF {
        let x = alpha2;
        1.0 + x * (1.0 / 6.0 + x * (7.0 / 360.0 + x * (31.0 / 15120.0 + x * 127.0 / 604800.0)))
    } else if alpha2 > 0.0 {
        let a = alpha2.sqrt();
        a / a.sin()
    } else {
        let b = (-alpha2).sqrt();
        b / b.sinh()
    }
}

/// `8 sin²(α/2)`, continued to `−8 sinh²(β/2)` for `α² = −β²`.
pub fn eight_sin2_half(alpha2: f64) -> f64 {
    if alpha2 >= 0.0 {
        let s = (0.5 * alpha2.sqrt()).sin();
        8.0 * s * s
    } else {
        let s = (0.5 * (-alpha2).sqrt()).sinh();
        -8.0 * s * s
    }
}

/// `2α tan(α/2)`, continued to `−2β tanh(β/2)`.
pub fn two_alpha_tan_half(alpha2: f64) -> f64 {
    if alpha2 >= 0.0 {
        let a = alpha2.sqrt();
        2.0 * a * (0.5 * a).tan()
    } else {
        let b = (-alpha2).sqrt();
        -2.0 * b * (0.5 * b).tanh()
    }
}

/// `f_α(t) = ½ (tan(α(t − ½)) / tan(α/2) + 1)`: a reparametrisation of
/// `[0, 1]` with constant Schwarzian `2α²`.
///
/// `f_α'(0) = f_α'(1) = α / sin α` and `−f''(0)/f'(0) = f''(1)/f'(1) = 2α tan(α/2)`.
pub fn f_alpha(alpha2: f64) -> Result<SmoothMap> {
    if !alpha2.is_finite() || alpha2 >= PI * PI {
        return Err(Error::Parameter(format!(
            "f_alpha needs alpha2 < pi^2, got {alpha2}"
        )));
    }
    if alpha2 == 0.0 {
        return Ok(SmoothMap::identity());
    }
    if alpha2 > 0.0 {
        let a = alpha2.sqrt();
        let th = (0.5 * a).tan();
        let k = a / (2.0 * th);
        Ok(SmoothMap::new(move |t| {
            let tt = (a * (t - 0.5)).tan();
            let s = 1.0 + tt * tt;
            [
                0.5 * (tt / th + 1.0),
                k * s,
                2.0 * k * a * tt * s,
                2.0 * k * a * a * s * (1.0 + 3.0 * tt * tt),
            ]
        }))
    } else {
        let b = (-alpha2).sqrt();
        let th = (0.5 * b).tanh();
        let k = b / (2.0 * th);
        Ok(SmoothMap::new(move |t| {
            let tt = (b * (t - 0.5)).tanh();
            let s = 1.0 - tt * tt;
            [
                0.5 * (tt / th + 1.0),
                k * s,
                -2.0 * k * b * tt * s,
                -2.0 * k * b * b * s * (1.0 - 3.0 * tt * tt),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mobius_has_zero_schwarzian() {
        let m = SmoothMap::fractional_linear(2.0, 0.3, 0.7, 1.1).unwrap();
        for &t in &[0.0, 0.25, 0.6, 1.0] {
            assert!(schwarzian(&m, t).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn tan_has_schwarzian_two_pi_squared() {
        let f = SmoothMap::new(|t| tan_lift_jet(PI * PI, t));
        for &t in &[0.1, 0.5, 0.77] {
            assert_relative_eq!(schwarzian(&f, t).unwrap(), 2.0 * PI * PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn exponential_schwarzian() {
        let f = SmoothMap::exponential(1.0);
        assert_relative_eq!(schwarzian(&f, 0.4).unwrap(), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn domain_and_positivity_errors() {
        let id = SmoothMap::identity();
        assert!(matches!(schwarzian(&id, 1.5), Err(Error::Domain { .. })));
        let dec = SmoothMap::polynomial(&[1.0, -1.0]);
        assert!(matches!(schwarzian(&dec, 0.5), Err(Error::NonPositiveDerivative { .. })));
    }

    #[test]
    fn chain_rule_trivial_cases() {
        let f = SmoothMap::sine_perturbation(0.3, 1).unwrap();
        let (l, r) = schwarzian_chain_check(&f, &SmoothMap::identity(), 0.3).unwrap();
        assert_relative_eq!(l, r, epsilon = 1e-12);
        assert_relative_eq!(l, schwarzian(&f, 0.3).unwrap(), epsilon = 1e-12);
        let m1 = SmoothMap::fractional_linear(1.0, 0.0, 0.5, 1.0).unwrap();
        let m2 = SmoothMap::fractional_linear(1.5, 0.0, 0.5, 1.0).unwrap();
        let (l, r) = schwarzian_chain_check(&m1, &m2, 0.4).unwrap();
        assert!(l.abs() < 1e-12 && r.abs() < 1e-12);
    }

    #[test]
    fn chain_rule_falpha_spline() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = SmoothMap::random_spline_diffeo(&mut rng, 12, 1.5);
        let f = f_alpha(1.7).unwrap();
        let worst = (0..100)
            .map(|i| {
                let (l, r) = schwarzian_chain_check(&f, &g, i as f64 / 99.0).unwrap();
                (l - r).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "worst gap {worst}");
    }

    #[test]
    fn f_alpha_endpoint_identities() {
        for &alpha2 in &[-4.0, -1.0, 0.5, 1.0, (PI / 2.0).powi(2), 9.0] {
            let f = f_alpha(alpha2).unwrap();
            let e = f.endpoints();
            let aos = alpha_over_sin(alpha2);
            let tan_term = two_alpha_tan_half(alpha2);
            assert!(e.f0.abs() < 1e-10);
            assert!((e.f1 - 1.0).abs() < 1e-10);
            assert_relative_eq!(e.d1_0, aos, max_relative = 1e-10);
            assert_relative_eq!(e.d1_1, aos, max_relative = 1e-10);
            assert_relative_eq!(-e.d2_0 / e.d1_0, tan_term, max_relative = 1e-10);
            assert_relative_eq!(e.d2_1 / e.d1_1, tan_term, max_relative = 1e-10);
            for &t in &[0.0, 0.3, 0.5, 0.9, 1.0] {
                assert_relative_eq!(schwarzian(&f, t).unwrap(), 2.0 * alpha2, epsilon = 1e-9, max_relative = 1e-10);
            }
            assert_relative_eq!(f.eval(0.5), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn f_alpha_special_values() {
        let f = f_alpha(0.0).unwrap();
        assert_eq!(f.eval(0.37), 0.37);
        let f = f_alpha((PI / 2.0).powi(2)).unwrap();
        assert_relative_eq!(f.d1(0.0), PI / 2.0, max_relative = 1e-14);
        assert!(f_alpha(PI * PI).is_err());
        assert!(f_alpha(12.0).is_err());
    }

    #[test]
    fn alpha_over_sin_series_matches_direct() {
        for &x in &[-9.9e-4f64, -1e-6, 1e-6, 9.9e-4] {
            let direct = if x > 0.0 {
                x.sqrt() / x.sqrt().sin()
            } else {
                (-x).sqrt() / (-x).sqrt().sinh()
            };
            assert_relative_eq!(alpha_over_sin(x), direct, max_relative = 1e-14);
        }
        assert_eq!(alpha_over_sin(0.0), 1.0);
    }

    #[test]
    fn tan_lift_identity() {
        let phi = SmoothMap::sin_squared_bump(0.2).unwrap();
        for &alpha2 in &[-2.0, 0.0, 1.0, PI * PI] {
            for i in 0..20 {
                let (l, r) = tan_lift_check(&phi, alpha2, (i as f64 + 0.5) / 20.0).unwrap();
                assert!((l - r).abs() <= 1e-8 * r.abs().max(1.0), "alpha2 {alpha2}: {l} vs {r}");
            }
        }
    }
}
