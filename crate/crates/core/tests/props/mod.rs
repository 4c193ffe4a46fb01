//! Property suite shared by the core `properties` tests and the acceptance run.

use std::f64::consts::PI;

use num_complex::Complex64;
use orbital_core::bridge::{fill_bridge, GridDiffeo};
use orbital_core::circle::Composed;
use orbital_core::cov::{push_interval, rn_bridge_nodal, rn_metric, rn_pinned, rn_unquotiented, FPrimeArgument};
use orbital_core::metric::{MetricProfile, TrigPoly};
use orbital_core::schwarzian::{f_alpha, schwarzian_chain_check};
use orbital_core::{cross_ratio, ms_inverse, ms_map, CircleDiffeo, GridPath, MobiusElement, NodalDiffeo, OrbitalParams, SmoothMap};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Property = fn(&mut TestRunner) -> Result<(), String>;

pub const PROPERTIES: &[(&str, Property)] = &[
    ("schwarzian_chain_rule", schwarzian_chain_rule),
    ("cocycle_unquotiented", cocycle_unquotiented),
    ("cocycle_metric", cocycle_metric),
    ("cocycle_pinned", cocycle_pinned),
    ("cocycle_bridge", cocycle_bridge),
    ("psl_invariance", psl_invariance),
    ("cross_ratio_is_mobius_invariant", cross_ratio_is_mobius_invariant),
    ("mobius_group_law", mobius_group_law),
    ("ms_round_trip", ms_round_trip),
];

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Runs one named property with a fixed-seed runner.
pub fn check(name: &str, cases: u32) -> Result<(), String> {
    let (_, prop) = PROPERTIES
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no property {name}"));
    prop(&mut runner(cases))
}

fn bridge_diffeo(seed: u64, n: usize, sigma2: f64, theta: f64) -> CircleDiffeo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = vec![0.0; n + 1];
    fill_bridge(&mut xi, sigma2, 0.0, 1.0, &mut rng);
    ms_map(GridPath::new(xi, 1.0).unwrap(), theta).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn schwarzian_chain_rule(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), 0.0f64..=1.0), |(seed, t)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = SmoothMap::random_spline_diffeo(&mut rng, 6, 0.5);
        let g = SmoothMap::random_spline_diffeo(&mut rng, 5, 0.5);
        let (lhs, rhs) = schwarzian_chain_check(&f, &g, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn cocycle_unquotiented(r: &mut TestRunner) -> Result<(), String> {
    let s = (
        (-0.6f64..0.6, 1u32..4, -0.6f64..0.6, 1u32..4),
        (-5.0f64..9.0, 0.3f64..4.0, any::<u64>(), 0.0f64..1.0),
    );
    r.run(&s, |((e1, k1, e2, k2), (alpha2, sigma2, seed, theta))| {
        let f = SmoothMap::sine_perturbation(e1, k1).unwrap();
        let g = SmoothMap::sine_perturbation(e2, k2).unwrap();
        let gf = Composed::new(&g, &f);
        let phi = bridge_diffeo(seed, 256, 1.0, theta);
        let f_phi = NodalDiffeo::compose(&f, &phi);
        let p = OrbitalParams::new(alpha2, sigma2).unwrap();
        let a = FPrimeArgument::AtPhi;
        let lhs = rn_unquotiented(&gf, &phi, &p, a).unwrap();
        let rhs = rn_unquotiented(&g, &f_phi, &p, a).unwrap() * rn_unquotiented(&f, &phi, &p, a).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-8, "{} vs {}", lhs, rhs);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn cocycle_metric(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(-0.6f64..0.6, -0.6f64..0.6, -0.5f64..0.5, any::<u64>()), |(e1, e2, amp, seed)| {
        let f = SmoothMap::sine_perturbation(e1, 1).unwrap();
        let g = MobiusElement::from_polar(0.5, 2.0, 0.1).unwrap();
        let h = SmoothMap::sine_perturbation(e2, 2).unwrap();
        let hg = Composed::new(&h, &g);
        let phi = bridge_diffeo(seed, 256, 1.0, 0.0);
        let rho = MetricProfile::trig(TrigPoly::cos(1, amp).plus_constant(1.0)).unwrap();
        let inner = NodalDiffeo::compose(&f, &phi);
        let lhs = rn_metric(&hg, &inner, &rho).unwrap();
        let rhs = rn_metric(&h, &NodalDiffeo::compose(&g, &inner), &rho).unwrap() * rn_metric(&g, &inner, &rho).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-8, "{} vs {}", lhs, rhs);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn cocycle_pinned(r: &mut TestRunner) -> Result<(), String> {
    let s = (-4.0f64..9.0, -0.6f64..0.6, -3.0f64..3.0, any::<u64>(), 0usize..128);
    r.run(&s, |(a1, e, alpha2, seed, pin)| {
        let f = f_alpha(a1).unwrap();
        let g = SmoothMap::sine_perturbation(e, 1).unwrap();
        let gf = SmoothMap::compose(&g, &f);
        let base = bridge_diffeo(seed, 128, 1.0, 0.0);
        let shift = base.phi_nodes()[pin];
        let phi = NodalDiffeo::new(base.phi_nodes().iter().map(|x| x - shift).collect(), base.dphi_nodes().to_vec()).unwrap();
        let t0 = pin as f64 / 128.0;
        let p = OrbitalParams::new(alpha2, 1.0).unwrap();
        let lhs = rn_pinned(&gf, &phi, t0, &p).unwrap();
        let rhs = rn_pinned(&g, &NodalDiffeo::compose(&f, &phi), t0, &p).unwrap() * rn_pinned(&f, &phi, t0, &p).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-8, "{} vs {}", lhs, rhs);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn cocycle_bridge(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(-1.5f64..1.5, -0.3f64..0.3, 0.5f64..3.0, any::<u64>()), |(c, q, sigma2, seed)| {
        let f = SmoothMap::exp_map(c).unwrap();
        let g = SmoothMap::polynomial(&[0.0, 1.0, q, -q]);
        let gf = SmoothMap::compose(&g, &f);
        let path = bridge_diffeo(seed, 256, sigma2, 0.0);
        let (lhs, b_gf) = rn_bridge_nodal(&gf, &path, sigma2).unwrap();
        let (dg, b_g) = rn_bridge_nodal(&g, &push_interval(&f, &path).unwrap(), sigma2).unwrap();
        let (df, b_f) = rn_bridge_nodal(&f, &path, sigma2).unwrap();
        prop_assert!(rel(lhs, dg * df) <= 1e-8, "{} vs {}", lhs, dg * df);
        prop_assert!((b_gf - b_g - b_f).abs() <= 1e-12);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn psl_invariance(r: &mut TestRunner) -> Result<(), String> {
    let s = (0.0f64..0.99, 0.0f64..1.0, 0.0f64..1.0, 0.3f64..4.0, any::<u64>());
    r.run(&s, |(rho, theta, a, sigma2, seed)| {
        let m = MobiusElement::from_polar(rho, theta, a).unwrap();
        let phi = bridge_diffeo(seed, 512, 1.0, 0.3);
        let p = OrbitalParams::new(PI * PI, sigma2).unwrap();
        let d = rn_unquotiented(&m, &phi, &p, FPrimeArgument::AtPhi).unwrap();
        prop_assert!((d - 1.0).abs() <= 1e-8, "{}", d);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn cross_ratio_is_mobius_invariant(r: &mut TestRunner) -> Result<(), String> {
    let s = (0.0f64..0.95, 0.0f64..1.0, 0.0f64..1.0, -0.5f64..0.5, 0.0f64..0.45, 0.55f64..1.0);
    r.run(&s, |(rho, theta, a, e, s, t)| {
        let m = MobiusElement::from_polar(rho, theta, a).unwrap();
        let phi = SmoothMap::sine_perturbation(e, 1).unwrap();
        let moved = Composed::new(&m, &phi);
        let before = cross_ratio(&phi, s, t).unwrap();
        let after = cross_ratio(&moved, s, t).unwrap();
        prop_assert!(rel(after, before) <= 1e-9, "{} vs {}", after, before);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn mobius_group_law(r: &mut TestRunner) -> Result<(), String> {
    let s = ((0.0f64..0.9, 0.0f64..1.0, 0.0f64..1.0), (0.0f64..0.9, 0.0f64..1.0, 0.0f64..1.0), 0.0f64..1.0);
    r.run(&s, |((r1, t1, a1), (r2, t2, a2), x)| {
        let m1 = MobiusElement::from_polar(r1, t1, a1).unwrap();
        let m2 = MobiusElement::from_polar(r2, t2, a2).unwrap();
        let c = m1.compose(&m2);
        let direct = m1.apply(m2.apply(x));
        let d = (c.apply(x) - direct).rem_euclid(1.0);
        prop_assert!(d.min(1.0 - d) <= 1e-10);
        let back = c.inverse().compose(&c);
        prop_assert!((back.z() - Complex64::new(0.0, 0.0)).norm() <= 1e-10);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn ms_round_trip(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), 0.1f64..5.0, -2.0f64..2.0, 4u32..11), |(seed, sigma2, theta, log_n)| {
        let n = 1usize << log_n;
        let phi = bridge_diffeo(seed, n, sigma2, theta);
        let back = ms_inverse(&phi).unwrap();
        for (a, b) in back.values().iter().zip(phi.xi().values()) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
        let p = phi.phi_nodes();
        prop_assert!((p[n] - p[0] - 1.0).abs() <= 1e-14);
        Ok(())
    })
    .map_err(|e| e.to_string())
}
