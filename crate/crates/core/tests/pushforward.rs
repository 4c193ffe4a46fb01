use orbital_core::cov::verify_pushforward;
use orbital_core::schwarzian::f_alpha;
use orbital_core::{GridPath, McConfig, SmoothMap};

fn gauss_mid(xi: &GridPath) -> f64 {
    (-xi.at(0.5).powi(2)).exp()
}

#[test]
fn pushforward_library() {
    let maps = [
        ("f_alpha(1)", f_alpha(1.0).unwrap()),
        ("f_alpha(-1)", f_alpha(-1.0).unwrap()),
        ("sin2 bump", SmoothMap::sin_squared_bump(0.1).unwrap()),
        ("exp_map(0.5)", SmoothMap::exp_map(0.5).unwrap()),
        ("cubic", SmoothMap::polynomial(&[0.0, 1.0, 0.3, -0.3])),
    ];
    let cfg = McConfig::new(40_000, 11);
    for (name, f) in &maps {
        for (fname, g) in [("gauss", gauss_mid as fn(&GridPath) -> f64), ("one", |_: &GridPath| 1.0)] {
            let s = verify_pushforward(f, g, 2.0, 256, &cfg).unwrap();
            println!(
                "{name:>14} {fname:>6} b={:+.4} a={:.6}±{:.1e} b={:.6}±{:.1e} z={:+.2}",
                s.b, s.side_a.mean, s.side_a.stderr, s.side_b.mean, s.side_b.stderr, s.z_score()
            );
            assert!(s.z_score().abs() < 3.0);
        }
    }
}
