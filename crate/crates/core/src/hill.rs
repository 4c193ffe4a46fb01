//! Reparametrisations of `[0, 1]` with prescribed non-positive Schwarzian,
//! built from two solutions of Hill's equation `g'' = −½ q g`.
//!
//! With `g₁(0) = 1, g₁'(0) = 0` and `g₂(0) = 0, g₂'(0) = 1`, the combination
//! `h₁ = c g₂ + g₁` with `h₁(1) = h₁(0) = 1` gives `f = g₂ / (g₂(1) h₁)`,
//! `f' = 1/(g₂(1) h₁²)` (the Wronskian is one) and `S(f) = −2 h₁''/h₁ = q`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::smooth::SmoothMap;

pub const DEFAULT_STEP: f64 = 1e-4;

type Scalar = dyn Fn(f64) -> f64 + Send + Sync;

/// State `(g₁, g₁', g₂, g₂')`.
type State = [f64; 4];

fn rhs(q: f64, y: State) -> State {
    [y[1], -0.5 * q * y[0], y[3], -0.5 * q * y[2]]
}

fn rk4_step(q: &Scalar, t: f64, y: State, h: f64) -> State {
    let add = |y: State, k: State, s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2], y[3] + s * k[3]];
    let qm = q(t + 0.5 * h);
    let k1 = rhs(q(t), y);
    let k2 = rhs(qm, add(y, k1, 0.5 * h));
    let k3 = rhs(qm, add(y, k2, 0.5 * h));
    let k4 = rhs(q(t + h), add(y, k3, h));
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Output of [`hill_construct`].
#[derive(Debug, Clone)]
pub struct HillSolution {
    pub map: SmoothMap,
    pub step: f64,
    /// `1 / g₂(1)`, equal to `f'(0) = f'(1)`.
    pub a: f64,
    /// Coefficient of `g₂` in `h₁`.
    pub c: f64,
}

/// Builds `f_q` with `S(f_q) = q`, `f_q(0) = 0`, `f_q(1) = 1` and
/// `f_q'(0) = f_q'(1)`, integrating Hill's equation by fixed-step RK4.
///
/// Off-node evaluations take one partial RK4 step from the node below.
pub fn hill_construct<Q>(q: Q, step: f64) -> Result<HillSolution>
where
    Q: Fn(f64) -> f64 + Send + Sync + 'static,
{
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::Parameter(format!("Hill step must be in (0, 0.5], got {step}")));
    }
    let n = (1.0 / step).round().max(2.0) as usize;
    let h = 1.0 / n as f64;
    let q: Arc<Scalar> = Arc::new(q);

    let mut nodes = Vec::with_capacity(n + 1);
    let mut y: State = [1.0, 0.0, 0.0, 1.0];
    nodes.push(y);
    for i in 0..n {
        let t = i as f64 * h;
        for s in [t, t + 0.5 * h] {
            let v = q(s);
            if !(v <= 0.0) {
                return Err(Error::Positivity(format!(
                    "Hill construction needs q <= 0, q({s}) = {v}"
                )));
            }
        }
        y = rk4_step(q.as_ref(), t, y, h);
        nodes.push(y);
    }
    if !(q(1.0) <= 0.0) {
        return Err(Error::Positivity(format!("Hill construction needs q <= 0, q(1) = {}", q(1.0))));
    }

    let end = nodes[n];
    if !(end[2] > 0.0) {
        return Err(Error::Positivity(format!("g2(1) = {} is not positive", end[2])));
    }
    let c = (1.0 - end[0]) / end[2];
    let a = 1.0 / end[2];
    for (i, y) in nodes.iter().enumerate() {
        let h1 = c * y[2] + y[0];
        if !(h1 > 0.0) {
            return Err(Error::Positivity(format!(
                "h1 vanishes near t = {}",
                i as f64 * h
            )));
        }
    }

    let nodes = Arc::new(nodes);
    let qe = Arc::clone(&q);
    let map = SmoothMap::new(move |t| {
        let tc = t.clamp(0.0, 1.0);
        let i = ((tc / h).floor() as usize).min(n - 1);
        let t_i = i as f64 * h;
        let y = if tc == t_i { nodes[i] } else { rk4_step(qe.as_ref(), t_i, nodes[i], tc - t_i) };
        let g2 = y[2];
        let h1 = c * y[2] + y[0];
        let dh1 = c * y[3] + y[1];
        let ddh1 = -0.5 * qe(tc) * h1;
        let h1sq = h1 * h1;
        [
            a * g2 / h1,
            a / h1sq,
            -2.0 * a * dh1 / (h1sq * h1),
            -2.0 * a * (ddh1 * h1 - 3.0 * dh1 * dh1) / (h1sq * h1sq),
        ]
    });
    Ok(HillSolution { map, step: h, a, c })
}

/// Schwarzian from a five-point finite-difference stencil on `log f'`.
/// Diagnostic only: `t ± 2δ` must lie in `[0, 1]`.
pub fn fd_schwarzian(f: &SmoothMap, t: f64, delta: f64) -> f64 {
    let l = |s: f64| f.d1(s).ln();
    let (m2, m1, z, p1, p2) = (l(t - 2.0 * delta), l(t - delta), l(t), l(t + delta), l(t + 2.0 * delta));
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * delta);
    let d2 = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * delta * delta);
    d2 - 0.5 * d1 * d1
}

impl HillSolution {
    /// `max |S(f_q) − q|` over `n_points` interior points, with the Schwarzian
    /// taken by finite differences of the stored solution.
    pub fn max_residual<Q: Fn(f64) -> f64>(&self, q: Q, n_points: usize) -> f64 {
        let delta = 1e-3;
        let lo = 2.0 * delta;
        let hi = 1.0 - 2.0 * delta;
        (0..n_points)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (n_points.max(2) - 1) as f64;
                (fd_schwarzian(&self.map, t, delta) - q(t)).abs()
            })
            .fold(0.0, f64::max)
    }
}
