use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use orbital_core::bridge::{fill_bridge, GridDiffeo};
use orbital_core::cov::verify_pushforward;
use orbital_core::hill::{hill_construct, DEFAULT_STEP};
use orbital_core::mc::{estimate_vec, stream};
use orbital_core::metric::{
    functional_derivative_check, log_partition_z_metric, log_schwarzian_partition_derivative, normaliser_routes,
    partition_z_metric, reparam_h, truncated_correlator, GradientPrefactor, MetricProfile, TestFunction,
};
use orbital_core::orbital::{
    defect_identity_check, haar_regularizer_d, mc_partition_ratio, partition_ratio_bias_probe,
    partition_ratio_exact, regularisation_limit_table, schwarzian_partition, spectral_density_check, weight_alpha, z0,
    DefectFunctional, HaarGrid,
};
use orbital_core::schwarzian::f_alpha;
use orbital_core::{ms_map, GridPath, MobiusElement, NodalDiffeo, OrbitalParams, SmoothMap};
use serde_json::{json, Value};

use crate::expr::Expr;
use crate::{CliError, Globals, Report, Status};

const DOMAIN_SAMPLE: u64 = 0x5341_4d50;
const DOMAIN_DUMP: u64 = 0x4455_4d50;

fn params(alpha2: f64, sigma2: f64) -> Result<OrbitalParams, CliError> {
    Ok(OrbitalParams::new(alpha2, sigma2)?)
}

fn rel_gap(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

#[derive(Args, Debug)]
pub struct PartitionRatio {
    #[arg(long, allow_negative_numbers = true)]
    alpha2: f64,
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples for the paired N / 2N grid-bias probe.
    #[arg(long, default_value_t = 20_000)]
    probe_samples: usize,
    /// Only evaluate the closed form.
    #[arg(long)]
    exact_only: bool,
    /// Permit Monte Carlo for alpha2 > pi^2/4.
    #[arg(long)]
    allow_large_alpha: bool,
}

impl PartitionRatio {
    pub fn run(&self, g: &Globals) -> Result<Report, CliError> {
        let p = params(self.alpha2, self.sigma2)?;
        let exact = partition_ratio_exact(&p)?;
        let mut body = json!({
            "identity": "Z^alpha / Z^0 = (alpha / sin alpha) exp(2 alpha^2 / sigma^2)",
            "params": {
                "alpha2": self.alpha2, "sigma2": self.sigma2, "grid": self.grid, "samples": self.samples,
                "probe_samples": self.probe_samples, "chunks": g.chunks, "exact_only": self.exact_only,
            },
            "seed": self.seed,
            "grid": self.grid,
            "exact": exact,
        });
        if self.exact_only {
            return Ok(Report { body, status: Status::Pass });
        }
        let est = mc_partition_ratio(&p, self.grid, &g.mc(self.samples, self.seed), self.allow_large_alpha)?;
        let probe = partition_ratio_bias_probe(&p, self.grid, &g.mc(self.probe_samples, self.seed))?;
        // First-order bias: bias(N) ≈ 2 (E_N − E_2N).
        let bias_bound = 2.0 * (probe.difference.mean.abs() + 3.0 * probe.difference.stderr);
        let allowance_ok = bias_bound <= 0.01 * exact;
        let gap = (est.mean - exact).abs();
        let pass = allowance_ok && gap <= 3.0 * est.stderr + bias_bound;
        body["estimate"] = json!(est);
        body["z"] = json!(est.z_against(exact));
        body["bias_probe"] = json!(probe);
        body["bias_allowance"] = json!(bias_bound);
        body["bias_allowance_within_1pct"] = json!(allowance_ok);
        Ok(Report {
            body,
            status: Status::from_checks(pass, est.unreliable),
        })
    }
}

#[derive(Args, Debug)]
pub struct DefectCheck {
    #[arg(long, allow_negative_numbers = true)]
    alpha2: f64,
    #[arg(long)]
    sigma2: f64,
    /// Test functionals: one, phid0, expneg.
    #[arg(long, value_delimiter = ',', default_value = "one,phid0,expneg")]
    functional: Vec<String>,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    allow_large_alpha: bool,
}

impl DefectCheck {
    pub fn run(&self, g: &Globals) -> Result<Report, CliError> {
        let p = params(self.alpha2, self.sigma2)?;
        let functionals = self
            .functional
            .iter()
            .map(|s| DefectFunctional::parse(s))
            .collect::<orbital_core::Result<Vec<_>>>()?;
        let sides = defect_identity_check(&p, &functionals, self.grid, &g.mc(self.samples, self.seed), self.allow_large_alpha)?;
        let z_alpha = partition_ratio_exact(&p)? * z0(p.sigma2);
        let mut pass = true;
        let mut unreliable = false;
        let rows: Vec<Value> = functionals
            .iter()
            .zip(&sides)
            .map(|(f, s)| {
                let z = s.z_score();
                pass &= z <= 3.0;
                unreliable |= s.lhs.unreliable || s.rhs.unreliable;
                let mut row = json!({ "functional": f.name(), "lhs": s.lhs, "rhs": s.rhs, "z": z });
                if matches!(f, DefectFunctional::One) {
                    row["exact"] = json!(z_alpha);
                    row["z_lhs_exact"] = json!(s.lhs.z_against(z_alpha));
                    row["z_rhs_exact"] = json!(s.rhs.z_against(z_alpha));
                }
                row
            })
            .collect();
        let body = json!({
            "identity": "Z^0 E[G(f_alpha o P) e^{2 alpha^2/sigma^2 |P'|^2}] = (alpha/sin alpha) Z^0 E[G(P) e^{8 sin^2(alpha/2) P'(0)/sigma^2}]",
            "params": {
                "alpha2": self.alpha2, "sigma2": self.sigma2, "grid": self.grid, "samples": self.samples,
                "chunks": g.chunks, "functional": self.functional,
            },
            "seed": self.seed,
            "grid": self.grid,
            "sides": rows,
        });
        Ok(Report {
            body,
            status: Status::from_checks(pass, unreliable),
        })
    }
}

/// Test maps of `[0, 1]` named on the command line.
pub fn parse_map(given: &str) -> Result<SmoothMap, CliError> {
    let (kind, arg) = given.split_once(':').unwrap_or((given, ""));
    let num = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Parameter(format!("map {given:?}: {s:?} is not a number")))
    };
    let map = match kind {
        "identity" => SmoothMap::identity(),
        "falpha" => f_alpha(num(arg)?)?,
        "exp" => SmoothMap::exp_map(num(arg)?)?,
        "cubic" => {
            let q = num(arg)?;
            SmoothMap::polynomial(&[0.0, 1.0, q, -q])
        }
        "sin2" => SmoothMap::sin_squared_bump(num(arg)?)?,
        "spline" => {
            let text = std::fs::read_to_string(arg)
                .map_err(|e| CliError::Parameter(format!("cannot read spline knots {arg:?}: {e}")))?;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                let (x, y) = line
                    .split_once(',')
                    .ok_or_else(|| CliError::Parameter(format!("spline line {line:?} is not `x,y`")))?;
                match (x.trim().parse::<f64>(), y.trim().parse::<f64>()) {
                    (Ok(x), Ok(y)) => {
                        xs.push(x);
                        ys.push(y);
                    }
                    _ if xs.is_empty() => continue,
                    _ => return Err(CliError::Parameter(format!("spline line {line:?} is not numeric"))),
                }
            }
            SmoothMap::cubic_spline(&xs, &ys)?
        }
        other => {
            return Err(CliError::Parameter(format!(
                "unknown map {other:?} (identity, falpha:<a2>, exp:<c>, cubic:<q>, sin2:<eps>, spline:<file>)"
            )))
        }
    };
    map.check_reparametrisation(1e-10)?;
    Ok(map)
}

fn pushforward_functional(name: &str) -> Result<fn(&GridPath) -> f64, CliError> {
    match name {
        "gauss" => Ok(|xi| (-xi.at(0.5).powi(2)).exp()),
        "one" => Ok(|_| 1.0),
        other => Err(CliError::Parameter(format!("unknown functional {other:?} (gauss, one)"))),
    }
}

#[derive(Args, Debug)]
pub struct CovCheck {
    /// identity, falpha:<a2>, exp:<c>, cubic:<q>, sin2:<eps> or spline:<file>.
    #[arg(long)]
    map: String,
    #[arg(long, default_value_t = 2.0)]
    sigma2: f64,
    /// Path functionals: gauss (exp(-xi(1/2)^2)), one.
    #[arg(long, value_delimiter = ',', default_value = "gauss,one")]
    functional: Vec<String>,
    #[arg(long, default_value_t = 256)]
    grid: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CovCheck {
    pub fn run(&self, g: &Globals) -> Result<Report, CliError> {
        if !(self.sigma2 > 0.0) {
            return Err(CliError::Parameter(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        let f = parse_map(&self.map)?;
        let cfg = g.mc(self.samples, self.seed);
        let mut pass = true;
        let mut unreliable = false;
        let mut rows = Vec::new();
        let mut b = 0.0;
        for name in &self.functional {
            let functional = pushforward_functional(name)?;
            let s = verify_pushforward(&f, functional, self.sigma2, self.grid, &cfg)?;
            b = s.b;
            let z = s.z_score();
            pass &= z <= 3.0;
            unreliable |= s.side_a.unreliable || s.side_b.unreliable;
            rows.push(json!({ "functional": name, "side_a": s.side_a, "side_b": s.side_b, "z": z }));
        }
        let body = json!({
            "identity": "bridge_mass(0) E_0[F(P^{-1}(f^{-1} o P_xi))] = bridge_mass(-b) E_{-b}[F(xi) density_f(xi)]",
            "params": {
                "map": self.map, "sigma2": self.sigma2, "grid": self.grid, "samples": self.samples,
                "chunks": g.chunks, "functional": self.functional,
            },
            "seed": self.seed,
            "grid": self.grid,
            "b": b,
            "sides": rows,
        });
        Ok(Report {
            body,
            status: Status::from_checks(pass, unreliable),
        })
    }
}

#[derive(Args, Debug)]
pub struct HillSolve {
    /// q(t) <= 0 as an expression in t, or a file holding one.
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Rows in the emitted table of f, f', f''.
    #[arg(long, default_value_t = 101)]
    table_points: usize,
    /// Interior points for the residual max |S(f_q) - q|.
    #[arg(long, default_value_t = 2001)]
    residual_points: usize,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl HillSolve {
    pub fn run(&self) -> Result<Report, CliError> {
        let q = Expr::parse(&self.q)?;
        if self.table_points < 2 {
            return Err(CliError::Parameter("--table-points must be at least 2".into()));
        }
        let sol = hill_construct(q.clone().into_fn(), self.step)?;
        let residual = sol.max_residual(|t| q.eval(t), self.residual_points);
        let e = *sol.map.endpoints();
        let signs = e.d2_1 < 0.0 && 0.0 < e.d2_0;
        let table: Vec<[f64; 4]> = (0..self.table_points)
            .map(|i| {
                let t = i as f64 / (self.table_points - 1) as f64;
                let j = sol.map.jet(t);
                [t, j[0], j[1], j[2]]
            })
            .collect();
        let body = json!({
            "identity": "S(f_q) = q with f_q(0) = 0, f_q(1) = 1, f_q'(0) = f_q'(1)",
            "params": { "q": q.source(), "step": self.step, "residual_points": self.residual_points, "tol": self.tol },
            "seed": null,
            "grid": (1.0 / sol.step).round() as u64,
            "a": sol.a,
            "c": sol.c,
            "endpoints": e,
            "sign_conditions": signs,
            "max_residual": residual,
            "table_columns": ["t", "f", "f'", "f''"],
            "table": table,
        });
        Ok(Report {
            body,
            status: Status::from_checks(residual <= self.tol && signs, false),
        })
    }
}

#[derive(Args, Debug)]
pub struct PoissonCheck {
    /// Values of |z| in [0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.9,0.99")]
    rho_list: Vec<f64>,
    /// Argument of z in turns.
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    /// Rotation part of the Möbius map.
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

impl PoissonCheck {
    pub fn run(&self) -> Result<Report, CliError> {
        let mut pass = true;
        let rows = self
            .rho_list
            .iter()
            .map(|&rho| {
                let m = MobiusElement::from_polar(rho, self.theta, self.a)?;
                let closed = m.energy();
                let quad = m.energy_quadrature();
                let gap = rel_gap(quad, closed);
                pass &= gap <= self.tol;
                Ok(json!({ "rho": rho, "closed_form": closed, "quadrature": quad, "rel_gap": gap }))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let body = json!({
            "identity": "integral of phi_{z,a}'^2 = (1 + |z|^2) / (1 - |z|^2)",
            "params": { "rho_list": self.rho_list, "theta": self.theta, "a": self.a, "tol": self.tol },
            "seed": null,
            "grid": null,
            "rows": rows,
        });
        Ok(Report {
            body,
            status: Status::from_checks(pass, false),
        })
    }
}

/// `id`, `sine:<eps>` (t + eps sin(2 pi t)/(2 pi)) or `sample:<seed>`.
fn parse_phi(given: &str, sigma2: f64, grid: usize) -> Result<NodalDiffeo, CliError> {
    let (kind, arg) = given.split_once(':').unwrap_or((given, ""));
    match kind {
        "id" => Ok(NodalDiffeo::sample(&SmoothMap::identity(), grid)),
        "sine" => {
            let eps = arg
                .parse::<f64>()
                .map_err(|_| CliError::Parameter(format!("phi {given:?}: bad amplitude")))?;
            Ok(NodalDiffeo::sample(&SmoothMap::sine_perturbation(eps, 1)?, grid))
        }
        "sample" => {
            let seed = arg
                .parse::<u64>()
                .map_err(|_| CliError::Parameter(format!("phi {given:?}: bad seed")))?;
            let mut rng = stream(seed, DOMAIN_DUMP, 0);
            let mut xi = vec![0.0; grid + 1];
            fill_bridge(&mut xi, sigma2, 0.0, 1.0, &mut rng);
            Ok(NodalDiffeo::from_grid(&ms_map(GridPath::new(xi, 1.0)?, 0.0)?))
        }
        other => Err(CliError::Parameter(format!("unknown phi {other:?} (id, sine:<eps>, sample:<seed>)"))),
    }
}

#[derive(Args, Debug)]
pub struct HaarRegularizer {
    #[arg(long)]
    alpha2: f64,
    #[arg(long)]
    sigma2: f64,
    /// id, sine:<eps> or sample:<seed> (a bridge sample at --sigma2).
    #[arg(long, default_value = "id")]
    phi: String,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Also tabulate D at alpha = pi - 10^-k, k = 1..4.
    #[arg(long)]
    limit_table: bool,
}

impl HaarRegularizer {
    pub fn run(&self) -> Result<Report, CliError> {
        if self.grid < 4 {
            return Err(CliError::Parameter("--grid must be at least 4".into()));
        }
        let phi = parse_phi(&self.phi, self.sigma2, self.grid)?;
        let hg = HaarGrid::default();
        let r = haar_regularizer_d(&phi, self.alpha2, self.sigma2, &hg)?;
        let mut pass = r.value <= r.bound * (1.0 + 1e-12);
        let mut body = json!({
            "identity": "D^alpha(phi) <= 2 pi / (pi + alpha); D^alpha(id) = (2 pi/(pi + alpha)) e^{-2(pi^2 - alpha^2)/sigma^2}",
            "params": { "alpha2": self.alpha2, "sigma2": self.sigma2, "phi": self.phi, "haar_grid": hg },
            "seed": null,
            "grid": self.grid,
            "result": r,
            "energy": phi.energy(),
        });
        if self.phi == "id" {
            let gap = rel_gap(r.value, r.identity_value);
            pass &= gap <= 1e-8;
            body["identity_rel_gap"] = json!(gap);
        }
        if self.limit_table {
            let rows = (1..=4)
                .map(|k| {
                    let alpha = PI - 10f64.powi(-k);
                    let v = haar_regularizer_d(&phi, alpha * alpha, self.sigma2, &hg)?;
                    Ok(json!({ "k": k, "alpha": alpha, "value": v.value, "gap_to_one": (v.value - 1.0).abs() }))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            body["limit_table"] = json!(rows);
        }
        Ok(Report {
            body,
            status: Status::from_checks(pass && !r.accuracy_warning, false),
        })
    }
}

#[derive(Args, Debug)]
pub struct SpectralCheck {
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

impl SpectralCheck {
    pub fn run(&self) -> Result<Report, CliError> {
        let c = spectral_density_check(self.sigma2)?;
        let body = json!({
            "identity": "integral_0^inf e^{-sigma^2 E} 2 sinh(2 pi sqrt(2E)) dE = (2 pi/sigma^2)^{3/2} e^{2 pi^2/sigma^2}",
            "params": { "sigma2": self.sigma2, "tol": self.tol },
            "seed": null,
            "grid": null,
            "result": c,
        });
        Ok(Report {
            body,
            status: Status::from_checks(c.rel_gap <= self.tol, false),
        })
    }
}

#[derive(Args, Debug)]
pub struct SchwarzianZ {
    #[arg(long)]
    sigma2: f64,
    /// Tabulate 4 pi (pi - alpha)/sigma^2 Z^alpha at alpha = pi - 10^-k.
    #[arg(long)]
    limit_table: bool,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    ks: Vec<i32>,
}

impl SchwarzianZ {
    pub fn run(&self) -> Result<Report, CliError> {
        let z = schwarzian_partition(self.sigma2)?;
        let mut body = json!({
            "identity": "Z(sigma^2) = (2 pi/sigma^2)^{3/2} e^{2 pi^2/sigma^2} = lim 4 pi (pi - alpha)/sigma^2 Z^alpha",
            "params": { "sigma2": self.sigma2, "ks": self.ks, "limit_table": self.limit_table },
            "seed": null,
            "grid": null,
            "value": z,
        });
        let mut pass = true;
        if self.limit_table {
            if self.ks.len() < 2 {
                return Err(CliError::Parameter("--ks needs at least two values".into()));
            }
            let t = regularisation_limit_table(self.sigma2, &self.ks)?;
            let last = t.rows.last().map(|r| r.rel_gap).unwrap_or(f64::INFINITY);
            pass = last <= 1e-5 && (t.order - 1.0).abs() <= 0.1;
            body["limit_table"] = json!(t);
        }
        Ok(Report {
            body,
            status: Status::from_checks(pass, false),
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Prefactor {
    Polarised,
    Printed,
}

#[derive(Args, Debug)]
pub struct Metric {
    /// rho(t) > 0 as an expression in t, or a file holding one.
    #[arg(long)]
    rho: Option<String>,
    /// Base metric for correlators and functional derivatives.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Partition function Z(rho) and the normaliser C(rho).
    #[arg(long, group = "mode")]
    partition: bool,
    /// Truncated k-point correlator at separated points.
    #[arg(long, group = "mode", value_name = "K")]
    correlator: Option<u32>,
    /// Finite-difference k-th variation of log Z against the closed form.
    #[arg(long, group = "mode", value_name = "K")]
    fd_check: Option<usize>,
    /// Test functions for --fd-check, one per direction.
    #[arg(long = "h", allow_hyphen_values = true)]
    hs: Vec<String>,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, value_enum, default_value_t = Prefactor::Polarised)]
    prefactor: Prefactor,
}

fn expr_test_function(e: Expr) -> TestFunction {
    let name = e.source().to_string();
    TestFunction::custom(name, move |t| {
        let h = 1e-2;
        let f = |k: f64| e.eval(t + k * h);
        let d2 = (2.0 * (f(3.0) + f(-3.0)) - 27.0 * (f(2.0) + f(-2.0)) + 270.0 * (f(1.0) + f(-1.0)) - 490.0 * f(0.0))
            / (180.0 * h * h);
        [e.eval(t), e.derivative(t), d2]
    })
}

impl Metric {
    fn sigma2(&self) -> Result<f64, CliError> {
        match self.sigma2 {
            Some(s) if s > 0.0 => Ok(s),
            Some(s) => Err(CliError::Parameter(format!("sigma2 must be positive, got {s}"))),
            None => Err(CliError::Parameter("--sigma2 is required for correlators".into())),
        }
    }

    pub fn run(&self) -> Result<Report, CliError> {
        let identity = "Z(rho) = exp{(1/2) int rho'^2/rho^3} Z(int rho); variations of log Z in 1/rho";
        let mut body = json!({
            "identity": identity,
            "params": {
                "rho": self.rho, "sigma2": self.sigma2, "partition": self.partition, "correlator": self.correlator,
                "fd_check": self.fd_check, "h": self.hs, "step": self.step,
                "prefactor": format!("{:?}", self.prefactor).to_lowercase(),
            },
            "seed": null,
            "grid": orbital_core::metric::METRIC_NODES,
        });
        if self.partition {
            let src = self
                .rho
                .as_deref()
                .ok_or_else(|| CliError::Parameter("--partition needs --rho".into()))?;
            let e = Expr::parse(src)?;
            let rho = MetricProfile::new(move |t| (e.eval(t), e.derivative(t)))?;
            let routes = normaliser_routes(&rho);
            let h1 = reparam_h(&rho, 1.0);
            let z = partition_z_metric(&rho).ok();
            let pass = routes.max_rel_gap() <= 1e-6 && (h1 - 1.0).abs() <= 1e-12;
            body["result"] = json!({
                "sigma2_rho": rho.sigma2_rho(),
                "log_c_routes": routes,
                "log_c_rel_gap": routes.max_rel_gap(),
                "c": routes.gradient.exp(),
                "log_z": log_partition_z_metric(&rho),
                "z": z,
                "h_at_1": h1,
            });
            return Ok(Report {
                body,
                status: Status::from_checks(pass, false),
            });
        }
        if let Some(k) = self.correlator {
            if k == 0 {
                return Err(CliError::Parameter("--correlator needs k >= 1".into()));
            }
            let s = self.sigma2()?;
            let value = truncated_correlator(k, s);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let via_log = sign * s.powi(2 * k as i32) * log_schwarzian_partition_derivative(k, s);
            let gap = rel_gap(via_log, value);
            body["result"] = json!({ "k": k, "value": value, "from_log_z_derivative": via_log, "rel_gap": gap });
            return Ok(Report {
                body,
                status: Status::from_checks(gap <= 1e-12, false),
            });
        }
        if let Some(k) = self.fd_check {
            let s = self.sigma2()?;
            if self.hs.len() != k {
                return Err(CliError::Parameter(format!("--fd-check {k} needs {k} --h functions, got {}", self.hs.len())));
            }
            let hs = self
                .hs
                .iter()
                .map(|h| Expr::parse(h).map(expr_test_function))
                .collect::<Result<Vec<_>, _>>()?;
            let prefactor = match self.prefactor {
                Prefactor::Polarised => GradientPrefactor::Polarised,
                Prefactor::Printed => GradientPrefactor::Printed,
            };
            let c = functional_derivative_check(s, &hs, self.step, prefactor)?;
            body["result"] = json!(c);
            return Ok(Report {
                body,
                status: Status::from_checks(c.rel_gap <= 1e-4, false),
            });
        }
        Err(CliError::Parameter("choose one of --partition, --correlator K, --fd-check K".into()))
    }
}

#[derive(Args, Debug)]
pub struct Sample {
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha2: f64,
    #[arg(long, default_value_t = 1024)]
    grid: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV path dumps (`t,xi`).
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    dump_count: usize,
    /// Cross-ratio points `s:t`, rounded to grid nodes.
    #[arg(long, value_delimiter = ',', default_value = "0.1:0.4,0.25:0.75,0.5:0.6")]
    pairs: Vec<String>,
}

impl Sample {
    fn parse_pairs(&self) -> Result<Vec<(usize, usize)>, CliError> {
        let n = self.grid as f64;
        self.pairs
            .iter()
            .map(|p| {
                let (s, t) = p
                    .split_once(':')
                    .ok_or_else(|| CliError::Parameter(format!("pair {p:?} is not s:t")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| (0.0..1.0).contains(v))
                        .ok_or_else(|| CliError::Parameter(format!("pair {p:?}: {x:?} is not in [0, 1)")))
                };
                let (s, t) = ((parse(s)? * n).round() as usize, (parse(t)? * n).round() as usize);
                if s == t {
                    return Err(CliError::Parameter(format!("pair {p:?} collapses to one grid node")));
                }
                Ok((s.min(t), s.max(t)))
            })
            .collect()
    }

    pub fn run(&self, g: &Globals) -> Result<Report, CliError> {
        let p = params(self.alpha2, self.sigma2)?;
        let exact = partition_ratio_exact(&p)?;
        if self.grid < 2 {
            return Err(CliError::Parameter("--grid must be at least 2".into()));
        }
        let pairs = self.parse_pairs()?;
        let k = pairs.len();
        let grid = self.grid;
        // π √(φ'(s) φ'(t)) / sin(π (φ(t) − φ(s))) on the nodes.
        let cross = move |phi: &orbital_core::CircleDiffeo, s: usize, t: usize| {
            let (x, d) = (phi.phi_nodes(), phi.dphi_nodes());
            PI * (d[s] * d[t]).sqrt() / (PI * (x[t] - x[s])).sin()
        };
        let est = estimate_vec(
            1 + 2 * k,
            |rng, out| {
                let mut xi = vec![0.0; grid + 1];
                fill_bridge(&mut xi, p.sigma2, 0.0, 1.0, rng);
                let phi = ms_map(GridPath::new(xi, 1.0)?, 0.0)?;
                let w = weight_alpha(&phi, &p)?;
                out[0] = w;
                for (i, &(s, t)) in pairs.iter().enumerate() {
                    let c = cross(&phi, s, t);
                    out[1 + i] = c;
                    out[1 + k + i] = w * c;
                }
                Ok(())
            },
            DOMAIN_SAMPLE,
            &g.mc(self.samples, self.seed),
        )?;
        let rows: Vec<Value> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, t))| {
                json!({
                    "s": s as f64 / grid as f64,
                    "t": t as f64 / grid as f64,
                    "bridge_mean": est[1 + i],
                    "weighted_numerator": est[1 + k + i],
                    "orbital_mean": est[1 + k + i].mean / est[0].mean,
                })
            })
            .collect();

        let mut dumps = Vec::new();
        if let Some(dir) = &self.dump_dir {
            std::fs::create_dir_all(dir)?;
            for i in 0..self.dump_count {
                let mut rng = stream(self.seed, DOMAIN_DUMP, i as u64);
                let mut xi = vec![0.0; grid + 1];
                fill_bridge(&mut xi, p.sigma2, 0.0, 1.0, &mut rng);
                let path = GridPath::new(xi, 1.0)?;
                let phi = ms_map(path.clone(), 0.0)?;
                let file = format!("path_{i:04}.csv");
                std::fs::write(dir.join(&file), path.to_csv())?;
                dumps.push(json!({ "file": file, "weight": weight_alpha(&phi, &p)?, "energy": phi.energy() }));
            }
        }
        let unreliable = est.iter().any(|e| e.unreliable);
        let body = json!({
            "identity": "cross-ratio pi sqrt(phi'(s) phi'(t)) / sin(pi (phi(t) - phi(s))) under the bridge and alpha-orbital measures",
            "params": {
                "alpha2": self.alpha2, "sigma2": self.sigma2, "grid": grid, "samples": self.samples,
                "chunks": g.chunks, "pairs": self.pairs, "dump_count": self.dump_count,
            },
            "seed": self.seed,
            "grid": grid,
            "weight": est[0],
            "weight_exact": exact,
            "weight_z": est[0].z_against(exact),
            "cross_ratio": rows,
            "csv_columns": ["t", "xi"],
            "dumps": dumps,
        });
        Ok(Report {
            body,
            status: Status::from_checks(true, unreliable),
        })
    }
}
