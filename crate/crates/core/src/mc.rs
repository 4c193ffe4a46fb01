//! Chunked, reproducible Monte Carlo estimation.
//!
//! Work is split into a fixed number of chunks before execution. Chunk `c`
//! draws from a ChaCha8 stream keyed on `(seed, domain)` with stream id `c`,
//! accumulates one-pass statistics, and the chunk summaries are merged in
//! chunk order. The result therefore depends on `(seed, n_samples,
//! n_chunks)` only, not on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{fill_bridge, levy_refine, GridPath};
use crate::error::{Error, Result};

pub type Stream = ChaCha8Rng;

/// Default importance-sampling degeneracy threshold.
pub const WEIGHT_FRACTION_THRESHOLD: f64 = 0.05;

/// Stream for chunk `chunk` of an estimation labelled by `domain`.
pub fn stream(seed: u64, domain: u64, chunk: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(chunk);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub n_chunks: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the global rayon pool.
    pub workers: usize,
    pub weight_threshold: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            n_chunks: 64,
            seed: 0,
            workers: 0,
            weight_threshold: WEIGHT_FRACTION_THRESHOLD,
        }
    }
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            ..Self::default()
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_chunks(mut self, n_chunks: usize) -> Self {
        self.n_chunks = n_chunks;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Parameter(format!("need at least 2 samples, got {}", self.n_samples)));
        }
        if self.n_chunks == 0 {
            return Err(Error::Parameter("need at least one chunk".into()));
        }
        Ok(())
    }

    /// Sample index range of chunk `c`.
    fn chunk_range(&self, c: usize) -> (usize, usize) {
        let k = self.n_chunks.min(self.n_samples);
        let base = self.n_samples / k;
        let extra = self.n_samples % k;
        let start = c * base + c.min(extra);
        let len = base + usize::from(c < extra);
        (start, start + len)
    }
}

/// Mean, standard error and weight diagnostics of one Monte Carlo functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    /// `max |v| / Σ |v|` over the samples.
    pub max_weight_fraction: f64,
    pub unreliable: bool,
}

impl MCEstimate {
    /// `|self − other| / √(se₁² + se₂²)`; zero when both are exact and equal.
    pub fn z_score(&self, other: &MCEstimate) -> f64 {
        let gap = (self.mean - other.mean).abs();
        let se = self.stderr.hypot(other.stderr);
        if gap == 0.0 {
            0.0
        } else {
            gap / se
        }
    }

    /// `|mean − target| / stderr`.
    pub fn z_against(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.stderr
        }
    }

    /// The estimate scaled by a constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mean: self.mean * c,
            stderr: self.stderr * c.abs(),
            ..*self
        }
    }
}

/// One-pass mean/variance accumulator with Chan's merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
    pub abs_sum: f64,
    pub abs_max: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.abs_sum += x.abs();
        self.abs_max = self.abs_max.max(x.abs());
    }

    pub fn merge(&self, other: &Welford) -> Welford {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Welford {
            n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * w,
            abs_sum: self.abs_sum + other.abs_sum,
            abs_max: self.abs_max.max(other.abs_max),
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn finish(&self, seed: u64, threshold: f64) -> MCEstimate {
        let fraction = if self.abs_sum > 0.0 { self.abs_max / self.abs_sum } else { 0.0 };
        MCEstimate {
            mean: self.mean,
            stderr: (self.variance() / self.n as f64).sqrt(),
            n: self.n,
            seed,
            max_weight_fraction: fraction,
            unreliable: fraction > threshold,
        }
    }
}

fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Estimates `dim` functionals of a common sample.
///
/// `draw(rng, out)` consumes randomness from the chunk stream and writes the
/// `dim` functional values of one sample into `out`. `domain` separates the
/// streams of unrelated estimations that share a seed.
pub fn estimate_vec<F>(dim: usize, draw: F, domain: u64, cfg: &McConfig) -> Result<Vec<MCEstimate>>
where
    F: Fn(&mut Stream, &mut [f64]) -> Result<()> + Sync,
{
    cfg.validate()?;
    let chunks = cfg.n_chunks.min(cfg.n_samples);
    let per_chunk: Vec<Result<Vec<Welford>>> = run_pool(cfg.workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let (start, end) = cfg.chunk_range(c);
                let mut rng = stream(cfg.seed, domain, c as u64);
                let mut acc = vec![Welford::default(); dim];
                let mut out = vec![0.0; dim];
                for index in start..end {
                    draw(&mut rng, &mut out)?;
                    for (a, &v) in acc.iter_mut().zip(&out) {
                        if !v.is_finite() {
                            return Err(Error::NonFinite { chunk: c, index, value: v });
                        }
                        a.push(v);
                    }
                }
                Ok(acc)
            })
            .collect()
    })?;
    let mut total = vec![Welford::default(); dim];
    for chunk in per_chunk {
        let chunk = chunk?;
        for (t, c) in total.iter_mut().zip(&chunk) {
            *t = t.merge(c);
        }
    }
    Ok(total
        .iter()
        .map(|w| w.finish(cfg.seed, cfg.weight_threshold))
        .collect())
}

/// Scalar version of [`estimate_vec`].
pub fn estimate<F>(draw: F, domain: u64, cfg: &McConfig) -> Result<MCEstimate>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync,
{
    let mut v = estimate_vec(
        1,
        |rng, out| {
            out[0] = draw(rng)?;
            Ok(())
        },
        domain,
        cfg,
    )?;
    Ok(v.remove(0))
}

/// Produces coupled paths on grids `N` and `2N` over `[0, 1]`.
pub trait PairedSampler: Sync {
    fn coarse_n(&self) -> usize;
    fn draw(&self, rng: &mut Stream, coarse: &mut [f64], fine: &mut [f64]);
}

/// Bridge at `N` refined to `2N` by conditional midpoint sampling, so both
/// grids see the same underlying path.
#[derive(Debug, Clone, Copy)]
pub struct LevyPairs {
    pub sigma2: f64,
    pub a: f64,
    pub n: usize,
}

impl PairedSampler for LevyPairs {
    fn coarse_n(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut Stream, coarse: &mut [f64], fine: &mut [f64]) {
        fill_bridge(coarse, self.sigma2, self.a, 1.0, rng);
        levy_refine(coarse, fine, self.sigma2, 1.0, rng);
    }
}

/// A fixed path sampled at both grids; no randomness.
pub struct DeterministicPairs<F> {
    pub path: F,
    pub n: usize,
}

impl<F: Fn(f64) -> f64 + Sync> PairedSampler for DeterministicPairs<F> {
    fn coarse_n(&self) -> usize {
        self.n
    }

    fn draw(&self, _rng: &mut Stream, coarse: &mut [f64], fine: &mut [f64]) {
        let n = self.n;
        let f0 = (self.path)(0.0);
        for (i, v) in coarse.iter_mut().enumerate() {
            *v = (self.path)(i as f64 / n as f64) - f0;
        }
        for (i, v) in fine.iter_mut().enumerate() {
            *v = (self.path)(i as f64 / (2 * n) as f64) - f0;
        }
    }
}

/// Paired estimates at `N` and `2N` with first-order Richardson
/// extrapolation `2 est_2N − est_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasProbe {
    pub est_n: MCEstimate,
    pub est_2n: MCEstimate,
    /// Per-sample `f(fine) − f(coarse)`.
    pub difference: MCEstimate,
    /// Per-sample `2 f(fine) − f(coarse)`.
    pub richardson: MCEstimate,
}

pub fn bias_probe<F, S>(functional: F, sampler: &S, domain: u64, cfg: &McConfig) -> Result<BiasProbe>
where
    F: Fn(&GridPath) -> Result<f64> + Sync,
    S: PairedSampler,
{
    let n = sampler.coarse_n();
    let coarse_template = GridPath::zeros(n, 1.0)?;
    let fine_template = GridPath::zeros(2 * n, 1.0)?;
    let est = estimate_vec(
        4,
        |rng, out| {
            let mut coarse = coarse_template.clone();
            let mut fine = fine_template.clone();
            sampler.draw(rng, coarse.values_mut(), fine.values_mut());
            let a = functional(&coarse)?;
            let b = functional(&fine)?;
            out.copy_from_slice(&[a, b, b - a, 2.0 * b - a]);
            Ok(())
        },
        domain,
        cfg,
    )?;
    Ok(BiasProbe {
        est_n: est[0],
        est_2n: est[1],
        difference: est[2],
        richardson: est[3],
    })
}
