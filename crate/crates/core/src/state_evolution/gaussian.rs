//! Expectations over the effective scalar channel of one section.
//!
//! With effective noise `Σ²` and the correct position at index 1, the
//! posterior weight of a wrong position `j` relative to the correct one is
//! `exp(x_j)` with `x_j = -ln(B)/Σ² + √ln(B)/Σ · (z_j - z_1)`, z i.i.d. standard
//! normal. Every quantity below is a function of the `B-1` differences `z_j - z_1`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::integrate;
use crate::error::{invalid, Result};
use crate::rng::{stream, Rng, StreamKind};

/// A Monte Carlo (or quadrature, with zero error) estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, stderr: 0.0 }
    }
}

/// Channel quantities at one effective noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMoments {
    pub sigma2: f64,
    /// `E[(f_11 - 1)² + Σ_j f_j1²]`.
    pub mse: Estimate,
    /// `1 - E[f_11]`.
    pub mse_overlap: Estimate,
    /// Difference of the two forms above, estimated sample by sample.
    pub form_gap: Estimate,
    /// Probability that some wrong position beats the correct one.
    pub ser: Estimate,
    /// `E ln(1 + Σ_j exp(x_j))`; the potential adds `ln(B)/(2Σ²)` to it.
    pub log_partition: Estimate,
}

pub(crate) type Statistic<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

/// Distribution of the differences `z_j - z_1`, `j = 2..B`.
pub trait GaussianExpectation: Send + Sync {
    fn section_size(&self) -> usize;

    /// Expectations of the `k` outputs of `f`. `breaks` are points (in units of
    /// `z_j - z_1`) where `f` may jump; quadrature splits there.
    fn expect(&self, k: usize, f: Statistic<'_>, breaks: &[f64]) -> Vec<Estimate>;

    /// Number of Monte Carlo samples, `None` for quadrature.
    fn samples(&self) -> Option<usize>;
}

/// Anything able to produce [`ChannelMoments`].
pub trait EffectiveChannel: Send + Sync {
    fn section_size(&self) -> usize;
    fn moments(&self, sigma2: f64) -> ChannelMoments;
}

impl<T: GaussianExpectation + ?Sized> EffectiveChannel for T {
    fn section_size(&self) -> usize {
        GaussianExpectation::section_size(self)
    }

    fn moments(&self, sigma2: f64) -> ChannelMoments {
        channel_moments(self, sigma2)
    }
}

fn exponents(b: usize, sigma2: f64) -> (f64, f64) {
    let ln_b = (b as f64).ln();
    (ln_b / sigma2, (ln_b / sigma2).sqrt())
}

/// Evaluates the per-sample quantities of [`ChannelMoments`] into `out[0..5]`.
fn section_statistics(dz: &[f64], a: f64, s: f64, out: &mut [f64]) {
    let mut max = 0.0f64;
    for &d in dz {
        max = max.max(-a + s * d);
    }
    let own = (-max).exp();
    let mut wrong = 0.0;
    let mut wrong_sq = 0.0;
    for &d in dz {
        let x = -a + s * d - max;
        // exp(-40) is below double precision relative to the leading term.
        if x > -40.0 {
            let e = x.exp();
            wrong += e;
            wrong_sq += e * e;
        }
    }
    let total = own + wrong;
    let miss = wrong / total;
    let sq = miss * miss + wrong_sq / (total * total);
    out[0] = sq;
    out[1] = miss;
    out[2] = if max > 0.0 { 1.0 } else { 0.0 };
    out[3] = max + total.ln();
    out[4] = sq - miss;
}

pub(crate) fn channel_moments<G: GaussianExpectation + ?Sized>(g: &G, sigma2: f64) -> ChannelMoments {
    let (a, s) = exponents(g.section_size(), sigma2);
    let f = move |dz: &[f64], out: &mut [f64]| section_statistics(dz, a, s, out);
    let brk = if s > 0.0 { vec![a / s] } else { vec![] };
    let e = g.expect(5, &f, &brk);
    ChannelMoments {
        sigma2,
        mse: e[0],
        mse_overlap: e[1],
        ser: e[2],
        log_partition: e[3],
        form_gap: e[4],
    }
}

/// `E ln(1 + Σ exp(x_j))` at `sigma2_hi` minus the same at `sigma2_lo`, paired sample by sample.
pub fn log_partition_difference<G: GaussianExpectation + ?Sized>(g: &G, sigma2_hi: f64, sigma2_lo: f64) -> Estimate {
    let (a1, s1) = exponents(g.section_size(), sigma2_hi);
    let (a0, s0) = exponents(g.section_size(), sigma2_lo);
    let f = move |dz: &[f64], out: &mut [f64]| {
        let mut buf = [0.0; 5];
        section_statistics(dz, a1, s1, &mut buf);
        let hi = buf[3];
        section_statistics(dz, a0, s0, &mut buf);
        out[0] = hi - buf[3];
    };
    g.expect(1, &f, &[a1 / s1, a0 / s0])[0]
}

/// `f_{1|1}`: posterior weight of the correct position.
pub fn f_correct(sigma2: f64, z: &[f64]) -> Result<f64> {
    let (num, den) = weights(sigma2, z, 0)?;
    Ok(num / den)
}

/// `f_{2|1}`: posterior weight of the first wrong position.
pub fn f_wrong(sigma2: f64, z: &[f64]) -> Result<f64> {
    let (num, den) = weights(sigma2, z, 1)?;
    Ok(num / den)
}

fn weights(sigma2: f64, z: &[f64], which: usize) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) {
        return Err(invalid(format!("effective noise must be positive, got {sigma2}")));
    }
    if z.len() < 2 {
        return Err(invalid("need at least two positions"));
    }
    let (a, s) = exponents(z.len(), sigma2);
    let x: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(j, &zj)| if j == 0 { 0.0 } else { -a + s * (zj - z[0]) })
        .collect();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let den: f64 = x.iter().map(|v| (v - max).exp()).sum();
    Ok(((x[which] - max).exp(), den))
}

/// Exact one-dimensional path for `B = 2`, where `z_2 - z_1 = √2 u`, `u ~ N(0,1)`.
#[derive(Debug, Clone, Default)]
pub struct QuadratureChannel;

const QUAD_RANGE: f64 = 12.0;

impl GaussianExpectation for QuadratureChannel {
    fn section_size(&self) -> usize {
        2
    }

    fn expect(&self, k: usize, f: Statistic<'_>, breaks: &[f64]) -> Vec<Estimate> {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let g = |u: f64, out: &mut [f64]| {
            let d = [std::f64::consts::SQRT_2 * u];
            f(&d, out);
            let w = norm * (-0.5 * u * u).exp();
            for o in out.iter_mut() {
                *o *= w;
            }
        };
        let ubreaks: Vec<f64> = breaks.iter().map(|b| b / std::f64::consts::SQRT_2).collect();
        integrate(&g, k, -QUAD_RANGE, QUAD_RANGE, &ubreaks, 1e-16, 1e-12)
            .into_iter()
            .map(Estimate::exact)
            .collect()
    }

    fn samples(&self) -> Option<usize> {
        None
    }
}

const BATCH_PAIRS: usize = 1024;
const CACHE_LIMIT: usize = 1 << 23;

/// Monte Carlo over antithetic pairs `(z_1, z_rest)`, `(-z_1, z_rest)`.
///
/// The same draws are reused for every evaluation (common random numbers),
/// so curves in `Σ²` are smooth and differences have small variance.
pub struct MonteCarloChannel {
    b: usize,
    pairs: usize,
    seed: u64,
    cache: Option<Vec<f64>>,
}

impl MonteCarloChannel {
    /// `samples` counts individual draws; they are used in antithetic pairs.
    pub fn new(b: usize, samples: usize, seed: u64) -> Result<Self> {
        if b < 2 {
            return Err(invalid("section size must be at least 2"));
        }
        if samples < 2 {
            return Err(invalid("need at least two Monte Carlo samples"));
        }
        let pairs = samples.div_ceil(2);
        let mut ch = Self {
            b,
            pairs,
            seed,
            cache: None,
        };
        if pairs.saturating_mul(b) <= CACHE_LIMIT {
            let mut all = Vec::with_capacity(pairs * b);
            for k in 0..ch.batches() {
                all.extend(ch.draw_batch(k));
            }
            ch.cache = Some(all);
        }
        Ok(ch)
    }

    fn batches(&self) -> usize {
        self.pairs.div_ceil(BATCH_PAIRS)
    }

    fn batch_len(&self, k: usize) -> usize {
        BATCH_PAIRS.min(self.pairs - k * BATCH_PAIRS)
    }

    fn draw_batch(&self, k: usize) -> Vec<f64> {
        let mut rng: Rng = stream(self.seed, k as u64, StreamKind::MonteCarlo);
        (0..self.batch_len(k) * self.b)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

impl GaussianExpectation for MonteCarloChannel {
    fn section_size(&self) -> usize {
        self.b
    }

    fn expect(&self, k: usize, f: Statistic<'_>, _breaks: &[f64]) -> Vec<Estimate> {
        let b = self.b;
        let partial: Vec<Vec<(f64, f64)>> = (0..self.batches())
            .into_par_iter()
            .map(|batch| {
                let owned;
                let z: &[f64] = match &self.cache {
                    Some(all) => {
                        let start = batch * BATCH_PAIRS * b;
                        &all[start..start + self.batch_len(batch) * b]
                    }
                    None => {
                        owned = self.draw_batch(batch);
                        &owned
                    }
                };
                let mut acc = vec![(0.0, 0.0); k];
                let mut dz = vec![0.0; b - 1];
                let mut o1 = vec![0.0; k];
                let mut o2 = vec![0.0; k];
                for pair in z.chunks_exact(b) {
                    let z1 = pair[0];
                    for (d, &zj) in dz.iter_mut().zip(&pair[1..]) {
                        *d = zj - z1;
                    }
                    f(&dz, &mut o1);
                    for (d, &zj) in dz.iter_mut().zip(&pair[1..]) {
                        *d = zj + z1;
                    }
                    f(&dz, &mut o2);
                    for q in 0..k {
                        let m = 0.5 * (o1[q] + o2[q]);
                        acc[q].0 += m;
                        acc[q].1 += m * m;
                    }
                }
                acc
            })
            .collect();
        let n = self.pairs as f64;
        (0..k)
            .map(|q| {
                let (s, s2) = partial
                    .iter()
                    .fold((0.0, 0.0), |(a, b), p| (a + p[q].0, b + p[q].1));
                let mean = s / n;
                let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
                Estimate {
                    mean,
                    stderr: (var / n).sqrt(),
                }
            })
            .collect()
    }

    fn samples(&self) -> Option<usize> {
        Some(2 * self.pairs)
    }
}

/// The default expectation engine: quadrature for `B = 2`, Monte Carlo otherwise.
pub fn default_expectation(b: usize, mc_samples: usize, seed: u64) -> Result<Box<dyn GaussianExpectation>> {
    if b == 2 {
        Ok(Box::new(QuadratureChannel))
    } else {
        Ok(Box::new(MonteCarloChannel::new(b, mc_samples, seed)?))
    }
}

/// Channel moments tabulated on a log grid of `Σ²` and linearly interpolated.
///
/// Long state-evolution runs (threshold searches) call this instead of the
/// underlying expectation. Outside the grid the end values are held.
pub struct TabulatedChannel {
    b: usize,
    log_lo: f64,
    step: f64,
    rows: Vec<ChannelMoments>,
}

impl TabulatedChannel {
    pub fn build<G: GaussianExpectation + ?Sized>(g: &G, sigma2_lo: f64, sigma2_hi: f64, points: usize) -> Result<Self> {
        if !(sigma2_lo > 0.0 && sigma2_hi > sigma2_lo) || points < 2 {
            return Err(invalid("table needs 0 < lo < hi and at least two points"));
        }
        let log_lo = sigma2_lo.ln();
        let step = (sigma2_hi.ln() - log_lo) / (points - 1) as f64;
        let rows = (0..points)
            .map(|k| channel_moments(g, (log_lo + step * k as f64).exp()))
            .collect();
        Ok(Self {
            b: g.section_size(),
            log_lo,
            step,
            rows,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (
            self.log_lo.exp(),
            (self.log_lo + self.step * (self.rows.len() - 1) as f64).exp(),
        )
    }
}

fn lerp(a: Estimate, b: Estimate, t: f64) -> Estimate {
    Estimate {
        mean: a.mean + t * (b.mean - a.mean),
        stderr: a.stderr + t * (b.stderr - a.stderr),
    }
}

// Error-like quantities fall off exponentially at small noise; interpolate their logarithm.
fn lerp_log(a: Estimate, b: Estimate, t: f64) -> Estimate {
    if a.mean > 0.0 && b.mean > 0.0 {
        Estimate {
            mean: (a.mean.ln() + t * (b.mean.ln() - a.mean.ln())).exp(),
            stderr: a.stderr + t * (b.stderr - a.stderr),
        }
    } else {
        lerp(a, b, t)
    }
}

impl EffectiveChannel for TabulatedChannel {
    fn section_size(&self) -> usize {
        self.b
    }

    fn moments(&self, sigma2: f64) -> ChannelMoments {
        let x = ((sigma2.ln() - self.log_lo) / self.step).clamp(0.0, (self.rows.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.rows.len() - 2);
        let t = x - k as f64;
        let (p, q) = (&self.rows[k], &self.rows[k + 1]);
        ChannelMoments {
            sigma2,
            mse: lerp_log(p.mse, q.mse, t),
            mse_overlap: lerp_log(p.mse_overlap, q.mse_overlap, t),
            form_gap: lerp(p.form_gap, q.form_gap, t),
            ser: lerp_log(p.ser, q.ser, t),
            log_partition: lerp(p.log_partition, q.log_partition, t),
        }
    }
}
