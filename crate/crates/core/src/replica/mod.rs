//! Replica potential `Φ_B(E)`, its large-`B` limit, and the thresholds read off it.
//!
//! At finite `B`
//! `Φ_B(E) = -ln(B)/(2R ln2) [ln x + (1-E)/x] + ln(B)/(2Σ²) + E ln(1 + Σ_j exp(x_j))`
//! with `x = 1/snr + E` and `Σ² = R ln2 x`. Its stationary points are the
//! fixed points of state evolution.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::state_evolution::{
    default_expectation, log_partition_difference, EffectiveChannel, Estimate,
    GaussianExpectation, MonteCarloChannel, QuadratureChannel, SEParams, StateEvolution,
    TabulatedChannel,
};

/// Capacity of the power-constrained AWGN channel, bits per channel use.
pub fn capacity(snr: f64) -> Result<f64> {
    check_snr(snr)?;
    Ok((1.0 + snr).log2() / 2.0)
}

/// Asymptotic (`B → ∞`) rate below which AMP decodes without coupling or power allocation.
pub fn r_bp_infinity(snr: f64) -> Result<f64> {
    check_snr(snr)?;
    Ok(1.0 / ((1.0 / snr + 1.0) * 2.0 * LN_2))
}

fn check_snr(snr: f64) -> Result<()> {
    if snr > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("snr must be positive, got {snr}")))
    }
}

/// `-[ln x + (1-E)/x]` with `x = 1/snr + E`, shared by both potentials.
fn energy(e: f64, snr: f64) -> f64 {
    let x = 1.0 / snr + e;
    -(x.ln() + (1.0 - e) / x)
}

/// Effective noise of the potential, `R ln2 (1/snr + E)`.
pub fn sigma2(e: f64, rate: f64, snr: f64) -> f64 {
    rate * LN_2 * (1.0 / snr + e)
}

/// Large-`B` potential (per bit), deterministic.
pub fn potential_large_b(e: f64, rate: f64, snr: f64) -> f64 {
    energy(e, snr) / (2.0 * rate * LN_2) + f64::max(1.0, 1.0 / (2.0 * sigma2(e, rate, snr)))
}

/// Rate at which `E = 1` turns into a local maximum of [`potential_large_b`],
/// located numerically by bisection.
pub fn large_b_stability_boundary(snr: f64) -> Result<f64> {
    let c = capacity(snr)?;
    let h = 1e-10;
    // E = 1 is a local maximum when the potential does not rise towards smaller E.
    let is_max = |r: f64| {
        let slope = (potential_large_b(1.0, r, snr) - potential_large_b(1.0 - h, r, snr)) / h;
        slope > -1e-3
    };
    let (mut lo, mut hi) = (1e-9, 4.0 * c.max(r_bp_infinity(snr)?));
    if is_max(lo) || !is_max(hi) {
        return Err(invalid("no stability boundary in the bracketed rates"));
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if is_max(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finite-`B` potential bound to one expectation engine.
///
/// All evaluations reuse the same draws, so differences in `E` and in `R`
/// carry much less noise than the individual values.
pub struct Potential {
    b: usize,
    rate: f64,
    snr: f64,
    expectation: Box<dyn GaussianExpectation>,
}

impl Potential {
    /// Quadrature for `B = 2`, Monte Carlo otherwise.
    pub fn new(b: usize, rate: f64, snr: f64, mc_samples: usize, seed: u64) -> Result<Self> {
        Self::with_expectation(b, rate, snr, default_expectation(b, mc_samples, seed)?)
    }

    pub fn with_expectation(
        b: usize,
        rate: f64,
        snr: f64,
        expectation: Box<dyn GaussianExpectation>,
    ) -> Result<Self> {
        SEParams::new(b, rate, snr)?;
        if expectation.section_size() != b {
            return Err(invalid("expectation engine has a different section size"));
        }
        Ok(Self {
            b,
            rate,
            snr,
            expectation,
        })
    }

    pub fn set_rate(&mut self, rate: f64) -> Result<()> {
        SEParams::new(self.b, rate, self.snr)?;
        self.rate = rate;
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn samples(&self) -> Option<usize> {
        self.expectation.samples()
    }

    fn ln_b(&self) -> f64 {
        (self.b as f64).ln()
    }

    /// Everything except the Gaussian expectation.
    fn deterministic(&self, e: f64) -> f64 {
        let s2 = sigma2(e, self.rate, self.snr);
        self.ln_b() / (2.0 * self.rate * LN_2) * energy(e, self.snr) + self.ln_b() / (2.0 * s2)
    }

    /// `deterministic(e1) - deterministic(e0)` without cancellation.
    fn deterministic_difference(&self, e1: f64, e0: f64) -> f64 {
        let d = e1 - e0;
        let x0 = 1.0 / self.snr + e0;
        let x1 = 1.0 / self.snr + e1;
        let energy = -((d / x0).ln_1p() - d * (1.0 + 1.0 / self.snr) / (x0 * x1));
        let kappa = self.rate * LN_2;
        self.ln_b() / (2.0 * kappa) * (energy - d / (x0 * x1))
    }

    pub fn value(&self, e: f64) -> Result<Estimate> {
        check_e(e)?;
        let m = self.expectation.moments(sigma2(e, self.rate, self.snr));
        Ok(Estimate {
            mean: self.deterministic(e) + m.log_partition.mean,
            stderr: m.log_partition.stderr,
        })
    }

    /// `Φ(e1) - Φ(e0)` from paired samples.
    pub fn difference(&self, e1: f64, e0: f64) -> Result<Estimate> {
        check_e(e1)?;
        check_e(e0)?;
        let d = log_partition_difference(
            self.expectation.as_ref(),
            sigma2(e1, self.rate, self.snr),
            sigma2(e0, self.rate, self.snr),
        );
        Ok(Estimate {
            mean: self.deterministic_difference(e1, e0) + d.mean,
            stderr: d.stderr,
        })
    }

    /// Centered finite-difference slope `dΦ/dE` with step `h`.
    pub fn slope(&self, e: f64, h: f64) -> Result<Estimate> {
        if !(h > 0.0) || e - h < 0.0 {
            return Err(invalid(format!("finite-difference step {h} does not fit at E={e}")));
        }
        let d = self.difference(e + h, e - h)?;
        Ok(Estimate {
            mean: d.mean / (2.0 * h),
            stderr: d.stderr / (2.0 * h),
        })
    }

    pub fn curve(&self, grid: &[f64]) -> Result<PotentialCurve> {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("E grid must be strictly increasing"));
        }
        let phi: Vec<Estimate> = grid
            .par_iter()
            .map(|&e| self.value(e))
            .collect::<Result<_>>()?;
        let maxima = local_maxima(grid, &phi);
        Ok(PotentialCurve {
            e_grid: grid.to_vec(),
            phi,
            mc_samples: self.samples(),
            maxima,
        })
    }
}

fn check_e(e: f64) -> Result<()> {
    if e >= 0.0 && e.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("MSE must be non-negative, got {e}")))
    }
}

/// `Φ_B(E)` with its standard error.
pub fn potential(e: f64, b: usize, rate: f64, snr: f64, mc_samples: usize, seed: u64) -> Result<Estimate> {
    Potential::new(b, rate, snr, mc_samples, seed)?.value(e)
}

/// 400 points: log-spaced on `[1e-8, 1e-2]`, then linear up to 1.2.
pub fn default_e_grid() -> Vec<f64> {
    e_grid(400)
}

/// `n` points, three eighths log-spaced on `[1e-8, 1e-2]` and the rest linear on `[1e-2, 1.2]`.
pub fn e_grid(n: usize) -> Vec<f64> {
    let n_log = (3 * n / 8).max(1);
    let n_lin = n.saturating_sub(n_log).max(2);
    let mut g: Vec<f64> = (0..n_log)
        .map(|k| 10f64.powf(-8.0 + 6.0 * k as f64 / n_log as f64))
        .collect();
    g.extend((0..n_lin).map(|k| 1e-2 + (1.2 - 1e-2) * k as f64 / (n_lin - 1) as f64));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCurve {
    pub e_grid: Vec<f64>,
    pub phi: Vec<Estimate>,
    /// `None` when the expectation is exact.
    pub mc_samples: Option<usize>,
    /// `(E*, Φ*)` of every local maximum of the sampled curve, in increasing `E`.
    pub maxima: Vec<(f64, f64)>,
}

impl PotentialCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,phi,stderr\n");
        for (e, p) in self.e_grid.iter().zip(&self.phi) {
            out.push_str(&format!("{e:e},{:.15e},{:e}\n", p.mean, p.stderr));
        }
        out
    }
}

// Draws are shared across the grid, so neighbouring points are compared directly.
fn local_maxima(grid: &[f64], phi: &[Estimate]) -> Vec<(f64, f64)> {
    let n = phi.len();
    (0..n)
        .filter(|&k| {
            let left = k == 0 || phi[k].mean > phi[k - 1].mean;
            let right = k + 1 == n || phi[k].mean > phi[k + 1].mean;
            left && right && n > 1
        })
        .map(|k| (grid[k], phi[k].mean))
        .collect()
}

/// A located phase transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Rate(f64),
    /// A single maximum at every rate up to capacity.
    NoTransition,
}

impl Threshold {
    pub fn rate(&self) -> Option<f64> {
        match self {
            Threshold::Rate(r) => Some(*r),
            Threshold::NoTransition => None,
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Rate(r) => write!(f, "{r}"),
            Threshold::NoTransition => f.write_str("none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Draws for `B > 2`; `B = 2` uses quadrature.
    pub mc_samples: usize,
    pub seed: u64,
    /// Bisection stops once the bracket is this narrow.
    pub resolution: f64,
    /// Coarse rate scan over `(0, C]` before bisection.
    pub scan_points: usize,
    /// Grid size of the tabulated channel used by state evolution for `B > 2`.
    pub table_points: usize,
    pub t_max: usize,
    pub tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            mc_samples: 200_000,
            seed: 0,
            resolution: 1e-3,
            scan_points: 64,
            table_points: 200,
            t_max: 50_000,
            tol: 1e-12,
        }
    }
}

/// Both fixed points reached by state evolution at one rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoints {
    pub rate: f64,
    /// Reached from `E = 0`.
    pub low: f64,
    /// Reached from `E = 1`.
    pub high: f64,
}

impl FixedPoints {
    pub fn coincide(&self) -> bool {
        (self.high - self.low).abs() <= 1e-2 * self.low.abs() + 1e-10
    }
}

/// Threshold search for one `(B, snr)`.
pub struct ThresholdSearch {
    b: usize,
    snr: f64,
    cfg: ThresholdConfig,
    se: StateEvolution,
    potential: Potential,
}

impl ThresholdSearch {
    pub fn new(b: usize, snr: f64, cfg: ThresholdConfig) -> Result<Self> {
        let c = capacity(snr)?;
        let base = SEParams::new(b, c, snr)?;
        if cfg.scan_points < 2 || !(cfg.resolution > 0.0) || cfg.t_max < 1 {
            return Err(invalid("threshold search needs two scan points, a positive resolution and t_max >= 1"));
        }
        let (se, potential) = if b == 2 {
            (
                StateEvolution::with_channel(base, Box::new(QuadratureChannel))?,
                Potential::with_expectation(b, c, snr, Box::new(QuadratureChannel))?,
            )
        } else {
            let mc = MonteCarloChannel::new(b, cfg.mc_samples, cfg.seed)?;
            let r_min = c / cfg.scan_points as f64;
            let lo = 0.5 * sigma2(0.0, r_min, snr);
            let hi = 2.0 * sigma2(1.2, c, snr);
            let table = TabulatedChannel::build(&mc, lo, hi, cfg.table_points)?;
            (
                StateEvolution::with_channel(base.with_samples(cfg.mc_samples, cfg.seed)?, Box::new(table))?,
                Potential::with_expectation(b, c, snr, Box::new(mc))?,
            )
        };
        Ok(Self {
            b,
            snr,
            cfg,
            se,
            potential,
        })
    }

    pub fn section_size(&self) -> usize {
        self.b
    }

    pub fn fixed_points(&mut self, rate: f64) -> Result<FixedPoints> {
        self.se.set_rate(rate)?;
        let (t, tol) = (self.cfg.t_max, self.cfg.tol);
        let low = self.se.run_from(&[0.0], t, tol)?.last().e[0];
        let high = self.se.run_from(&[1.0], t, tol)?.last().e[0];
        Ok(FixedPoints { rate, low, high })
    }

    /// `Φ(E_low) - Φ(E_high)` at the rate of `fp`.
    pub fn potential_gap(&mut self, fp: &FixedPoints) -> Result<Estimate> {
        self.potential.set_rate(fp.rate)?;
        self.potential.difference(fp.low, fp.high)
    }

    fn decodes(&mut self, rate: f64) -> Result<bool> {
        Ok(self.fixed_points(rate)?.coincide())
    }

    fn low_wins(&mut self, rate: f64) -> Result<bool> {
        let fp = self.fixed_points(rate)?;
        if fp.coincide() {
            // Beyond R_BP a single fixed point is the high-error one.
            return Ok(false);
        }
        Ok(self.potential_gap(&fp)?.mean > 0.0)
    }

    /// Largest rate at which state evolution from `E = 1` reaches the low-error fixed point.
    pub fn r_bp(&mut self) -> Result<Threshold> {
        let c = capacity(self.snr)?;
        let n = self.cfg.scan_points;
        let mut prev = 0.0;
        for k in 1..=n {
            let r = c * k as f64 / n as f64;
            if !self.decodes(r)? {
                if prev == 0.0 {
                    return Err(invalid("state evolution fails at the smallest scanned rate"));
                }
                return self.bisect(prev, r, Self::decodes).map(Threshold::Rate);
            }
            prev = r;
        }
        Ok(Threshold::NoTransition)
    }

    /// Rate where the two maxima of the potential have equal height.
    pub fn r_opt(&mut self, r_bp: Threshold) -> Result<Threshold> {
        let Some(r_bp) = r_bp.rate() else {
            return Ok(Threshold::NoTransition);
        };
        let c = capacity(self.snr)?;
        let mut lo = r_bp + self.cfg.resolution;
        if !self.low_wins(lo)? {
            lo = r_bp;
        }
        if self.low_wins(c)? {
            return Ok(Threshold::Rate(c));
        }
        self.bisect(lo, c, Self::low_wins).map(Threshold::Rate)
    }

    fn bisect(&mut self, mut lo: f64, mut hi: f64, pred: fn(&mut Self, f64) -> Result<bool>) -> Result<f64> {
        while hi - lo > self.cfg.resolution {
            let mid = 0.5 * (lo + hi);
            if pred(self, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn find_r_bp(b: usize, snr: f64, cfg: &ThresholdConfig) -> Result<Threshold> {
    ThresholdSearch::new(b, snr, cfg.clone())?.r_bp()
}

pub fn find_r_opt(b: usize, snr: f64, cfg: &ThresholdConfig) -> Result<Threshold> {
    let mut s = ThresholdSearch::new(b, snr, cfg.clone())?;
    let r_bp = s.r_bp()?;
    s.r_opt(r_bp)
}

/// SER at the low-error fixed point, reached from `E = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerEstimate {
    pub ser: f64,
    pub stderr: f64,
    /// The estimate was zero; `ser` then holds the resolution `1/samples`.
    pub upper_bound: bool,
}

pub fn optimal_ser(b: usize, rate: f64, snr: f64, mc_samples: usize, seed: u64) -> Result<SerEstimate> {
    let p = SEParams::new(b, rate, snr)?.with_samples(mc_samples, seed)?;
    let se = StateEvolution::new(p)?;
    let traj = se.run_from(&[0.0], 10_000, 1e-12)?;
    let m = se.channel().moments(traj.last().sigma2[0]);
    if m.ser.mean == 0.0 && b > 2 {
        return Ok(SerEstimate {
            ser: 1.0 / mc_samples as f64,
            stderr: 0.0,
            upper_bound: true,
        });
    }
    Ok(SerEstimate {
        ser: m.ser.mean,
        stderr: m.ser.stderr,
        upper_bound: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramPoint {
    pub b: usize,
    pub snr: f64,
    pub r_bp: Threshold,
    pub r_opt: Threshold,
    pub capacity: f64,
    /// Optimal SER just below `R_opt`, when a transition exists.
    pub ser_at_low_maximum: Option<SerEstimate>,
}

pub fn phase_diagram_point(b: usize, snr: f64, cfg: &ThresholdConfig) -> Result<PhaseDiagramPoint> {
    let mut s = ThresholdSearch::new(b, snr, cfg.clone())?;
    let r_bp = s.r_bp()?;
    let r_opt = s.r_opt(r_bp)?;
    let ser_at_low_maximum = match r_opt.rate() {
        Some(r) => Some(optimal_ser(b, r - cfg.resolution, snr, cfg.mc_samples, cfg.seed)?),
        None => None,
    };
    Ok(PhaseDiagramPoint {
        b,
        snr,
        r_bp,
        r_opt,
        capacity: capacity(snr)?,
        ser_at_low_maximum,
    })
}

/// One state-evolution fixed point checked against the potential's slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub e_star: f64,
    /// Standard error of `e_star` propagated through the fixed-point map.
    pub e_star_stderr: f64,
    pub slope: Estimate,
    /// Richardson estimate of the finite-difference truncation error.
    pub fd_error: f64,
    pub curvature: f64,
    /// Combined standard deviation of `slope` under the null of exact stationarity.
    pub combined_sd: f64,
}

impl Stationarity {
    pub fn z_score(&self) -> f64 {
        self.slope.mean.abs() / self.combined_sd
    }
}

/// Runs state evolution from `e0` (seed `se_seed`) and measures `dΦ/dE` at the
/// fixed point with independent draws (seed `phi_seed`).
pub fn check_stationarity(params: &SEParams, e0: f64, phi_seed: u64) -> Result<Stationarity> {
    let se = StateEvolution::new(params.clone())?;
    let traj = se.run_from(&[e0], 20_000, 1e-13)?;
    let e_star = traj.last().e[0];
    let pot = Potential::new(params.b, params.rate, params.snr, params.mc_samples, phi_seed)?;

    let h = (1e-3 * e_star).clamp(1e-14, 1e-3);
    let (slope, fd_error, curvature) = if e_star >= 2.0 * h {
        let slope = pot.slope(e_star, h)?;
        let coarse = pot.slope(e_star, 2.0 * h)?;
        let curvature = (pot.difference(e_star + h, e_star)?.mean - pot.difference(e_star, e_star - h)?.mean) / (h * h);
        (slope, (coarse.mean - slope.mean).abs() / 3.0, curvature)
    } else {
        // Fixed point on the boundary E = 0: forward differences, first order.
        let fine = pot.difference(e_star + h, e_star)?;
        let coarse = pot.difference(e_star + 2.0 * h, e_star)?;
        let slope = Estimate {
            mean: fine.mean / h,
            stderr: fine.stderr / h,
        };
        let curvature = (coarse.mean - 2.0 * fine.mean) / (h * h);
        (slope, (coarse.mean / (2.0 * h) - slope.mean).abs(), curvature)
    };

    // Sensitivity of the fixed point to the noise in one application of the map.
    let m = se.channel().moments(params.sigma2(&[e_star])?[0]);
    let t_plus = se.step(&[e_star + h])?.moments[0].mse.mean;
    let lo = (e_star - h).max(0.0);
    let t_minus = se.step(&[lo])?.moments[0].mse.mean;
    let dt = (t_plus - t_minus) / (e_star + h - lo);
    let e_star_stderr = m.mse.stderr / (1.0 - dt).abs().max(1e-3);

    let combined_sd = (slope.stderr.powi(2) + (curvature * e_star_stderr).powi(2) + fd_error.powi(2))
        .sqrt()
        .max(1e-14 * slope.mean.abs().max(1.0));
    Ok(Stationarity {
        e_star,
        e_star_stderr,
        slope,
        fd_error,
        curvature,
        combined_sd,
    })
}
