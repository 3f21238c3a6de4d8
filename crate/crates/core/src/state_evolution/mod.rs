//! State evolution: the deterministic recursion tracking AMP's per-section MSE.
//!
//! The homogeneous recursion feeds `Σ² = R ln2 (1/snr + E)` into the scalar
//! channel of [`gaussian`]; the coupled and power-allocated forms do the same
//! per block (or group) with a block-dependent effective noise.

pub mod gaussian;
mod quadrature;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::operators::VarianceProfile;

pub use gaussian::{
    default_expectation, f_correct, f_wrong, log_partition_difference, ChannelMoments,
    EffectiveChannel, Estimate, GaussianExpectation, MonteCarloChannel, QuadratureChannel,
    TabulatedChannel,
};

/// Smallest Monte Carlo sample count accepted.
pub const MIN_MC_SAMPLES: usize = 10_000;
/// Default sample count for trajectories.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
/// Default fixed-point tolerance on `E`.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Which recursion to iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMode {
    Homogeneous,
    /// `alpha_r` counts rows per column of a block; `J` is power normalized.
    Coupled(VarianceProfile),
    /// Group amplitudes `c_g`, one group per entry.
    PowAlloc(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEParams {
    pub b: usize,
    pub rate: f64,
    pub snr: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub mode: SeMode,
}

impl SEParams {
    pub fn new(b: usize, rate: f64, snr: f64) -> Result<Self> {
        let p = Self {
            b,
            rate,
            snr,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            mode: SeMode::Homogeneous,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_mode(mut self, mode: SeMode) -> Result<Self> {
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_samples(mut self, mc_samples: usize, seed: u64) -> Result<Self> {
        self.mc_samples = mc_samples;
        self.seed = seed;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        let mut p = self.clone();
        p.rate = rate;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(invalid(format!("section size B must be at least 2, got {}", self.b)));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(invalid(format!("rate must be positive and finite, got {}", self.rate)));
        }
        if !(self.snr > 0.0) {
            return Err(invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(invalid(format!(
                "at least {MIN_MC_SAMPLES} Monte Carlo samples are required, got {}",
                self.mc_samples
            )));
        }
        if let SeMode::PowAlloc(c) = &self.mode {
            if c.is_empty() {
                return Err(invalid("power allocation needs at least one group"));
            }
            if let Some(x) = c.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                return Err(invalid(format!("group amplitudes must be positive, got {x}")));
            }
        }
        Ok(())
    }

    /// Asymptotic measurement ratio `log2(B) / (R B)`.
    pub fn alpha(&self) -> f64 {
        (self.b as f64).log2() / (self.rate * self.b as f64)
    }

    /// Number of entries in the state: blocks, groups, or one.
    pub fn components(&self) -> usize {
        match &self.mode {
            SeMode::Homogeneous => 1,
            SeMode::Coupled(p) => p.cols(),
            SeMode::PowAlloc(c) => c.len(),
        }
    }

    fn kappa(&self) -> f64 {
        self.rate * LN_2
    }

    /// Effective noise `Σ²` of every component given the current `E`.
    pub fn sigma2(&self, e: &[f64]) -> Result<Vec<f64>> {
        check_len("state-evolution state", self.components(), e.len())?;
        if let Some(x) = e.iter().find(|x| !(**x >= 0.0)) {
            return Err(invalid(format!("MSE must be non-negative, got {x}")));
        }
        let kappa = self.kappa();
        let noise = 1.0 / self.snr;
        Ok(match &self.mode {
            SeMode::Homogeneous => vec![kappa * (noise + e[0])],
            SeMode::PowAlloc(c) => {
                let g = c.len() as f64;
                let load = c.iter().zip(e).map(|(c, e)| c * c * e).sum::<f64>() / g;
                c.iter().map(|c| kappa * (noise + load) / (c * c)).collect()
            }
            SeMode::Coupled(p) => coupled_sigma2(p, kappa, self.alpha(), self.snr, e),
        })
    }
}

fn coupled_sigma2(p: &VarianceProfile, kappa: f64, alpha: f64, snr: f64, e: &[f64]) -> Vec<f64> {
    let (l_r, l_c) = (p.rows(), p.cols());
    let denom: Vec<f64> = (0..l_r)
        .map(|r| l_c as f64 / snr + (0..l_c).map(|c| p.j(r, c) * e[c]).sum::<f64>())
        .collect();
    (0..l_c)
        .map(|c| {
            let rows: Vec<usize> = (0..l_r).filter(|&r| p.j(r, c) > 0.0).collect();
            let q = |r: usize| p.alpha_r()[r] / alpha;
            if let [r] = rows[..] {
                // Same association as the homogeneous form, so trivial profiles agree bit for bit.
                kappa * denom[r] / (q(r) * p.j(r, c))
            } else {
                kappa / rows.iter().map(|&r| q(r) * p.j(r, c) / denom[r]).sum::<f64>()
            }
        })
        .collect()
}

/// One application of the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeStep {
    pub sigma2: Vec<f64>,
    pub moments: Vec<ChannelMoments>,
}

impl SeStep {
    pub fn e(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.mse.mean).collect()
    }

    pub fn ser(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.ser.mean).collect()
    }
}

/// A recursion bound to its expectation engine.
pub struct StateEvolution {
    params: SEParams,
    channel: Box<dyn EffectiveChannel>,
}

impl StateEvolution {
    /// Quadrature for `B = 2`, Monte Carlo with `params.mc_samples` otherwise.
    pub fn new(params: SEParams) -> Result<Self> {
        params.validate()?;
        let channel = gaussian::default_expectation(params.b, params.mc_samples, params.seed)?;
        Ok(Self {
            params,
            channel: Box::new(BoxedExpectation(channel)),
        })
    }

    pub fn with_channel(params: SEParams, channel: Box<dyn EffectiveChannel>) -> Result<Self> {
        params.validate()?;
        if channel.section_size() != params.b {
            return Err(invalid(format!(
                "channel is for B={}, parameters have B={}",
                channel.section_size(),
                params.b
            )));
        }
        Ok(Self { params, channel })
    }

    pub fn params(&self) -> &SEParams {
        &self.params
    }

    pub fn channel(&self) -> &dyn EffectiveChannel {
        self.channel.as_ref()
    }

    /// Replaces the rate, keeping the expectation engine.
    pub fn set_rate(&mut self, rate: f64) -> Result<()> {
        self.params = self.params.with_rate(rate)?;
        Ok(())
    }

    pub fn step(&self, e: &[f64]) -> Result<SeStep> {
        let sigma2 = self.params.sigma2(e)?;
        let moments = sigma2.iter().map(|&s| self.channel.moments(s)).collect();
        Ok(SeStep { sigma2, moments })
    }

    /// Iterates from the uninformative start `E = 1`.
    pub fn run(&self, t_max: usize, tol: f64) -> Result<Trajectory> {
        self.run_from(&vec![1.0; self.params.components()], t_max, tol)
    }

    /// Iterates from `e0` until `max |ΔE| < tol` or `t_max` steps.
    pub fn run_from(&self, e0: &[f64], t_max: usize, tol: f64) -> Result<Trajectory> {
        if t_max < 1 {
            return Err(invalid("state evolution needs t_max >= 1"));
        }
        check_len("initial state", self.params.components(), e0.len())?;
        let b = self.params.b as f64;
        // Only the two canonical starts have a known SER.
        let start_ser = e0
            .iter()
            .map(|&e| match e {
                e if e >= 1.0 => 1.0 - 1.0 / b,
                e if e == 0.0 => 0.0,
                _ => f64::NAN,
            })
            .collect();
        let mut states = vec![SEState {
            t: 0,
            e: e0.to_vec(),
            sigma2: vec![f64::INFINITY; e0.len()],
            ser: start_ser,
        }];
        let mut converged = false;
        let mut e = e0.to_vec();
        for t in 1..=t_max {
            let step = self.step(&e)?;
            let next = step.e();
            let change = next
                .iter()
                .zip(&e)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            states.push(SEState {
                t,
                e: next.clone(),
                sigma2: step.sigma2,
                ser: step.moments.iter().map(|m| m.ser.mean).collect(),
            });
            e = next;
            if change < tol || tol.is_infinite() {
                converged = true;
                break;
            }
        }
        Ok(Trajectory { states, converged })
    }
}

struct BoxedExpectation(Box<dyn GaussianExpectation>);

impl EffectiveChannel for BoxedExpectation {
    fn section_size(&self) -> usize {
        self.0.section_size()
    }

    fn moments(&self, sigma2: f64) -> ChannelMoments {
        gaussian::channel_moments(self.0.as_ref(), sigma2)
    }
}

/// State after `t` steps. Entry `t` holds `E^t`, the `Σ²` that produced it and its SER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEState {
    pub t: usize,
    pub e: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub ser: Vec<f64>,
}

impl SEState {
    pub fn mean_e(&self) -> f64 {
        self.e.iter().sum::<f64>() / self.e.len() as f64
    }

    pub fn mean_ser(&self) -> f64 {
        self.ser.iter().sum::<f64>() / self.ser.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SEState>,
    pub converged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &SEState {
        self.states.last().expect("a trajectory holds its initial state")
    }

    /// Headered CSV: `t`, then `E`, `Sigma2` and `SER` per component, then the means.
    pub fn to_csv(&self) -> String {
        let k = self.states[0].e.len();
        let mut out = String::from("t");
        for name in ["E", "Sigma2", "SER"] {
            if k == 1 {
                out.push_str(&format!(",{name}"));
            } else {
                for c in 0..k {
                    out.push_str(&format!(",{name}_{c}"));
                }
            }
        }
        if k > 1 {
            out.push_str(",E_mean,SER_mean");
        }
        out.push('\n');
        for s in &self.states {
            out.push_str(&s.t.to_string());
            for v in s.e.iter().chain(&s.sigma2).chain(&s.ser) {
                out.push_str(&format!(",{v:e}"));
            }
            if k > 1 {
                out.push_str(&format!(",{:e},{:e}", s.mean_e(), s.mean_ser()));
            }
            out.push('\n');
        }
        out
    }
}

/// One homogeneous step: `(E', SER')`.
pub fn se_step(e: f64, params: &SEParams) -> Result<(f64, f64)> {
    if params.mode != SeMode::Homogeneous {
        return Err(invalid("se_step needs homogeneous mode"));
    }
    let s = StateEvolution::new(params.clone())?.step(&[e])?;
    Ok((s.moments[0].mse.mean, s.moments[0].ser.mean))
}

/// One coupled step over the `L_c` blocks.
pub fn se_step_coupled(e: &[f64], params: &SEParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if !matches!(params.mode, SeMode::Coupled(_)) {
        return Err(invalid("se_step_coupled needs coupled mode"));
    }
    let s = StateEvolution::new(params.clone())?.step(e)?;
    Ok((s.e(), s.ser()))
}

/// One power-allocated step over the `G` groups.
pub fn se_step_powalloc(e: &[f64], params: &SEParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if !matches!(params.mode, SeMode::PowAlloc(_)) {
        return Err(invalid("se_step_powalloc needs power-allocation mode"));
    }
    let s = StateEvolution::new(params.clone())?.step(e)?;
    Ok((s.e(), s.ser()))
}

pub fn se_run(params: &SEParams, t_max: usize, tol: f64) -> Result<Trajectory> {
    StateEvolution::new(params.clone())?.run(t_max, tol)
}
