//! End-to-end decoding experiments: encode, transmit, decode, repeat.
//!
//! Every trial draws its operator, message and noise from streams derived
//! from `(seed, trial)`, so results do not depend on the number of workers
//! or on the order in which trials finish.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{exponential_power_allocation, PowerAllocation};
use crate::amp::{amp_decode, amp_decode_residual, amp_decode_simplified, relaxed_bp_decode, DecodeReport, DecoderConfig};
use crate::channel::transmit;
use crate::error::{invalid, Result};
use crate::message::random_message;
use crate::metrics::{mse_per_section, section_error_rate};
use crate::operators::{
    build_coupled_gaussian, build_coupled_hadamard, build_dense_gaussian, build_hadamard,
    CoupledEnsembleParams, Operator, OperatorManifest, DENSE_ENTRY_BUDGET,
};
use crate::params::CodeParams;
use crate::rng::{derive_seed, stream, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorChoice {
    Gaussian,
    Hadamard,
    /// Band-coupled Hadamard operator.
    Coupled,
    CoupledGaussian,
}

impl OperatorChoice {
    pub fn is_coupled(self) -> bool {
        matches!(self, OperatorChoice::Coupled | OperatorChoice::CoupledGaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderChoice {
    Amp,
    Simplified,
    Residual,
    RelaxedBp,
}

fn default_operator() -> OperatorChoice {
    OperatorChoice::Hadamard
}
fn default_decoder() -> DecoderChoice {
    DecoderChoice::Amp
}
fn default_ensemble() -> CoupledEnsembleParams {
    CoupledEnsembleParams {
        l_c: 16,
        l_r: 17,
        w: 2,
        sqrt_j: 0.4,
        beta_seed: 1.4,
    }
}
fn default_trials() -> usize {
    1
}
fn default_t_max() -> usize {
    DecoderConfig::default().t_max
}
fn default_eps() -> f64 {
    DecoderConfig::default().eps
}

/// Everything that defines a run. Only `b`, `l`, `rate` and `snr` lack defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub b: usize,
    pub l: usize,
    pub rate: f64,
    pub snr: f64,
    #[serde(default = "default_operator")]
    pub operator: OperatorChoice,
    /// Used by coupled operators only.
    #[serde(default = "default_ensemble")]
    pub ensemble: CoupledEnsembleParams,
    /// Exponential power allocation with this many groups; constant when absent.
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default = "default_decoder")]
    pub decoder: DecoderChoice,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl ExperimentConfig {
    pub fn new(b: usize, l: usize, rate: f64, snr: f64) -> Self {
        Self {
            b,
            l,
            rate,
            snr,
            operator: default_operator(),
            ensemble: default_ensemble(),
            groups: None,
            decoder: default_decoder(),
            trials: default_trials(),
            seed: 0,
            t_max: default_t_max(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<CodeParams> {
        let params = CodeParams::new(self.b, self.l, self.rate, self.snr)?;
        if self.trials < 1 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.operator.is_coupled() {
            self.ensemble.validate()?;
            if self.l % self.ensemble.l_c != 0 {
                return Err(invalid(format!(
                    "L={} must be a multiple of Lc={} for a coupled operator",
                    self.l, self.ensemble.l_c
                )));
            }
        }
        if let Some(g) = self.groups {
            if g == 0 || self.l % g != 0 {
                return Err(invalid(format!("G={g} must divide L={}", self.l)));
            }
        }
        if self.decoder == DecoderChoice::Residual && self.operator.is_coupled() {
            return Err(invalid("the residual decoder needs a homogeneous operator; use --decoder amp"));
        }
        if self.decoder == DecoderChoice::RelaxedBp && !matches!(self.operator, OperatorChoice::Gaussian | OperatorChoice::CoupledGaussian) {
            return Err(invalid("relaxed BP needs a dense operator; use --operator gaussian"));
        }
        Ok(params)
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            t_max: self.t_max,
            eps: self.eps,
        }
    }

    pub fn allocation(&self) -> Result<PowerAllocation> {
        match self.groups {
            None => Ok(PowerAllocation::constant(self.l)),
            Some(g) => exponential_power_allocation(g, self.l, self.snr),
        }
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        Self {
            rate,
            ..self.clone()
        }
    }
}

/// Seed from which every stream of one trial is derived.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, trial as u64, StreamKind::Sampling)
}

pub fn build_operator(
    config: &ExperimentConfig,
    params: &CodeParams,
    allocation: &PowerAllocation,
    seed: u64,
) -> Result<Operator> {
    let mut rng = stream(seed, 0, StreamKind::Operator);
    match config.operator {
        OperatorChoice::Gaussian => build_dense_gaussian(params, None, allocation, &mut rng, DENSE_ENTRY_BUDGET),
        OperatorChoice::Hadamard => build_hadamard(params, None, allocation, &mut rng),
        OperatorChoice::Coupled => build_coupled_hadamard(&config.ensemble, params, allocation, &mut rng),
        OperatorChoice::CoupledGaussian => {
            build_coupled_gaussian(&config.ensemble, params, allocation, &mut rng, DENSE_ENTRY_BUDGET)
        }
    }
}

/// Outcome of one trial. `wall_time_s` is left out of the records file so that
/// reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub ser: f64,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrialRecord {
    /// Same record ignoring timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self { wall_time_s: 0.0, ..self.clone() } == Self { wall_time_s: 0.0, ..other.clone() }
    }
}

/// Full decoder output of one trial together with its record.
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub report: DecodeReport,
}

fn decode(
    config: &ExperimentConfig,
    params: &CodeParams,
    allocation: &PowerAllocation,
    op: &Operator,
    seed: u64,
) -> Result<(crate::message::SparseMessage, DecodeReport)> {
    let x = random_message(params, allocation, &mut stream(seed, 0, StreamKind::Message))?;
    let codeword = op.apply_forward(x.dense())?;
    let y = transmit(&codeword, params.snr, &mut stream(seed, 0, StreamKind::Noise))?.received;
    let cfg = config.decoder_config();
    let report = match config.decoder {
        DecoderChoice::Amp => amp_decode(&y, op, params, allocation, &cfg, Some(&x))?,
        DecoderChoice::Simplified => amp_decode_simplified(&y, op, params, allocation, &cfg, Some(&x))?,
        DecoderChoice::Residual => amp_decode_residual(&y, op, params, allocation, &cfg, Some(&x))?,
        DecoderChoice::RelaxedBp => relaxed_bp_decode(&y, op, params, allocation, &cfg, Some(&x))?,
    };
    Ok((x, report))
}

fn outcome(
    config: &ExperimentConfig,
    params: &CodeParams,
    allocation: &PowerAllocation,
    op: &Operator,
    trial: usize,
    seed: u64,
    start: Instant,
) -> Result<TrialOutcome> {
    let (x, report) = decode(config, params, allocation, op, seed)?;
    let record = TrialRecord {
        trial,
        seed,
        ser: section_error_rate(&x, &report.estimate)?,
        mse: mse_per_section(x.dense(), &report.posterior, params.l)?,
        iterations: report.iterations,
        converged: report.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrialOutcome { record, report })
}

/// One encode, transmit, decode cycle with a fresh operator.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialOutcome> {
    let start = Instant::now();
    let params = config.validate()?;
    let allocation = config.allocation()?;
    let seed = trial_seed(config.seed, trial);
    let op = build_operator(config, &params, &allocation, seed)?;
    outcome(config, &params, &allocation, &op, trial, seed, start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: ExperimentConfig,
    pub m: usize,
    pub n: usize,
    pub realized_rate: f64,
    pub trials: usize,
    /// Fraction of trials with at least one wrong section.
    pub block_error_rate: f64,
    pub mean_ser: f64,
    pub mean_mse: f64,
    pub mean_iterations: f64,
    /// Kept out of serialized output, which must not depend on timing.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub summary: SimulationSummary,
    pub records: Vec<TrialRecord>,
}

/// Worker count from `SPARC_WORKERS` when set.
pub const WORKERS_ENV: &str = "SPARC_WORKERS";

pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.parse().ok().filter(|&w| w > 0)
}

/// Runs `config.trials` trials on `workers` threads (the global pool when `None`).
pub fn run_simulation(config: &ExperimentConfig, workers: Option<usize>) -> Result<Simulation> {
    let start = Instant::now();
    let params = config.validate()?;
    let run = || -> Result<Vec<TrialRecord>> {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, t).map(|o| o.record))
            .collect()
    };
    let records = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| invalid(format!("cannot start {w} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(Simulation {
        summary: summarize(config, &params, &records, start.elapsed().as_secs_f64()),
        records,
    })
}

fn summarize(config: &ExperimentConfig, params: &CodeParams, records: &[TrialRecord], wall: f64) -> SimulationSummary {
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    SimulationSummary {
        config: config.clone(),
        m: params.m,
        n: params.n,
        realized_rate: params.realized_rate(),
        trials: records.len(),
        block_error_rate: mean(&|r| if r.ser > 0.0 { 1.0 } else { 0.0 }),
        mean_ser: mean(&|r| r.ser),
        mean_mse: mean(&|r| r.mse),
        mean_iterations: mean(&|r| r.iterations as f64),
        wall_time_s: wall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub mean_ser: f64,
    pub block_error_rate: f64,
}

/// One simulation per rate, in the given order.
pub fn run_rate_sweep(config: &ExperimentConfig, rates: &[f64], workers: Option<usize>) -> Result<Vec<(SweepRow, Simulation)>> {
    if rates.is_empty() {
        return Err(invalid("the rate list is empty"));
    }
    rates
        .iter()
        .map(|&r| {
            let sim = run_simulation(&config.with_rate(r), workers)?;
            let row = SweepRow {
                rate: r,
                mean_ser: sim.summary.mean_ser,
                block_error_rate: sim.summary.block_error_rate,
            };
            Ok((row, sim))
        })
        .collect()
}

/// Headered CSV of trial records, one line per trial in trial order.
pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("trial,seed,ser,mse,iterations,converged\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:e},{:e},{},{}\n",
            r.trial, r.seed, r.ser, r.mse, r.iterations, r.converged
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("R,mean_ser,block_error_rate\n");
    for r in rows {
        out.push_str(&format!("{},{:e},{}\n", r.rate, r.mean_ser, r.block_error_rate));
    }
    out
}

/// What is needed to replay a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialManifest {
    pub trial: usize,
    pub seed: u64,
    pub operator: OperatorManifest,
}

/// Builds the manifest of every trial of `config` (operators are generated, not decoded).
pub fn build_manifest(config: &ExperimentConfig) -> Result<RunManifest> {
    let params = config.validate()?;
    let allocation = config.allocation()?;
    let trials = (0..config.trials)
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            let op = build_operator(config, &params, &allocation, seed)?;
            Ok(TrialManifest {
                trial: t,
                seed,
                operator: op.manifest().clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunManifest {
        config: config.clone(),
        trials,
    })
}

pub fn emit_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

/// Reads a manifest and checks every operator against the configuration.
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let params = manifest.config.validate()?;
    for t in &manifest.trials {
        Operator::from_manifest(&t.operator)?.check_params(&params)?;
        if t.seed != trial_seed(manifest.config.seed, t.trial) {
            return Err(invalid(format!("trial {} seed does not derive from the run seed", t.trial)));
        }
    }
    Ok(manifest)
}

/// Re-runs one trial with the operator stored in the manifest.
pub fn replay_trial(manifest: &RunManifest, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let entry = manifest
        .trials
        .iter()
        .find(|t| t.trial == trial)
        .ok_or_else(|| invalid(format!("trial {trial} is not in the manifest")))?;
    let config = &manifest.config;
    let params = config.validate()?;
    let allocation = config.allocation()?;
    let op = Operator::from_manifest(&entry.operator)?;
    op.check_params(&params)?;
    Ok(outcome(config, &params, &allocation, &op, trial, entry.seed, start)?.record)
}
