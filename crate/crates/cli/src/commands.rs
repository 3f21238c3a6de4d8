use std::fs::File;
use std::io::BufWriter;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use sparc_core::allocation::{decodability_condition, decodability_ratios, exponential_groups};
use sparc_core::experiment::{
    build_manifest, build_operator, emit_manifest, load_manifest, records_csv, replay_trial, run_rate_sweep,
    run_simulation, sweep_csv, trial_seed, DecoderChoice, ExperimentConfig, OperatorChoice,
};
use sparc_core::message::{random_message, write_records};
use sparc_core::operators::{CoupledEnsembleParams, OperatorManifest};
use sparc_core::replica::{capacity, e_grid, phase_diagram_point, r_bp_infinity, Potential, ThresholdConfig, ThresholdSearch};
use sparc_core::rng::{stream, StreamKind};
use sparc_core::state_evolution::{SEParams, SeMode, StateEvolution};
use sparc_core::transmit;

use crate::output::Output;
use crate::{DecoderArg, EncodeArgs, OperatorArg, OperatorArgs, PhaseDiagramArgs, PotentialArgs, PowallocArgs, RunArgs, SeArgs, SearchArgs, SimulateArgs, SweepArgs, ThresholdArgs};

fn operator_choice(op: OperatorArg) -> OperatorChoice {
    match op {
        OperatorArg::Gaussian => OperatorChoice::Gaussian,
        OperatorArg::Hadamard => OperatorChoice::Hadamard,
        OperatorArg::Coupled => OperatorChoice::Coupled,
        OperatorArg::CoupledGaussian => OperatorChoice::CoupledGaussian,
    }
}

fn decoder_choice(d: DecoderArg) -> DecoderChoice {
    match d {
        DecoderArg::Amp => DecoderChoice::Amp,
        DecoderArg::Simplified => DecoderChoice::Simplified,
        DecoderArg::Residual => DecoderChoice::Residual,
        DecoderArg::RelaxedBp => DecoderChoice::RelaxedBp,
    }
}

fn config(b: usize, l: usize, rate: f64, snr: f64, op: &OperatorArgs, run: Option<&RunArgs>) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(b, l, rate, snr);
    c.operator = operator_choice(op.operator);
    c.ensemble = CoupledEnsembleParams {
        l_c: op.l_c,
        l_r: op.l_r,
        w: op.w,
        sqrt_j: op.sqrt_j,
        beta_seed: op.beta_seed,
    };
    c.groups = op.groups;
    if let Some(r) = run {
        c.decoder = decoder_choice(r.decoder);
        c.trials = r.trials;
        c.seed = r.seed;
        c.t_max = r.t_max;
        c.eps = r.eps;
    }
    c.validate().context("invalid configuration")?;
    Ok(c)
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let c = config(a.code.b, a.code.l, a.code.rate, a.code.snr, &a.operator, None)?;
    let params = c.validate()?;
    let alloc = c.allocation()?;
    let seed = trial_seed(a.seed, 0);
    let op = build_operator(&c, &params, &alloc, seed)?;
    let x = random_message(&params, &alloc, &mut stream(seed, 0, StreamKind::Message))?;
    let codeword = op.apply_forward(x.dense())?;
    let y = transmit(&codeword, params.snr, &mut stream(seed, 0, StreamKind::Noise))?.received;

    std::fs::create_dir_all(&a.out)?;
    for (name, values) in [("message", x.dense()), ("codeword", &codeword[..]), ("received", &y[..])] {
        let path = a.out.join(format!("{name}.csv"));
        write_records(BufWriter::new(File::create(&path)?), values).with_context(|| format!("writing {}", path.display()))?;
    }
    std::fs::write(a.out.join("operator.json"), serde_json::to_string_pretty(op.manifest())?)?;
    let out = Output::new(Some(&a.out))?;
    out.summary(&json!({
        "config": c,
        "trial_seed": seed,
        "m": params.m,
        "n": params.n,
        "realized_rate": params.realized_rate(),
        "symbols": x.symbols(),
    }))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let c = config(a.code.b, a.code.l, a.code.rate, a.code.snr, &a.operator, Some(&a.run))?;
    let out = Output::new(a.out.out.as_deref())?;
    let sim = run_simulation(&c, a.run.workers)?;
    if let Some(path) = &a.manifest {
        let m = build_manifest(&c)?;
        emit_manifest(&m, path)?;
        // Replaying the first trial from the file guards against a manifest that does not reproduce.
        let replayed = replay_trial(&load_manifest(path)?, 0)?;
        if !replayed.same_outcome(&sim.records[0]) {
            bail!("manifest replay of trial 0 differs from the run");
        }
    }
    eprintln!("{} trials in {:.2} s", sim.records.len(), sim.summary.wall_time_s);
    out.table("records", &records_csv(&sim.records))?;
    out.summary(&sim.summary)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let first = *a.rates.first().context("empty rate list")?;
    let c = config(a.b, a.l, first, a.snr, &a.operator, Some(&a.run))?;
    for &r in &a.rates {
        c.with_rate(r).validate().with_context(|| format!("rate {r}"))?;
    }
    let out = Output::new(a.out.out.as_deref())?;
    let rows = run_rate_sweep(&c, &a.rates, a.run.workers)?;
    let table: Vec<_> = rows.iter().map(|(r, _)| r.clone()).collect();
    out.table("sweep", &sweep_csv(&table))?;
    out.summary(&json!({
        "config": c,
        "rows": table,
        "summaries": rows.iter().map(|(_, s)| &s.summary).collect::<Vec<_>>(),
    }))
}

pub fn se(a: &SeArgs) -> Result<()> {
    let base = SEParams::new(a.b, a.rate, a.snr)?.with_samples(a.mc_samples, a.seed)?;
    let mode = if let Some(path) = &a.profile {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: OperatorManifest = serde_json::from_str(&text).context("parsing the operator manifest")?;
        if m.b != a.b {
            bail!("the manifest is for B={}, not B={}", m.b, a.b);
        }
        SeMode::Coupled(m.se_profile()?)
    } else if let Some(g) = a.groups {
        SeMode::PowAlloc(exponential_groups(g, a.snr)?)
    } else if matches!(a.operator, OperatorArg::Coupled | OperatorArg::CoupledGaussian) {
        let ens = CoupledEnsembleParams {
            l_c: a.l_c,
            l_r: a.l_r,
            w: a.w,
            sqrt_j: a.sqrt_j,
            beta_seed: a.beta_seed,
        };
        SeMode::Coupled(ens.profile(base.alpha())?.power_normalized())
    } else {
        SeMode::Homogeneous
    };
    let params = base.with_mode(mode)?;
    let traj = StateEvolution::new(params.clone())?.run(a.t_max, a.tol)?;
    let out = Output::new(a.out.out.as_deref())?;
    out.table("se", &traj.to_csv())?;
    let last = traj.last();
    out.summary(&json!({
        "B": a.b,
        "R": a.rate,
        "snr": a.snr,
        "mode": params.mode,
        "mc_samples": if a.b == 2 { None } else { Some(a.mc_samples) },
        "seed": a.seed,
        "iterations": last.t,
        "converged": traj.converged,
        "final_E": last.mean_e(),
        "final_SER": last.mean_ser(),
    }))
}

pub fn potential(a: &PotentialArgs) -> Result<()> {
    if a.grid < 3 {
        bail!("--grid needs at least 3 points");
    }
    let pot = Potential::new(a.b, a.rate, a.snr, a.mc_samples, a.seed)?;
    let curve = pot.curve(&e_grid(a.grid))?;
    let out = Output::new(a.out.out.as_deref())?;
    out.table("potential", &curve.to_csv())?;
    out.summary(&json!({
        "B": a.b,
        "R": a.rate,
        "snr": a.snr,
        "mc_samples": curve.mc_samples,
        "seed": a.seed,
        "maxima": curve.maxima.iter().map(|(e, p)| json!({"E": e, "phi": p})).collect::<Vec<_>>(),
    }))
}

fn search_config(s: &SearchArgs) -> ThresholdConfig {
    ThresholdConfig {
        mc_samples: s.mc_samples,
        seed: s.seed,
        table_points: s.table_points,
        ..ThresholdConfig::default()
    }
}

#[derive(Serialize)]
struct ThresholdRow {
    b: usize,
    r_bp: Option<f64>,
    r_opt: Option<f64>,
    capacity: f64,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

pub fn thresholds(a: &ThresholdArgs) -> Result<()> {
    let cfg = search_config(&a.search);
    let mut s = ThresholdSearch::new(a.b, a.snr, cfg.clone())?;
    let r_bp = s.r_bp()?;
    let r_opt = s.r_opt(r_bp)?;
    let c = capacity(a.snr)?;
    let out = Output::new(a.out.out.as_deref())?;
    out.table(
        "thresholds",
        &format!("B,R_BP,R_opt,C\n{},{},{},{c:.6}\n", a.b, opt(r_bp.rate()), opt(r_opt.rate())),
    )?;
    out.summary(&json!({
        "snr": a.snr,
        "config": cfg,
        "r_bp_infinity": r_bp_infinity(a.snr)?,
        "row": ThresholdRow { b: a.b, r_bp: r_bp.rate(), r_opt: r_opt.rate(), capacity: c },
    }))
}

pub fn phase_diagram(a: &PhaseDiagramArgs) -> Result<()> {
    let cfg = search_config(&a.search);
    let mut csv = String::from("B,R_BP,R_opt,C,SER_low\n");
    let mut points = Vec::new();
    for &b in &a.sizes {
        let p = phase_diagram_point(b, a.snr, &cfg).with_context(|| format!("B={b}"))?;
        csv.push_str(&format!(
            "{b},{},{},{:.6},{}\n",
            opt(p.r_bp.rate()),
            opt(p.r_opt.rate()),
            p.capacity,
            p.ser_at_low_maximum.map_or_else(|| "none".to_string(), |s| format!("{:e}", s.ser))
        ));
        points.push(p);
    }
    let out = Output::new(a.out.out.as_deref())?;
    out.table("phase_diagram", &csv)?;
    out.summary(&json!({
        "snr": a.snr,
        "config": cfg,
        "r_bp_infinity": r_bp_infinity(a.snr)?,
        "points": points,
    }))
}

pub fn powalloc(a: &PowallocArgs) -> Result<()> {
    let c = exponential_groups(a.groups, a.snr)?;
    let ratios = decodability_ratios(&c, a.rate, a.snr);
    let holds = decodability_condition(&c, a.rate, a.snr)?;
    let mut csv = String::from("g,c,ratio,holds\n");
    for (g, ((c, r), h)) in c.iter().zip(&ratios).zip(&holds).enumerate() {
        csv.push_str(&format!("{},{c:.12e},{r:.12e},{h}\n", g + 1));
    }
    let out = Output::new(a.out.out.as_deref())?;
    out.table("powalloc", &csv)?;
    let cap = capacity(a.snr)?;
    out.summary(&json!({
        "G": a.groups,
        "snr": a.snr,
        "R": a.rate,
        "capacity": cap,
        "R_over_C": a.rate / cap,
        "holds_everywhere": holds.iter().all(|&h| h),
        "first_failure": holds.iter().position(|&h| !h).map(|g| g + 1),
        "max_ratio": ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
}
