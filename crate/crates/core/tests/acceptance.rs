//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 4 at full size needs a 20480 x 262144 dense Gaussian matrix; it
//! only runs when `SPARC_ACCEPTANCE_FULL=1`. A reduced run is always reported.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;
use sparc_core::allocation::{decodability_condition, exponential_groups, PowerAllocation};
use sparc_core::amp::{
    amp_decode, denoise_section, denoiser_derivative, relaxed_bp_decode, AmpDecoder, DecoderConfig, DecoderVariant,
};
use sparc_core::channel::transmit;
use sparc_core::experiment::{run_simulation, DecoderChoice, ExperimentConfig, OperatorChoice};
use sparc_core::message::{random_message, SparseMessage};
use sparc_core::operators::{
    build_coupled_hadamard, build_dense_gaussian, build_hadamard, CoupledEnsembleParams, Operator, DENSE_ENTRY_BUDGET,
};
use sparc_core::params::CodeParams;
use sparc_core::replica::{
    capacity, check_stationarity, find_r_bp, find_r_opt, large_b_stability_boundary, potential_large_b, r_bp_infinity,
    ThresholdConfig,
};
use sparc_core::rng::{from_seed, stream, StreamKind};
use sparc_core::state_evolution::{
    se_run, EffectiveChannel, MonteCarloChannel, SEParams, SeMode, DEFAULT_MC_SAMPLES, DEFAULT_TOL,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn threshold_cfg() -> ThresholdConfig {
    ThresholdConfig::default()
}

fn r_bp(b: usize, snr: f64) -> f64 {
    find_r_bp(b, snr, &threshold_cfg())
        .unwrap()
        .rate()
        .expect("a transition exists")
}

struct Instance {
    params: CodeParams,
    alloc: PowerAllocation,
    op: Operator,
    x: SparseMessage,
    y: Vec<f64>,
}

fn instance(params: CodeParams, op: impl FnOnce(&CodeParams, &PowerAllocation) -> Operator, seed: u64) -> Instance {
    let alloc = PowerAllocation::constant(params.l);
    let op = op(&params, &alloc);
    let x = random_message(&params, &alloc, &mut stream(seed, 0, StreamKind::Message)).unwrap();
    let codeword = op.apply_forward(x.dense()).unwrap();
    let y = transmit(&codeword, params.snr, &mut stream(seed, 0, StreamKind::Noise))
        .unwrap()
        .received;
    Instance {
        params,
        alloc,
        op,
        x,
        y,
    }
}

fn dense(params: CodeParams, seed: u64) -> Instance {
    instance(
        params,
        |p, a| build_dense_gaussian(p, None, a, &mut stream(seed, 0, StreamKind::Operator), usize::MAX).unwrap(),
        seed,
    )
}

fn hadamard(params: CodeParams, seed: u64) -> Instance {
    instance(
        params,
        |p, a| build_hadamard(p, None, a, &mut stream(seed, 0, StreamKind::Operator)).unwrap(),
        seed,
    )
}

fn criterion_1() -> Outcome {
    let cfg = threshold_cfg();
    let bp = find_r_bp(2, 100.0, &cfg).unwrap().rate();
    let opt = find_r_opt(2, 100.0, &cfg).unwrap().rate();
    let c = capacity(100.0).unwrap();
    let pass = bp.is_some_and(|r| (r - 1.955).abs() <= 0.03)
        && opt.is_some_and(|r| (r - 2.68).abs() <= 0.03)
        && (c - 3.3291).abs() <= 1e-4;
    outcome(pass, format!("R_BP={bp:?} R_opt={opt:?} C={c:.6}"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_boundary: f64 = 0.0;
    for snr in [1.0, 10.0, 15.0, 100.0] {
        let c = capacity(snr).unwrap();
        let r_bp = r_bp_infinity(snr).unwrap();
        for r in [r_bp, 0.5 * (r_bp + c), c] {
            worst = worst.max((potential_large_b(0.0, r, snr) - snr.log2() / (2.0 * r)).abs());
            worst = worst.max((potential_large_b(1.0, r, snr) - (1.0 - (1.0 / snr + 1.0).log2() / (2.0 * r))).abs());
        }
        worst = worst.max((potential_large_b(0.0, c, snr) - potential_large_b(1.0, c, snr)).abs());
        worst_boundary = worst_boundary.max((large_b_stability_boundary(snr).unwrap() - r_bp).abs());
    }
    outcome(
        worst <= 1e-12 && worst_boundary <= 1e-6,
        format!("max identity error {worst:.2e}, max |boundary - r_bp_inf| {worst_boundary:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = from_seed(31);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut checked = 0;
    for k in 0..20u64 {
        let b = [2, 4, 8][rng.random_range(0..3)];
        let snr = 10f64.powf(rng.random_range(0.0..2.0));
        let rate = rng.random_range(0.3..0.95) * capacity(snr).unwrap();
        let params = SEParams::new(b, rate, snr)
            .unwrap()
            .with_samples(200_000, 1000 + k)
            .unwrap();
        for e0 in [1.0, 0.0] {
            let s = check_stationarity(&params, e0, 5000 + k).unwrap();
            let z = s.z_score();
            checked += 1;
            worst = worst.max(z);
            if !(z < 3.0) {
                failures.push(format!("B={b} R={rate:.4} snr={snr:.3} E*={:.3e} z={z:.2}", s.e_star));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{checked} fixed points, max z {worst:.2}; failures: {failures:?}"),
    )
}

/// Largest relative gap between the averaged AMP MSE and SE over the first 20 iterations.
fn amp_vs_se(l: usize, rate: f64, trials: u64) -> f64 {
    let (b, snr, iters) = (64, 10.0, 20);
    let cfg = DecoderConfig {
        t_max: iters,
        eps: f64::MIN_POSITIVE,
    };
    let mut mse = vec![0.0; iters];
    for t in 0..trials {
        let s = dense(CodeParams::new(b, l, rate, snr).unwrap(), 400 + t);
        let r = amp_decode(&s.y, &s.op, &s.params, &s.alloc, &cfg, Some(&s.x)).unwrap();
        for (acc, row) in mse.iter_mut().zip(&r.trace) {
            *acc += row.mse.unwrap() / trials as f64;
        }
    }
    let se = se_run(&SEParams::new(b, rate, snr).unwrap(), iters, 0.0).unwrap();
    if std::env::var("SPARC_ACCEPTANCE_VERBOSE").is_ok() {
        for t in 0..iters {
            eprintln!("R={rate:.3} t={}: AMP {:.4e} SE {:.4e}", t + 1, mse[t], se.states[t + 1].e[0]);
        }
    }
    (0..iters)
        .map(|t| (mse[t] - se.states[t + 1].e[0]).abs() / se.states[t + 1].e[0])
        .fold(0.0, f64::max)
}

fn criterion_4(l: usize) -> Outcome {
    let bp = r_bp(64, 10.0);
    let (below, above) = (0.85 * bp, 1.1 * bp);
    let gaps = [amp_vs_se(l, below, 10), amp_vs_se(l, above, 10)];
    outcome(
        gaps.iter().all(|g| *g <= 0.1),
        format!(
            "L={l} R_BP(64,10)={bp:.4}; max relative gap {:.3} at R={below:.3}, {:.3} at R={above:.3}",
            gaps[0], gaps[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let bp = r_bp(64, 15.0);
    let mut cfg = ExperimentConfig::new(64, 1024, 0.8 * bp, 15.0);
    cfg.operator = OperatorChoice::Hadamard;
    cfg.trials = 100;
    cfg.seed = 5;
    let sim = run_simulation(&cfg, None).unwrap();
    let perfect = sim.records.iter().filter(|r| r.ser == 0.0).count();
    outcome(
        perfect >= 95,
        format!("R_BP(64,15)={bp:.4}, R={:.4}: {perfect}/100 trials with SER=0", cfg.rate),
    )
}

fn criterion_6() -> Outcome {
    let bp = r_bp(512, 15.0);
    let mut tried = Vec::new();
    for factor in [1.1, 1.15, 1.2] {
        let mut cfg = ExperimentConfig::new(512, 1024, factor * bp, 15.0);
        cfg.trials = 50;
        cfg.seed = 6;
        cfg.decoder = DecoderChoice::Simplified;
        cfg.operator = OperatorChoice::Coupled;
        let coupled = run_simulation(&cfg, None).unwrap();
        let ok = coupled.records.iter().filter(|r| r.ser == 0.0).count();
        cfg.operator = OperatorChoice::Hadamard;
        let homogeneous = run_simulation(&cfg, None).unwrap();
        let failed = homogeneous.records.iter().filter(|r| r.ser > 0.0).count();
        tried.push(format!("R={:.4}: coupled {ok}/50 perfect, homogeneous {failed}/50 failed", cfg.rate));
        if ok >= 40 && failed >= 40 {
            return outcome(true, format!("R_BP(512,15)={bp:.4}; {}", tried.join("; ")));
        }
    }
    outcome(false, format!("R_BP(512,15)={bp:.4}; {}", tried.join("; ")))
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for snr in [7.0, 15.0, 100.0] {
        let c = capacity(snr).unwrap();
        let groups = exponential_groups(200, snr).unwrap();
        let below = decodability_condition(&groups, 0.9 * c, snr).unwrap();
        let above = decodability_condition(&groups, 1.1 * c, snr).unwrap();
        let holds = below.iter().all(|&h| h);
        let fails = above.iter().any(|&h| !h);
        pass &= holds && fails;
        detail.push(format!("snr={snr}: holds at 0.9C {holds}, fails at 1.1C {fails}"));
    }
    outcome(pass, detail.join("; "))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_8a() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut rng = from_seed(81);
    let ens = CoupledEnsembleParams {
        l_c: 4,
        l_r: 5,
        w: 1,
        sqrt_j: 0.5,
        beta_seed: 1.2,
    };
    let cases = [(8, 128, 1.0, false), (4, 256, 0.7, false), (4, 64, 0.8, true), (16, 64, 1.2, true)];
    for (i, &(b, l, rate, coupled)) in cases.iter().enumerate() {
        let params = CodeParams::new(b, l, rate, 15.0).unwrap();
        let alloc = PowerAllocation::constant(l);
        let mut op_rng = stream(82, i as u64, StreamKind::Operator);
        let op = if coupled {
            build_coupled_hadamard(&ens, &params, &alloc, &mut op_rng).unwrap()
        } else {
            build_hadamard(&params, None, &alloc, &mut op_rng).unwrap()
        };
        let (m, n) = (op.m(), op.n());
        assert!(n <= 1024);
        let a = op.densify();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax: Vec<f64> = (0..m).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect();
            let atf: Vec<f64> = (0..n).map(|c| (0..m).map(|r| a[r * n + c] * f[r]).sum()).collect();
            worst = worst.max(max_abs_diff(&op.apply_forward(&x).unwrap(), &ax));
            worst = worst.max(max_abs_diff(&op.apply_adjoint(&f).unwrap(), &atf));
        }
    }
    (worst <= 1e-10, format!("(a) max error {worst:.2e}"))
}

fn criterion_8b() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for (i, make) in [dense as fn(CodeParams, u64) -> Instance, hadamard].iter().enumerate() {
        let s = make(CodeParams::new(16, 256, 1.0, 15.0).unwrap(), 83 + i as u64);
        let mut residual = AmpDecoder::new(&s.y, &s.op, &s.params, &s.alloc, DecoderVariant::Residual).unwrap();
        let mut simplified = AmpDecoder::new(&s.y, &s.op, &s.params, &s.alloc, DecoderVariant::Simplified).unwrap();
        for _ in 0..20 {
            residual.step().unwrap();
            simplified.step().unwrap();
            worst = worst.max(max_abs_diff(&residual.state().a, &simplified.state().a));
        }
    }
    (worst <= 1e-8, format!("(b) max |da| {worst:.2e}"))
}

fn criterion_8c() -> (bool, String) {
    let mut identical = true;
    for (b, rate, snr) in [(2, 2.2, 100.0), (8, 1.2, 15.0)] {
        let base = SEParams::new(b, rate, snr).unwrap().with_samples(50_000, 7).unwrap();
        let profile = CoupledEnsembleParams::trivial()
            .profile(base.alpha())
            .unwrap()
            .power_normalized();
        let coupled = base.clone().with_mode(SeMode::Coupled(profile)).unwrap();
        let h = se_run(&base, 200, DEFAULT_TOL).unwrap();
        let c = se_run(&coupled, 200, DEFAULT_TOL).unwrap();
        identical &= h.states.len() == c.states.len()
            && h.states.iter().zip(&c.states).all(|(x, y)| {
                x.e[0].to_bits() == y.e[0].to_bits() && x.sigma2[0].to_bits() == y.sigma2[0].to_bits()
            });
    }
    (identical, format!("(c) bit-identical {identical}"))
}

fn criterion_8d() -> (bool, String) {
    let snr = 15.0;
    let rate = 0.5 * r_bp(4, snr);
    let cfg = DecoderConfig::default();
    let (mut agree, mut total) = (0, 0);
    for seed in 0..20 {
        let s = dense(CodeParams::new(4, 64, rate, snr).unwrap(), 900 + seed);
        let amp = amp_decode(&s.y, &s.op, &s.params, &s.alloc, &cfg, None).unwrap();
        let rbp = relaxed_bp_decode(&s.y, &s.op, &s.params, &s.alloc, &cfg, None).unwrap();
        agree += amp
            .estimate
            .symbols()
            .iter()
            .zip(rbp.estimate.symbols())
            .filter(|(a, b)| a == b)
            .count();
        total += s.params.l;
    }
    let frac = agree as f64 / total as f64;
    (frac >= 0.95, format!("(d) snr={snr} R={rate:.4}: agreement {agree}/{total}"))
}

fn criterion_8() -> Outcome {
    let parts = [criterion_8a(), criterion_8b(), criterion_8c(), criterion_8d()];
    outcome(
        parts.iter().all(|p| p.0),
        parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = from_seed(91);
    let (mut norm_err, mut var_err, mut deriv_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10_000 {
        let b = rng.random_range(2..=64);
        let c = rng.random_range(0.1..3.0);
        let sigma2: Vec<f64> = (0..b).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
        let r: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (mut a, mut v) = (vec![0.0; b], vec![0.0; b]);
        denoise_section(&sigma2, &r, c, &mut a, &mut v).unwrap();
        norm_err = norm_err.max((a.iter().sum::<f64>() - c).abs());
        for i in 0..b {
            var_err = var_err.max((v[i] - a[i] * (c - a[i])).abs());
        }
        // v_i = Σ_i² ∂a_i/∂R_i, by central differences.
        let d = denoiser_derivative(&a, &sigma2, c);
        let i = rng.random_range(0..b);
        let h = 1e-6 * sigma2[i].max(1e-2);
        let mut shifted = r.clone();
        let (mut ap, mut am, mut scratch) = (vec![0.0; b], vec![0.0; b], vec![0.0; b]);
        shifted[i] = r[i] + h;
        denoise_section(&sigma2, &shifted, c, &mut ap, &mut scratch).unwrap();
        shifted[i] = r[i] - h;
        denoise_section(&sigma2, &shifted, c, &mut am, &mut scratch).unwrap();
        let fd = (ap[i] - am[i]) / (2.0 * h);
        deriv_err = deriv_err.max((sigma2[i] * fd - v[i]).abs()).max((d[i] - fd).abs() * sigma2[i]);
    }

    let mut worst_z: f64 = 0.0;
    let mut points = 0;
    for &b in &[2, 4, 8, 32, 128] {
        let channel = MonteCarloChannel::new(b, DEFAULT_MC_SAMPLES, 92 + b as u64).unwrap();
        for &(rate, snr) in &[(1.0, 15.0), (2.0, 100.0)] {
            let params = SEParams::new(b, rate, snr).unwrap();
            for &e in &[1e-3, 1e-2, 0.1, 0.5, 1.0] {
                let s2 = params.sigma2(&[e]).unwrap()[0];
                let gap = channel.moments(s2).form_gap;
                points += 1;
                if std::env::var("SPARC_ACCEPTANCE_VERBOSE").is_ok() {
                    eprintln!("B={b} R={rate} snr={snr} E={e}: gap {:.3e} ± {:.3e}", gap.mean, gap.stderr);
                }
                if gap.mean != 0.0 {
                    worst_z = worst_z.max(if gap.stderr > 0.0 { gap.mean.abs() / gap.stderr } else { f64::INFINITY });
                }
            }
        }
    }
    let pass = norm_err <= 1e-12 && var_err <= 1e-12 && deriv_err <= 1e-5 && worst_z <= 3.0 && points == 50;
    outcome(
        pass,
        format!(
            "normalization {norm_err:.1e}, variance {var_err:.1e}, derivative {deriv_err:.1e}; SE forms over {points} points max z {worst_z:.2}"
        ),
    )
}

/// `SPARC_ACCEPTANCE_ONLY=3,9` restricts the run to the listed criteria.
fn selected(name: &str) -> bool {
    match std::env::var("SPARC_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim() == name),
        Err(_) => true,
    }
}

fn report(name: &str, run: impl FnOnce() -> Outcome) -> bool {
    if !selected(name) {
        return true;
    }
    let start = Instant::now();
    let o = run();
    println!(
        "{} criterion {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() -> ExitCode {
    let full = std::env::var("SPARC_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let mut all = true;
    all &= report("1", criterion_1);
    all &= report("2", criterion_2);
    all &= report("3", criterion_3);
    if !selected("4") {
    } else if full {
        all &= report("4", || criterion_4(1 << 12));
    } else {
        println!(
            "SKIP criterion 4: L=2^12 needs {} dense entries (budget {DENSE_ENTRY_BUDGET}); set SPARC_ACCEPTANCE_FULL=1",
            CodeParams::new(64, 1 << 12, 1.1 * 1.38, 10.0)
                .map(|p| p.m * p.n)
                .unwrap_or(0)
        );
        let start = Instant::now();
        let o = criterion_4(1 << 8);
        println!(
            "INFO criterion 4 reduced (not the criterion): {} {} ({:.1} s)",
            if o.pass { "pass" } else { "fail" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    all &= report("5", criterion_5);
    all &= report("6", criterion_6);
    all &= report("7", criterion_7);
    all &= report("8", criterion_8);
    all &= report("9", criterion_9);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
