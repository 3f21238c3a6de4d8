use super::*;
use crate::message::random_message;
use crate::rng::from_seed;
use proptest::prelude::*;
use rand::Rng as _;

fn small_coupled() -> (CodeParams, CoupledEnsembleParams) {
    // N = 16, M = 8, two column blocks
    let params = CodeParams::new(4, 4, 1.0, 10.0).unwrap();
    let ens = CoupledEnsembleParams {
        l_c: 2,
        l_r: 3,
        w: 1,
        sqrt_j: 0.7,
        beta_seed: 1.5,
    };
    (params, ens)
}

fn random_vec(len: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| (0..cols).map(|j| a[i * cols + j] * x[j]).sum())
        .collect()
}

fn matvec_t(a: &[f64], rows: usize, cols: usize, f: &[f64]) -> Vec<f64> {
    (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j] * f[i]).sum())
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
    }
}

fn all_kinds(params: &CodeParams, profile: Option<&VarianceProfile>, seed: u64) -> Vec<Operator> {
    let alloc = PowerAllocation::constant(params.l);
    vec![
        build_hadamard(params, profile, &alloc, &mut from_seed(seed)).unwrap(),
        build_dense_gaussian(params, profile, &alloc, &mut from_seed(seed), DENSE_ENTRY_BUDGET).unwrap(),
    ]
}

#[test]
fn small_instance_matches_dense_product() {
    let (params, ens) = small_coupled();
    assert_eq!((params.n, params.m), (16, 8));
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_hadamard(&ens, &params, &alloc, &mut from_seed(1)).unwrap();
    let a = op.densify();
    let mut rng = from_seed(2);
    for _ in 0..5 {
        let x = random_vec(16, &mut rng);
        let f = random_vec(8, &mut rng);
        assert_close(&op.apply_forward(&x).unwrap(), &matvec(&a, 8, 16, &x), 1e-10);
        assert_close(&op.apply_adjoint(&f).unwrap(), &matvec_t(&a, 8, 16, &f), 1e-10);
        let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
        let v: Vec<f64> = x.iter().map(|t| t.abs()).collect();
        assert_close(&op.apply_sq_forward(&v).unwrap(), &matvec(&sq, 8, 16, &v), 1e-12);
        assert_close(&op.apply_sq_adjoint(&v[..8]).unwrap(), &matvec_t(&sq, 8, 16, &v[..8]), 1e-12);
    }
}

#[test]
fn padded_blocks_match_dense_product() {
    // B = 3 gives block widths that are not powers of two
    let params = CodeParams::new(3, 40, 0.8, 10.0).unwrap();
    let ens = CoupledEnsembleParams {
        l_c: 4,
        l_r: 5,
        w: 2,
        sqrt_j: 0.5,
        beta_seed: 1.3,
    };
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_hadamard(&ens, &params, &alloc, &mut from_seed(9)).unwrap();
    let (m, n) = (op.m(), op.n());
    let a = op.densify();
    let mut rng = from_seed(10);
    let x = random_vec(n, &mut rng);
    let f = random_vec(m, &mut rng);
    assert_close(&op.apply_forward(&x).unwrap(), &matvec(&a, m, n, &x), 1e-10);
    assert_close(&op.apply_adjoint(&f).unwrap(), &matvec_t(&a, m, n, &f), 1e-10);
}

#[test]
fn zero_maps_to_zero() {
    let (params, ens) = small_coupled();
    let profile = ens.profile(params.alpha).unwrap();
    for op in all_kinds(&params, Some(&profile), 3) {
        assert!(op.apply_forward(&[0.0; 16]).unwrap().iter().all(|&y| y == 0.0));
        assert!(op.apply_forward(&[0.0; 15]).is_err());
        assert!(op.apply_adjoint(&[0.0; 9]).is_err());
    }
}

#[test]
fn sq_forward_of_ones_is_the_row_load() {
    let (params, ens) = small_coupled();
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_hadamard(&ens, &params, &alloc, &mut from_seed(4)).unwrap();
    let g = op.geometry();
    let out = op.apply_sq_forward(&vec![1.0; params.n]).unwrap();
    for r in 0..g.row_blocks() {
        let expect: f64 = (0..g.col_blocks()).map(|c| g.variance(r, c) * g.width() as f64).sum();
        for mu in g.row_range(r) {
            assert!((out[mu] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn scale_gives_unit_expected_power() {
    let ens = CoupledEnsembleParams {
        l_c: 8,
        l_r: 9,
        w: 2,
        sqrt_j: 0.4,
        beta_seed: 1.4,
    };
    let params = CodeParams::new(64, 256, 1.2, 15.0).unwrap();
    for alloc in [
        PowerAllocation::constant(256),
        crate::allocation::exponential_power_allocation(8, 256, 15.0).unwrap(),
    ] {
        let g = BlockGeometry::new(&params, &ens.profile(params.alpha).unwrap(), &alloc).unwrap();
        let per = params.l / 8;
        let mut power = 0.0;
        for r in 0..9 {
            for c in 0..8 {
                power += g.height(r) as f64 * g.variance(r, c) * per as f64 * alloc.mean_square_over(c * per..(c + 1) * per);
            }
        }
        assert!((power / params.m as f64 - 1.0).abs() < 1e-12);
    }
    let homog = BlockGeometry::new(&params, &VarianceProfile::homogeneous(params.alpha).unwrap(), &PowerAllocation::constant(256)).unwrap();
    assert!((homog.scale() * params.l as f64 - 1.0).abs() < 1e-15);
}

#[test]
fn codeword_power_near_one() {
    let params = CodeParams::new(64, 256, 1.0, 15.0).unwrap();
    let alloc = PowerAllocation::constant(params.l);
    let ens = CoupledEnsembleParams {
        l_c: 4,
        l_r: 5,
        w: 2,
        sqrt_j: 0.6,
        beta_seed: 1.5,
    };
    let profile = ens.profile(params.alpha).unwrap();
    let m = params.m as f64;
    let mut powers = [0.0f64; 2];
    let draws = 20;
    for d in 0..draws {
        for (k, op) in all_kinds(&params, Some(&profile), 100 + d).into_iter().enumerate() {
            let msg = random_message(&params, &alloc, &mut from_seed(500 + d)).unwrap();
            let y = op.apply_forward(msg.dense()).unwrap();
            let p = y.iter().map(|v| v * v).sum::<f64>() / m;
            assert!((p - 1.0).abs() < 10.0 / m.sqrt(), "kind {k} power {p}");
            powers[k] += p / draws as f64;
        }
    }
    assert!((powers[0] - powers[1]).abs() < 5.0 / m.sqrt(), "{powers:?}");
}

#[test]
fn dense_power_over_draws() {
    let params = CodeParams::new(16, 64, 1.0, 10.0).unwrap();
    let alloc = PowerAllocation::constant(params.l);
    let mut total = 0.0;
    for d in 0..100 {
        let op = build_dense_gaussian(&params, None, &alloc, &mut from_seed(d), DENSE_ENTRY_BUDGET).unwrap();
        let msg = random_message(&params, &alloc, &mut from_seed(1000 + d)).unwrap();
        let y = op.apply_forward(msg.dense()).unwrap();
        total += y.iter().map(|v| v * v).sum::<f64>() / params.m as f64;
    }
    assert!((total / 100.0 - 1.0).abs() < 0.05, "{}", total / 100.0);
}

#[test]
fn dense_block_variances() {
    let params = CodeParams::new(8, 64, 0.5, 10.0).unwrap();
    let ens = CoupledEnsembleParams {
        l_c: 2,
        l_r: 3,
        w: 1,
        sqrt_j: 0.5,
        beta_seed: 1.5,
    };
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_gaussian(&ens, &params, &alloc, &mut from_seed(8), DENSE_ENTRY_BUDGET).unwrap();
    let g = op.geometry();
    let a = op.dense_entries().unwrap();
    for r in 0..3 {
        for c in 0..2 {
            let vals: Vec<f64> = g
                .row_range(r)
                .flat_map(|mu| g.col_range(c).map(move |i| a[mu * g.n() + i]))
                .collect();
            let var = vals.iter().map(|x| x * x).sum::<f64>() / vals.len() as f64;
            let expect = g.variance(r, c);
            if expect == 0.0 {
                assert_eq!(var, 0.0);
            } else {
                let sd = expect * (2.0 / vals.len() as f64).sqrt();
                assert!((var - expect).abs() < 5.0 * sd, "({r},{c}) {var} vs {expect}");
            }
        }
    }
}

#[test]
fn dense_budget_and_degenerate_rows() {
    let params = CodeParams::new(64, 128, 1.0, 10.0).unwrap();
    let alloc = PowerAllocation::constant(params.l);
    let err = build_dense_gaussian(&params, None, &alloc, &mut from_seed(0), 1000).unwrap_err();
    assert!(matches!(err, Error::MemoryBudget { .. }));
    assert!(VarianceProfile::new(2, 2, vec![1.0, 1.0, 0.0, 0.0], vec![0.1, 0.1]).is_err());
}

#[test]
fn trivial_ensemble_is_one_block() {
    let params = CodeParams::new(16, 32, 1.0, 10.0).unwrap();
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_hadamard(&CoupledEnsembleParams::trivial(), &params, &alloc, &mut from_seed(5)).unwrap();
    assert!(op.is_homogeneous());
    assert_eq!(op.geometry().height(0), params.m);
}

#[test]
fn selection_must_fit() {
    // B=2 at a low rate asks for more rows than modes
    let params = CodeParams::new(2, 8, 0.1, 10.0).unwrap();
    let alloc = PowerAllocation::constant(params.l);
    assert!(build_hadamard(&params, None, &alloc, &mut from_seed(5)).is_err());
}

#[test]
fn rate_bookkeeping() {
    let ens = CoupledEnsembleParams {
        l_c: 16,
        l_r: 17,
        w: 2,
        sqrt_j: 0.4,
        beta_seed: 1.4,
    };
    let params = CodeParams::new(512, 1024, 1.5, 15.0).unwrap();
    let g = BlockGeometry::new(&params, &ens.profile(params.alpha).unwrap(), &PowerAllocation::constant(1024)).unwrap();
    assert_eq!(g.heights().iter().sum::<usize>(), params.m);
    let w = g.width() as f64;
    let seed = ens.alpha_seed(params.alpha) * w;
    let rest = ens.alpha_rest(params.alpha) * w;
    assert!((g.height(0) as f64 - seed).abs() <= 17.0);
    for r in 1..17 {
        assert!((g.height(r) as f64 - rest).abs() < 1.0);
    }
}

#[test]
fn manifest_round_trip() {
    let (params, ens) = small_coupled();
    let alloc = PowerAllocation::constant(params.l);
    let op = build_coupled_hadamard(&ens, &params, &alloc, &mut from_seed(6)).unwrap();
    let text = serde_json::to_string_pretty(op.manifest()).unwrap();
    let back: OperatorManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back.block_seeds.iter().filter(|s| s.is_some()).count(), 5);
    let rebuilt = Operator::from_manifest(&back).unwrap();
    assert_eq!(rebuilt.densify(), op.densify());

    let profile = ens.profile(params.alpha).unwrap();
    let dense = build_dense_gaussian(&params, Some(&profile), &alloc, &mut from_seed(7), DENSE_ENTRY_BUDGET).unwrap();
    let again = Operator::from_manifest(dense.manifest()).unwrap();
    assert_eq!(again.dense_entries(), dense.dense_entries());

    let mut bad = back.clone();
    bad.m += 1;
    assert!(Operator::from_manifest(&bad).is_err());
    let mut bad = back.clone();
    bad.heights[1] += 1;
    assert!(Operator::from_manifest(&bad).is_err());
    // Block (2, 0) lies outside the band.
    let mut bad = back.clone();
    bad.block_seeds[4] = Some(1);
    assert!(Operator::from_manifest(&bad).is_err());
    let mut bad = back;
    bad.block_seeds[0] = None;
    assert!(Operator::from_manifest(&bad).is_err());
}

#[test]
fn se_profile_of_homogeneous_is_unit() {
    let params = CodeParams::new(64, 128, 1.0, 10.0).unwrap();
    let g = BlockGeometry::new(&params, &VarianceProfile::homogeneous(params.alpha).unwrap(), &PowerAllocation::constant(128)).unwrap();
    let p = g.se_profile();
    assert!((p.j(0, 0) - 1.0).abs() < 1e-12);
    assert!((p.alpha() - params.m as f64 / params.n as f64).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity(seed in any::<u64>(), l_c in 1usize..4, b_pow in 1u32..5) {
        let b = 1usize << b_pow;
        let l = 8 * l_c;
        let params = CodeParams::new(b, l, 0.4, 10.0).unwrap();
        let profile = if l_c == 1 {
            VarianceProfile::homogeneous(params.alpha).unwrap()
        } else {
            CoupledEnsembleParams { l_c, l_r: l_c + 1, w: 1, sqrt_j: 0.5, beta_seed: 1.2 }
                .profile(params.alpha)
                .unwrap()
        };
        let alloc = PowerAllocation::constant(l);
        let mut rng = from_seed(seed);
        let ops = [
            build_hadamard(&params, Some(&profile), &alloc, &mut rng),
            build_dense_gaussian(&params, Some(&profile), &alloc, &mut rng, DENSE_ENTRY_BUDGET),
        ];
        for op in ops {
            let Ok(op) = op else { continue };
            let x = random_vec(op.n(), &mut rng);
            let x2 = random_vec(op.n(), &mut rng);
            let f = random_vec(op.m(), &mut rng);
            let fx = op.apply_forward(&x).unwrap();
            let ftf = op.apply_adjoint(&f).unwrap();
            let lhs: f64 = fx.iter().zip(&f).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&ftf).map(|(a, b)| a * b).sum();
            let scale: f64 = fx.iter().map(|v| v * v).sum::<f64>().sqrt() * f.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1e-300));

            let (a, bcoef) = (0.7, -1.3);
            let comb: Vec<f64> = x.iter().zip(&x2).map(|(p, q)| a * p + bcoef * q).collect();
            let fx2 = op.apply_forward(&x2).unwrap();
            let lin = op.apply_forward(&comb).unwrap();
            for ((l, p), q) in lin.iter().zip(&fx).zip(&fx2) {
                prop_assert!((l - (a * p + bcoef * q)).abs() <= 1e-10 * (1.0 + l.abs()));
            }

            let v: Vec<f64> = x.iter().map(|t| t.abs()).collect();
            prop_assert!(op.apply_sq_forward(&v).unwrap().iter().all(|&t| t >= 0.0));
            let fa: Vec<f64> = f.iter().map(|t| t.abs()).collect();
            prop_assert!(op.apply_sq_adjoint(&fa).unwrap().iter().all(|&t| t >= 0.0));
        }
    }
}
