//! Fixtures shared by the benchmarks.

use sparc_core::operators::{build_coupled_hadamard, build_dense_gaussian, build_hadamard, DENSE_ENTRY_BUDGET};
use sparc_core::rng::{stream, StreamKind};
use sparc_core::{random_message, transmit, CodeParams, CoupledEnsembleParams, Operator, PowerAllocation};

pub struct Fixture {
    pub params: CodeParams,
    pub alloc: PowerAllocation,
    pub op: Operator,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy)]
pub enum Kind {
    Dense,
    Hadamard,
    Coupled,
}

pub fn fixture(b: usize, l: usize, rate: f64, snr: f64, kind: Kind) -> Fixture {
    let params = CodeParams::new(b, l, rate, snr).expect("valid parameters");
    let alloc = PowerAllocation::constant(l);
    let mut rng = stream(1, 0, StreamKind::Operator);
    let op = match kind {
        Kind::Dense => build_dense_gaussian(&params, None, &alloc, &mut rng, DENSE_ENTRY_BUDGET),
        Kind::Hadamard => build_hadamard(&params, None, &alloc, &mut rng),
        Kind::Coupled => {
            let ens = CoupledEnsembleParams {
                l_c: 16,
                l_r: 17,
                w: 2,
                sqrt_j: 0.4,
                beta_seed: 1.4,
            };
            build_coupled_hadamard(&ens, &params, &alloc, &mut rng)
        }
    }
    .expect("operator builds");
    let x = random_message(&params, &alloc, &mut stream(1, 0, StreamKind::Message)).expect("message");
    let codeword = op.apply_forward(x.dense()).expect("dimensions match");
    let y = transmit(&codeword, snr, &mut stream(1, 0, StreamKind::Noise)).expect("snr > 0").received;
    Fixture { params, alloc, op, y }
}
