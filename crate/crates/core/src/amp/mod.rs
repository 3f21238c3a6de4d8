//! Approximate message passing decoders for sparse superposition codes.

mod decoder;
mod denoiser;
mod relaxed_bp;

use serde::{Deserialize, Serialize};

pub use decoder::{AmpDecoder, DecoderState, DecoderVariant};
pub use denoiser::{denoise_section, denoiser_derivative};
pub use relaxed_bp::{relaxed_bp_decode, RelaxedBp, RBP_MAX_COMPONENTS};

use crate::allocation::PowerAllocation;
use crate::error::Result;
use crate::message::SparseMessage;
use crate::metrics::{mse_per_section, symbol_error_rate};
use crate::operators::Operator;
use crate::params::CodeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub t_max: usize,
    pub eps: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            t_max: 500,
            eps: 1e-8,
        }
    }
}

/// One row of a decoding trace. Error columns are present when the truth is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub mse: Option<f64>,
    pub ser: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub estimate: SparseMessage,
    /// Posterior means after the last iteration.
    pub posterior: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Per section, the position of the largest posterior mean; ties go to the lowest index.
pub fn hard_decision(a: &[f64], b: usize, allocation: &PowerAllocation) -> Result<SparseMessage> {
    crate::error::check_len("posterior", allocation.len() * b, a.len())?;
    SparseMessage::new(b, argmax_sections(a, b), allocation)
}

pub(crate) fn argmax_sections(a: &[f64], b: usize) -> Vec<usize> {
    a.chunks(b)
        .map(|s| {
            let mut best = 0;
            for (j, &x) in s.iter().enumerate().skip(1) {
                if x > s[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn trace_row(t: usize, a: &[f64], b: usize, l: usize, delta: f64, truth: Option<&SparseMessage>) -> TraceRow {
    let (mse, ser) = match truth {
        Some(x) => (
            Some(mse_per_section(x.dense(), a, l).expect("dimensions checked")),
            Some(symbol_error_rate(x.symbols(), &argmax_sections(a, b))),
        ),
        None => (None, None),
    };
    TraceRow { t, mse, ser, delta }
}

/// General AMP in operator form.
pub fn amp_decode(
    received: &[f64],
    op: &Operator,
    params: &CodeParams,
    allocation: &PowerAllocation,
    config: &DecoderConfig,
    truth: Option<&SparseMessage>,
) -> Result<DecodeReport> {
    AmpDecoder::new(received, op, params, allocation, DecoderVariant::General)?.run(config, truth)
}

/// AMP with per-block variances `Θ_r`, `Σ_c`.
pub fn amp_decode_simplified(
    received: &[f64],
    op: &Operator,
    params: &CodeParams,
    allocation: &PowerAllocation,
    config: &DecoderConfig,
    truth: Option<&SparseMessage>,
) -> Result<DecodeReport> {
    AmpDecoder::new(received, op, params, allocation, DecoderVariant::Simplified)?.run(config, truth)
}

/// AMP written on the residual for homogeneous operators.
pub fn amp_decode_residual(
    received: &[f64],
    op: &Operator,
    params: &CodeParams,
    allocation: &PowerAllocation,
    config: &DecoderConfig,
    truth: Option<&SparseMessage>,
) -> Result<DecodeReport> {
    AmpDecoder::new(received, op, params, allocation, DecoderVariant::Residual)?.run(config, truth)
}
