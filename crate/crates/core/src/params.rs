use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Dimensions of a sparse superposition code over the AWGN channel.
///
/// `alpha` is the asymptotic measurement ratio `log2(B) / (R B)`; the codeword
/// length `m` is its rounded realization, so the rate actually used is
/// [`realized_rate`](Self::realized_rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub b: usize,
    pub l: usize,
    pub rate: f64,
    pub snr: f64,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
}

impl CodeParams {
    pub fn new(b: usize, l: usize, rate: f64, snr: f64) -> Result<Self> {
        if b < 2 {
            return Err(invalid(format!("section size B must be at least 2, got {b}")));
        }
        if l < 1 {
            return Err(invalid("section count L must be at least 1"));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid(format!("rate must be positive and finite, got {rate}")));
        }
        if !(snr > 0.0) {
            return Err(invalid(format!("snr must be positive, got {snr}")));
        }
        let n = l
            .checked_mul(b)
            .ok_or_else(|| invalid("L*B overflows"))?;
        let alpha = (b as f64).log2() / (rate * b as f64);
        let m = (alpha * n as f64).round() as usize;
        if m < 1 {
            return Err(invalid(format!(
                "rate {rate} is too high for B={b}, L={l}: the codeword would be empty"
            )));
        }
        Ok(Self {
            b,
            l,
            rate,
            snr,
            n,
            m,
            alpha,
        })
    }

    /// Bits per channel use with the integer codeword length.
    pub fn realized_rate(&self) -> f64 {
        (self.b as f64).log2() * self.l as f64 / self.m as f64
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / self.snr
    }

    /// Same code with a different rate (and therefore codeword length).
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        Self::new(self.b, self.l, rate, self.snr)
    }
}

/// Free-function form of [`CodeParams::new`].
pub fn derive_dimensions(b: usize, l: usize, rate: f64, snr: f64) -> Result<CodeParams> {
    CodeParams::new(b, l, rate, snr)
}
