use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::allocation::PowerAllocation;
use crate::error::{check_len, invalid, Result};
use crate::params::CodeParams;
use crate::rng::Rng;

/// Message with one non-zero entry per section.
///
/// Symbols are zero-based positions inside their section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMessage {
    b: usize,
    symbols: Vec<usize>,
    dense: Vec<f64>,
}

impl SparseMessage {
    pub fn new(b: usize, symbols: Vec<usize>, allocation: &PowerAllocation) -> Result<Self> {
        check_len("message sections", allocation.len(), symbols.len())?;
        if b < 2 {
            return Err(invalid("section size must be at least 2"));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= b) {
            return Err(invalid(format!("symbol {s} outside a section of size {b}")));
        }
        let mut dense = vec![0.0; b * symbols.len()];
        for (l, (&s, &c)) in symbols.iter().zip(allocation.amplitudes()).enumerate() {
            dense[l * b + s] = c;
        }
        Ok(Self { b, symbols, dense })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    pub fn section_size(&self) -> usize {
        self.b
    }

    pub fn sections(&self) -> usize {
        self.symbols.len()
    }
}

pub fn random_message(
    params: &CodeParams,
    allocation: &PowerAllocation,
    rng: &mut Rng,
) -> Result<SparseMessage> {
    check_len("allocation", params.l, allocation.len())?;
    let symbols = (0..params.l).map(|_| rng.random_range(0..params.b)).collect();
    SparseMessage::new(params.b, symbols, allocation)
}

/// Writes `index,value` lines.
pub fn write_records<W: Write>(mut out: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:e}")?;
    }
    Ok(())
}

/// Reads the format produced by [`write_records`].
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if n == 0 && line.trim() == "index,value" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| invalid(format!("line {}: expected index,value", n + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| invalid(format!("line {}: bad index", n + 1)))?;
        if idx != values.len() {
            return Err(invalid(format!("line {}: index {idx} out of order", n + 1)));
        }
        values.push(
            val.trim()
                .parse()
                .map_err(|_| invalid(format!("line {}: bad value", n + 1)))?,
        );
    }
    Ok(values)
}
