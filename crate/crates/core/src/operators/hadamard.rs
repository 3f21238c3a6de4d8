use rand::seq::index;

use super::fht::{butterflies, hadamard_entry};
use super::BlockGeometry;
use crate::error::{invalid, Result};
use crate::rng::from_seed;

/// Mode selections of a block Hadamard operator.
///
/// Block columns are zero-padded to `padded` entries. Modes are drawn from
/// `1..padded`; the constant mode 0 only ever sees the block sum, which the
/// section constraint already fixes.
#[derive(Debug, Clone)]
pub(super) struct HadamardBlocks {
    padded: usize,
    modes: Vec<Option<Vec<usize>>>,
    amp: Vec<f64>,
}

impl HadamardBlocks {
    pub(super) fn generate(g: &BlockGeometry, seeds: &[Option<u64>]) -> Result<Self> {
        let (l_r, l_c) = (g.row_blocks(), g.col_blocks());
        if seeds.len() != l_r * l_c {
            return Err(invalid("one seed slot per block expected"));
        }
        let padded = g.width().next_power_of_two();
        let mut modes = Vec::with_capacity(l_r * l_c);
        let mut amp = Vec::with_capacity(l_r * l_c);
        for r in 0..l_r {
            for c in 0..l_c {
                let k = r * l_c + c;
                let var = g.variance(r, c);
                match (var > 0.0, seeds[k]) {
                    (true, Some(seed)) => {
                        let h = g.height(r);
                        if h > padded - 1 {
                            return Err(invalid(format!(
                                "block row {r} has {h} rows but only {} Hadamard modes are available",
                                padded - 1
                            )));
                        }
                        let mut rng = from_seed(seed);
                        let pick = index::sample(&mut rng, padded - 1, h);
                        modes.push(Some(pick.into_iter().map(|m| m + 1).collect()));
                    }
                    (false, None) => modes.push(None),
                    _ => return Err(invalid(format!("block ({r},{c}) seed does not match its variance"))),
                }
                amp.push(var.sqrt());
            }
        }
        Ok(Self { padded, modes, amp })
    }

    fn block(&self, g: &BlockGeometry, r: usize, c: usize) -> Option<(&[usize], f64)> {
        let k = r * g.col_blocks() + c;
        self.modes[k].as_deref().map(|m| (m, self.amp[k]))
    }

    pub(super) fn forward(&self, g: &BlockGeometry, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; self.padded];
        for c in 0..g.col_blocks() {
            buf.fill(0.0);
            buf[..g.width()].copy_from_slice(&x[g.col_range(c)]);
            butterflies(&mut buf);
            for r in 0..g.row_blocks() {
                if let Some((modes, amp)) = self.block(g, r, c) {
                    for (o, &m) in out[g.row_range(r)].iter_mut().zip(modes) {
                        *o += amp * buf[m];
                    }
                }
            }
        }
    }

    pub(super) fn adjoint(&self, g: &BlockGeometry, f: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; self.padded];
        for c in 0..g.col_blocks() {
            buf.fill(0.0);
            for r in 0..g.row_blocks() {
                if let Some((modes, amp)) = self.block(g, r, c) {
                    for (&v, &m) in f[g.row_range(r)].iter().zip(modes) {
                        buf[m] += amp * v;
                    }
                }
            }
            butterflies(&mut buf);
            out[g.col_range(c)].copy_from_slice(&buf[..g.width()]);
        }
    }

    pub(super) fn densify(&self, g: &BlockGeometry) -> Vec<f64> {
        let n = g.n();
        let mut dense = vec![0.0; g.m() * n];
        for r in 0..g.row_blocks() {
            for c in 0..g.col_blocks() {
                if let Some((modes, amp)) = self.block(g, r, c) {
                    for (mu, &mode) in g.row_range(r).zip(modes) {
                        for (k, i) in g.col_range(c).enumerate() {
                            dense[mu * n + i] = amp * hadamard_entry(mode, k);
                        }
                    }
                }
            }
        }
        dense
    }
}
