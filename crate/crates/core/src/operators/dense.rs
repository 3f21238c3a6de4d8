use rand_distr::{Distribution, StandardNormal};

use super::BlockGeometry;
use crate::error::{invalid, Error, Result};
use crate::rng::from_seed;

/// Row-major Gaussian matrix whose block `(r, c)` has variance `s·J_rc`.
#[derive(Debug, Clone)]
pub(super) struct DenseBlocks {
    entries: Vec<f64>,
    /// Non-empty column blocks of every row block.
    active: Vec<Vec<usize>>,
}

impl DenseBlocks {
    pub(super) fn generate(g: &BlockGeometry, seeds: &[Option<u64>], budget: usize) -> Result<Self> {
        let (m, n) = (g.m(), g.n());
        let total = m.saturating_mul(n);
        if total > budget {
            return Err(Error::MemoryBudget {
                entries: total,
                budget,
            });
        }
        let (l_r, l_c) = (g.row_blocks(), g.col_blocks());
        if seeds.len() != l_r * l_c {
            return Err(invalid("one seed slot per block expected"));
        }
        let mut entries = vec![0.0; total];
        let mut active = vec![Vec::new(); l_r];
        for r in 0..l_r {
            for c in 0..l_c {
                let var = g.variance(r, c);
                match (var > 0.0, seeds[r * l_c + c]) {
                    (true, Some(seed)) => {
                        let sd = var.sqrt();
                        let mut rng = from_seed(seed);
                        for mu in g.row_range(r) {
                            for e in &mut entries[mu * n + g.col_range(c).start..mu * n + g.col_range(c).end] {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                *e = sd * z;
                            }
                        }
                        active[r].push(c);
                    }
                    (false, None) => {}
                    _ => return Err(invalid(format!("block ({r},{c}) seed does not match its variance"))),
                }
            }
        }
        Ok(Self { entries, active })
    }

    pub(super) fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn rows<'a>(&'a self, g: &'a BlockGeometry) -> impl Iterator<Item = (usize, &'a [usize])> + 'a {
        (0..g.row_blocks()).flat_map(move |r| g.row_range(r).map(move |mu| (mu, self.active[r].as_slice())))
    }

    pub(super) fn forward(&self, g: &BlockGeometry, x: &[f64], out: &mut [f64]) {
        let n = g.n();
        for (mu, blocks) in self.rows(g) {
            let row = &self.entries[mu * n..(mu + 1) * n];
            out[mu] = blocks
                .iter()
                .map(|&c| dot(&row[g.col_range(c)], &x[g.col_range(c)]))
                .sum();
        }
    }

    pub(super) fn adjoint(&self, g: &BlockGeometry, f: &[f64], out: &mut [f64]) {
        let n = g.n();
        out.fill(0.0);
        for (mu, blocks) in self.rows(g) {
            let row = &self.entries[mu * n..(mu + 1) * n];
            for &c in blocks {
                for (o, a) in out[g.col_range(c)].iter_mut().zip(&row[g.col_range(c)]) {
                    *o += a * f[mu];
                }
            }
        }
    }

    pub(super) fn sq_forward(&self, g: &BlockGeometry, v: &[f64], out: &mut [f64]) {
        let n = g.n();
        for (mu, blocks) in self.rows(g) {
            let row = &self.entries[mu * n..(mu + 1) * n];
            out[mu] = blocks
                .iter()
                .map(|&c| {
                    row[g.col_range(c)]
                        .iter()
                        .zip(&v[g.col_range(c)])
                        .map(|(a, v)| a * a * v)
                        .sum::<f64>()
                })
                .sum();
        }
    }

    pub(super) fn sq_adjoint(&self, g: &BlockGeometry, f: &[f64], out: &mut [f64]) {
        let n = g.n();
        out.fill(0.0);
        for (mu, blocks) in self.rows(g) {
            let row = &self.entries[mu * n..(mu + 1) * n];
            for &c in blocks {
                for (o, a) in out[g.col_range(c)].iter_mut().zip(&row[g.col_range(c)]) {
                    *o += a * a * f[mu];
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
