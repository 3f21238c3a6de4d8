//! Linear coding maps and the four applications the decoder needs:
//! `F x`, `Fᵀ f`, `F∘F v` and `(F∘F)ᵀ f`.

mod dense;
mod ensemble;
mod fht;
mod hadamard;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use ensemble::{CoupledEnsembleParams, VarianceProfile};
pub use fht::{fht, fht_in_place, hadamard_entry};

use crate::allocation::PowerAllocation;
use crate::error::{check_len, invalid, Error, Result};
use crate::params::CodeParams;
use crate::rng::Rng;

/// Dense operators above this many entries are refused unless a larger budget is passed.
pub const DENSE_ENTRY_BUDGET: usize = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    DenseGaussian,
    CoupledHadamard,
}

/// Block layout of an operator: row and column block boundaries and the
/// squared-entry constant `s·J_rc` of every block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGeometry {
    b: usize,
    l: usize,
    row_starts: Vec<usize>,
    col_starts: Vec<usize>,
    var: Vec<f64>,
    scale: f64,
    profile: VarianceProfile,
}

impl BlockGeometry {
    /// Row heights follow the profile rates, rounded down, with the remainder in the first row.
    /// The scale makes the expected codeword power one for the given allocation.
    pub fn new(
        params: &CodeParams,
        profile: &VarianceProfile,
        allocation: &PowerAllocation,
    ) -> Result<Self> {
        check_len("allocation", params.l, allocation.len())?;
        let (l_r, l_c) = (profile.rows(), profile.cols());
        if params.l % l_c != 0 {
            return Err(invalid(format!(
                "L={} sections cannot be split into {l_c} column blocks",
                params.l
            )));
        }
        let width = params.n / l_c;
        let mut heights: Vec<usize> = profile
            .alpha_r()
            .iter()
            .map(|a| (a * width as f64).floor() as usize)
            .collect();
        let assigned: usize = heights.iter().sum();
        if assigned > params.m {
            return Err(invalid("block-row rates exceed the codeword length"));
        }
        heights[0] += params.m - assigned;

        let per = params.l / l_c;
        let col_ms: Vec<f64> = (0..l_c)
            .map(|c| allocation.mean_square_over(c * per..(c + 1) * per))
            .collect();
        let load: f64 = (0..l_r)
            .map(|r| {
                heights[r] as f64
                    * (0..l_c)
                        .map(|c| profile.j(r, c) * per as f64 * col_ms[c])
                        .sum::<f64>()
            })
            .sum();
        let scale = params.m as f64 / load;
        Self::from_parts(params.b, params.l, profile.clone(), heights, scale)
    }

    fn from_parts(
        b: usize,
        l: usize,
        profile: VarianceProfile,
        heights: Vec<usize>,
        scale: f64,
    ) -> Result<Self> {
        let (l_r, l_c) = (profile.rows(), profile.cols());
        check_len("block-row heights", l_r, heights.len())?;
        if l % l_c != 0 {
            return Err(invalid("sections do not split evenly into column blocks"));
        }
        if let Some(r) = heights.iter().position(|&h| h == 0) {
            return Err(invalid(format!(
                "block row {r} gets no measurements; increase L or the rate of that row"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid(format!("operator scale must be positive, got {scale}")));
        }
        let mut row_starts = vec![0];
        for h in &heights {
            row_starts.push(row_starts.last().unwrap() + h);
        }
        let width = b * l / l_c;
        let col_starts = (0..=l_c).map(|c| c * width).collect();
        let var = (0..l_r)
            .flat_map(|r| (0..l_c).map(move |c| (r, c)))
            .map(|(r, c)| scale * profile.j(r, c))
            .collect();
        Ok(Self {
            b,
            l,
            row_starts,
            col_starts,
            var,
            scale,
            profile,
        })
    }

    pub fn row_blocks(&self) -> usize {
        self.profile.rows()
    }

    pub fn col_blocks(&self) -> usize {
        self.profile.cols()
    }

    pub fn m(&self) -> usize {
        *self.row_starts.last().unwrap()
    }

    pub fn n(&self) -> usize {
        *self.col_starts.last().unwrap()
    }

    pub fn section_size(&self) -> usize {
        self.b
    }

    pub fn sections(&self) -> usize {
        self.l
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_starts[r]..self.row_starts[r + 1]
    }

    pub fn col_range(&self, c: usize) -> std::ops::Range<usize> {
        self.col_starts[c]..self.col_starts[c + 1]
    }

    pub fn height(&self, r: usize) -> usize {
        self.row_starts[r + 1] - self.row_starts[r]
    }

    pub fn width(&self) -> usize {
        self.col_starts[1]
    }

    /// Squared-entry constant (exact for Hadamard blocks, the variance for Gaussian ones).
    pub fn variance(&self, r: usize, c: usize) -> f64 {
        self.var[r * self.col_blocks() + c]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn profile(&self) -> &VarianceProfile {
        &self.profile
    }

    pub fn heights(&self) -> Vec<usize> {
        (0..self.row_blocks()).map(|r| self.height(r)).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.profile.is_trivial()
    }

    /// Profile in the normalization where entries have variance `J_rc / L`,
    /// with the realized block-row rates. This is what state evolution consumes.
    pub fn se_profile(&self) -> VarianceProfile {
        let (l_r, l_c) = (self.row_blocks(), self.col_blocks());
        let j = (0..l_r * l_c)
            .map(|k| self.var[k] * self.l as f64)
            .collect();
        let alpha_r = (0..l_r)
            .map(|r| self.height(r) as f64 / self.width() as f64)
            .collect();
        VarianceProfile::new(l_r, l_c, j, alpha_r).expect("geometry holds a valid profile")
    }
}

/// Everything needed to rebuild an operator bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorManifest {
    pub kind: OperatorKind,
    pub b: usize,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub profile: VarianceProfile,
    pub heights: Vec<usize>,
    pub scale: f64,
    /// Row-major over blocks; `None` for empty blocks.
    pub block_seeds: Vec<Option<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<CoupledEnsembleParams>,
}

impl OperatorManifest {
    /// Variance profile seen by state evolution, without generating the operator.
    pub fn se_profile(&self) -> Result<VarianceProfile> {
        let g = BlockGeometry::from_parts(self.b, self.l, self.profile.clone(), self.heights.clone(), self.scale)?;
        Ok(g.se_profile())
    }
}

#[derive(Debug, Clone)]
enum Imp {
    Dense(dense::DenseBlocks),
    Hadamard(hadamard::HadamardBlocks),
}

/// A realized coding operator. Immutable once built.
#[derive(Debug, Clone)]
pub struct Operator {
    geometry: BlockGeometry,
    imp: Imp,
    manifest: OperatorManifest,
}

impl Operator {
    fn assemble(
        kind: OperatorKind,
        geometry: BlockGeometry,
        block_seeds: Vec<Option<u64>>,
        ensemble: Option<CoupledEnsembleParams>,
        budget: usize,
    ) -> Result<Self> {
        let imp = match kind {
            OperatorKind::DenseGaussian => {
                Imp::Dense(dense::DenseBlocks::generate(&geometry, &block_seeds, budget)?)
            }
            OperatorKind::CoupledHadamard => {
                Imp::Hadamard(hadamard::HadamardBlocks::generate(&geometry, &block_seeds)?)
            }
        };
        let manifest = OperatorManifest {
            kind,
            b: geometry.b,
            l: geometry.l,
            m: geometry.m(),
            n: geometry.n(),
            profile: geometry.profile.clone(),
            heights: geometry.heights(),
            scale: geometry.scale,
            block_seeds,
            ensemble,
        };
        Ok(Self {
            geometry,
            imp,
            manifest,
        })
    }

    /// Rebuilds the operator described by `manifest`, rejecting inconsistent descriptions.
    pub fn from_manifest(manifest: &OperatorManifest) -> Result<Self> {
        let geometry = BlockGeometry::from_parts(
            manifest.b,
            manifest.l,
            manifest.profile.clone(),
            manifest.heights.clone(),
            manifest.scale,
        )
        .map_err(|e| invalid(format!("manifest: {e}")))?;
        check_len("manifest codeword length", geometry.m(), manifest.m)?;
        check_len("manifest component count", geometry.n(), manifest.n)?;
        Self::assemble(
            manifest.kind,
            geometry,
            manifest.block_seeds.clone(),
            manifest.ensemble,
            usize::MAX,
        )
    }

    pub fn kind(&self) -> OperatorKind {
        self.manifest.kind
    }

    pub fn m(&self) -> usize {
        self.geometry.m()
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn geometry(&self) -> &BlockGeometry {
        &self.geometry
    }

    pub fn manifest(&self) -> &OperatorManifest {
        &self.manifest
    }

    pub fn is_homogeneous(&self) -> bool {
        self.geometry.is_homogeneous()
    }

    /// Row-major entries for dense operators.
    pub fn dense_entries(&self) -> Option<&[f64]> {
        match &self.imp {
            Imp::Dense(d) => Some(d.entries()),
            Imp::Hadamard(_) => None,
        }
    }

    /// Checks that the operator fits a code with these parameters.
    pub fn check_params(&self, params: &CodeParams) -> Result<()> {
        check_len("operator rows vs codeword length", params.m, self.m())?;
        check_len("operator columns vs message length", params.n, self.n())?;
        if params.b != self.geometry.b {
            return Err(invalid("operator was built for a different section size"));
        }
        Ok(())
    }

    /// `out = F x`.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("forward input", self.n(), x.len())?;
        check_len("forward output", self.m(), out.len())?;
        match &self.imp {
            Imp::Dense(d) => d.forward(&self.geometry, x, out),
            Imp::Hadamard(h) => h.forward(&self.geometry, x, out),
        }
        Ok(())
    }

    /// `out = Fᵀ f`.
    pub fn adjoint(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("adjoint input", self.m(), f.len())?;
        check_len("adjoint output", self.n(), out.len())?;
        match &self.imp {
            Imp::Dense(d) => d.adjoint(&self.geometry, f, out),
            Imp::Hadamard(h) => h.adjoint(&self.geometry, f, out),
        }
        Ok(())
    }

    /// `out_μ = Σ_i F_μi² v_i`.
    pub fn sq_forward(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("squared forward input", self.n(), v.len())?;
        check_len("squared forward output", self.m(), out.len())?;
        match &self.imp {
            Imp::Dense(d) => d.sq_forward(&self.geometry, v, out),
            Imp::Hadamard(_) => block_sq_forward(&self.geometry, v, out),
        }
        Ok(())
    }

    /// `out_i = Σ_μ F_μi² f_μ`.
    pub fn sq_adjoint(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("squared adjoint input", self.m(), f.len())?;
        check_len("squared adjoint output", self.n(), out.len())?;
        match &self.imp {
            Imp::Dense(d) => d.sq_adjoint(&self.geometry, f, out),
            Imp::Hadamard(_) => block_sq_adjoint(&self.geometry, f, out),
        }
        Ok(())
    }

    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m()];
        self.forward(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_adjoint(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.adjoint(f, &mut out)?;
        Ok(out)
    }

    pub fn apply_sq_forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m()];
        self.sq_forward(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_sq_adjoint(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.sq_adjoint(f, &mut out)?;
        Ok(out)
    }

    /// Explicit row-major matrix. Meant for small instances and tests.
    pub fn densify(&self) -> Vec<f64> {
        match &self.imp {
            Imp::Dense(d) => d.entries().to_vec(),
            Imp::Hadamard(h) => h.densify(&self.geometry),
        }
    }
}

fn block_sq_forward(g: &BlockGeometry, v: &[f64], out: &mut [f64]) {
    let sums: Vec<f64> = (0..g.col_blocks())
        .map(|c| v[g.col_range(c)].iter().sum())
        .collect();
    for r in 0..g.row_blocks() {
        let val: f64 = sums
            .iter()
            .enumerate()
            .map(|(c, s)| g.variance(r, c) * s)
            .sum();
        out[g.row_range(r)].fill(val);
    }
}

fn block_sq_adjoint(g: &BlockGeometry, f: &[f64], out: &mut [f64]) {
    let sums: Vec<f64> = (0..g.row_blocks())
        .map(|r| f[g.row_range(r)].iter().sum())
        .collect();
    for c in 0..g.col_blocks() {
        let val: f64 = sums
            .iter()
            .enumerate()
            .map(|(r, s)| g.variance(r, c) * s)
            .sum();
        out[g.col_range(c)].fill(val);
    }
}

fn draw_block_seeds(profile: &VarianceProfile, rng: &mut Rng) -> Vec<Option<u64>> {
    let mut seeds = Vec::with_capacity(profile.rows() * profile.cols());
    for r in 0..profile.rows() {
        for c in 0..profile.cols() {
            seeds.push((profile.j(r, c) > 0.0).then(|| rng.next_u64()));
        }
    }
    seeds
}

/// I.i.d. Gaussian blocks with variance `s·J_rc`; `None` means the homogeneous profile.
pub fn build_dense_gaussian(
    params: &CodeParams,
    profile: Option<&VarianceProfile>,
    allocation: &PowerAllocation,
    rng: &mut Rng,
    budget: usize,
) -> Result<Operator> {
    let entries = params.m.saturating_mul(params.n);
    if entries > budget {
        return Err(Error::MemoryBudget { entries, budget });
    }
    let homogeneous;
    let profile = match profile {
        Some(p) => p,
        None => {
            homogeneous = VarianceProfile::homogeneous(params.alpha)?;
            &homogeneous
        }
    };
    let geometry = BlockGeometry::new(params, profile, allocation)?;
    let seeds = draw_block_seeds(profile, rng);
    Operator::assemble(OperatorKind::DenseGaussian, geometry, seeds, None, budget)
}

/// Randomly selected Hadamard modes per block; `None` means a single homogeneous block.
pub fn build_hadamard(
    params: &CodeParams,
    profile: Option<&VarianceProfile>,
    allocation: &PowerAllocation,
    rng: &mut Rng,
) -> Result<Operator> {
    let homogeneous;
    let profile = match profile {
        Some(p) => p,
        None => {
            homogeneous = VarianceProfile::homogeneous(params.alpha)?;
            &homogeneous
        }
    };
    let geometry = BlockGeometry::new(params, profile, allocation)?;
    let seeds = draw_block_seeds(profile, rng);
    Operator::assemble(OperatorKind::CoupledHadamard, geometry, seeds, None, usize::MAX)
}

/// Hadamard operator drawn from a spatially coupled band ensemble.
pub fn build_coupled_hadamard(
    ensemble: &CoupledEnsembleParams,
    params: &CodeParams,
    allocation: &PowerAllocation,
    rng: &mut Rng,
) -> Result<Operator> {
    let profile = ensemble.profile(params.alpha)?;
    let mut op = build_hadamard(params, Some(&profile), allocation, rng)?;
    op.manifest.ensemble = Some(*ensemble);
    Ok(op)
}

/// Gaussian operator drawn from a spatially coupled band ensemble.
pub fn build_coupled_gaussian(
    ensemble: &CoupledEnsembleParams,
    params: &CodeParams,
    allocation: &PowerAllocation,
    rng: &mut Rng,
    budget: usize,
) -> Result<Operator> {
    let profile = ensemble.profile(params.alpha)?;
    let mut op = build_dense_gaussian(params, Some(&profile), allocation, rng, budget)?;
    op.manifest.ensemble = Some(*ensemble);
    Ok(op)
}

#[cfg(test)]
mod tests;
