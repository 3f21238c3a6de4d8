use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Spatially coupled band ensemble `(L_c, L_r, w, √J, β_seed)`.
///
/// Block `(r, c)` (zero-based) has unit variance when `0 <= r - c <= w`,
/// variance `J` when `c = r + 1`, and is empty otherwise. The chain is open:
/// nothing wraps around at either end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnsembleParams {
    pub l_c: usize,
    pub l_r: usize,
    pub w: usize,
    pub sqrt_j: f64,
    pub beta_seed: f64,
}

impl CoupledEnsembleParams {
    /// One Hadamard or Gaussian block with no coupling.
    pub fn trivial() -> Self {
        Self {
            l_c: 1,
            l_r: 1,
            w: 0,
            sqrt_j: 0.0,
            beta_seed: 1.0,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.l_c == 1 && self.l_r == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_c == 0 || self.l_r == 0 {
            return Err(invalid("L_c and L_r must be positive"));
        }
        if self.is_trivial() {
            return Ok(());
        }
        if self.l_r < 2 {
            return Err(invalid("a coupled ensemble needs at least two block rows"));
        }
        if !(self.beta_seed > 1.0) {
            return Err(invalid(format!("beta_seed must exceed 1, got {}", self.beta_seed)));
        }
        if self.w < 1 || self.w >= self.l_c {
            return Err(invalid(format!(
                "coupling window must satisfy 1 <= w < L_c, got w={} L_c={}",
                self.w, self.l_c
            )));
        }
        if !(self.sqrt_j >= 0.0) || !self.sqrt_j.is_finite() {
            return Err(invalid("coupling strength must be non-negative"));
        }
        if !(self.beta_seed < self.l_c as f64) {
            return Err(invalid(format!(
                "beta_seed={} leaves no measurements for the bulk (L_c={})",
                self.beta_seed, self.l_c
            )));
        }
        Ok(())
    }

    pub fn alpha_seed(&self, alpha: f64) -> f64 {
        if self.is_trivial() {
            alpha
        } else {
            alpha * self.beta_seed
        }
    }

    pub fn alpha_rest(&self, alpha: f64) -> f64 {
        if self.is_trivial() {
            alpha
        } else {
            alpha * (self.l_c as f64 - self.beta_seed) / (self.l_r - 1) as f64
        }
    }

    /// Band profile at overall measurement ratio `alpha`.
    pub fn profile(&self, alpha: f64) -> Result<VarianceProfile> {
        self.validate()?;
        let (l_r, l_c) = (self.l_r, self.l_c);
        let j = self.sqrt_j * self.sqrt_j;
        let mut var = vec![0.0; l_r * l_c];
        for r in 0..l_r {
            for c in 0..l_c {
                var[r * l_c + c] = if c <= r && r - c <= self.w {
                    1.0
                } else if c == r + 1 {
                    j
                } else {
                    0.0
                };
            }
        }
        let mut alpha_r = vec![self.alpha_rest(alpha); l_r];
        alpha_r[0] = self.alpha_seed(alpha);
        VarianceProfile::new(l_r, l_c, var, alpha_r)
    }
}

/// Per-block variance multipliers `J_{r,c}` and per-block-row rates `alpha_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    l_r: usize,
    l_c: usize,
    j: Vec<f64>,
    alpha_r: Vec<f64>,
}

impl VarianceProfile {
    pub fn new(l_r: usize, l_c: usize, j: Vec<f64>, alpha_r: Vec<f64>) -> Result<Self> {
        if l_r == 0 || l_c == 0 {
            return Err(invalid("profile needs at least one block"));
        }
        if j.len() != l_r * l_c || alpha_r.len() != l_r {
            return Err(invalid(format!(
                "profile arrays do not match a {l_r}x{l_c} block layout"
            )));
        }
        if j.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(invalid("variance multipliers must be finite and non-negative"));
        }
        if alpha_r.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(invalid("block-row measurement rates must be positive"));
        }
        for r in 0..l_r {
            if j[r * l_c..(r + 1) * l_c].iter().all(|&x| x == 0.0) {
                return Err(invalid(format!("block row {r} has no non-zero block")));
            }
        }
        for c in 0..l_c {
            if (0..l_r).all(|r| j[r * l_c + c] == 0.0) {
                return Err(invalid(format!("block column {c} is never measured")));
            }
        }
        Ok(Self {
            l_r,
            l_c,
            j,
            alpha_r,
        })
    }

    pub fn homogeneous(alpha: f64) -> Result<Self> {
        Self::new(1, 1, vec![1.0], vec![alpha])
    }

    pub fn rows(&self) -> usize {
        self.l_r
    }

    pub fn cols(&self) -> usize {
        self.l_c
    }

    pub fn j(&self, r: usize, c: usize) -> f64 {
        self.j[r * self.l_c + c]
    }

    pub fn alpha_r(&self) -> &[f64] {
        &self.alpha_r
    }

    /// Overall measurement ratio `Σ_r alpha_r / L_c`.
    pub fn alpha(&self) -> f64 {
        self.alpha_r.iter().sum::<f64>() / self.l_c as f64
    }

    pub fn is_trivial(&self) -> bool {
        self.l_r == 1 && self.l_c == 1
    }

    /// Rescales every multiplier so that a unit-power signal gives unit codeword power,
    /// `Σ_r alpha_r Σ_c J_rc = L_c Σ_r alpha_r`.
    pub fn power_normalized(&self) -> Self {
        let load: f64 = (0..self.l_r)
            .map(|r| self.alpha_r[r] * (0..self.l_c).map(|c| self.j(r, c)).sum::<f64>())
            .sum();
        let s = self.l_c as f64 * self.alpha_r.iter().sum::<f64>() / load;
        Self {
            j: self.j.iter().map(|x| x * s).collect(),
            ..self.clone()
        }
    }
}
