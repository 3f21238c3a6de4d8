use serde::{Deserialize, Serialize};

use super::denoiser::{denoise_section, denoise_uniform};
use super::{hard_decision, trace_row, DecodeReport, DecoderConfig};
use crate::allocation::PowerAllocation;
use crate::error::{check_len, invalid, Error, Result};
use crate::message::SparseMessage;
use crate::operators::Operator;
use crate::params::CodeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderVariant {
    /// Per-factor `Θ_μ` and per-component `Σ_i` through the squared operator.
    General,
    /// Per-block-row `Θ_r` and per-column-block `Σ_c` from the block variances.
    Simplified,
    /// Residual bookkeeping with the Onsager factor `<f'>/α`; homogeneous operators only.
    Residual,
}

/// AMP iterates.
///
/// `theta` has one entry per row for the general variant and one per block row
/// otherwise; `sigma2` has one entry per component, per column block, or a single one.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub r_field: Vec<f64>,
    pub t: usize,
    pub delta: f64,
}

/// Stepwise AMP decoder.
pub struct AmpDecoder<'a> {
    op: &'a Operator,
    y: &'a [f64],
    noise: f64,
    allocation: &'a PowerAllocation,
    b: usize,
    variant: DecoderVariant,
    state: DecoderState,
    tau: Vec<f64>,
    deriv_mean: f64,
    fa: Vec<f64>,
    g: Vec<f64>,
    back: Vec<f64>,
    a_next: Vec<f64>,
}

impl<'a> AmpDecoder<'a> {
    pub fn new(
        received: &'a [f64],
        op: &'a Operator,
        params: &CodeParams,
        allocation: &'a PowerAllocation,
        variant: DecoderVariant,
    ) -> Result<Self> {
        op.check_params(params)?;
        check_len("received", params.m, received.len())?;
        check_len("allocation", params.l, allocation.len())?;
        if variant == DecoderVariant::Residual && !op.is_homogeneous() {
            return Err(Error::Unsupported(
                "the residual form needs a homogeneous operator".into(),
            ));
        }
        let (m, n, b) = (params.m, params.n, params.b);
        let g = op.geometry();
        let prior = (b - 1) as f64 / (b * b) as f64;
        let v: Vec<f64> = allocation
            .amplitudes()
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c * c * prior, b))
            .collect();
        let theta = match variant {
            DecoderVariant::General => op.apply_sq_forward(&v)?,
            _ => block_theta(op, &v),
        };
        let sigma2 = match variant {
            DecoderVariant::General => vec![f64::INFINITY; n],
            DecoderVariant::Simplified => vec![f64::INFINITY; g.col_blocks()],
            DecoderVariant::Residual => vec![f64::INFINITY],
        };
        Ok(Self {
            op,
            y: received,
            noise: params.noise_variance(),
            allocation,
            b,
            variant,
            state: DecoderState {
                a: vec![0.0; n],
                v,
                w: received.to_vec(),
                theta,
                sigma2,
                r_field: vec![0.0; n],
                t: 0,
                delta: f64::INFINITY,
            },
            tau: vec![0.0; m],
            deriv_mean: 0.0,
            fa: vec![0.0; m],
            g: vec![0.0; m],
            back: vec![0.0; n],
            a_next: vec![0.0; n],
        })
    }

    pub fn state(&self) -> &DecoderState {
        &self.state
    }

    pub fn variant(&self) -> DecoderVariant {
        self.variant
    }

    /// One full AMP iteration. Returns the mean-square change of `a`.
    pub fn step(&mut self) -> Result<f64> {
        match self.variant {
            DecoderVariant::General => self.step_general()?,
            DecoderVariant::Simplified => self.step_simplified()?,
            DecoderVariant::Residual => self.step_residual()?,
        }
        let n = self.state.a.len() as f64;
        let delta = self
            .a_next
            .iter()
            .zip(&self.state.a)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        std::mem::swap(&mut self.state.a, &mut self.a_next);
        self.state.t += 1;
        self.state.delta = delta;
        self.check_finite()?;
        Ok(delta)
    }

    fn step_general(&mut self) -> Result<()> {
        let op = self.op;
        let noise = self.noise;
        let s = &mut self.state;
        let theta = op.apply_sq_forward(&s.v)?;
        op.forward(&s.a, &mut self.fa)?;
        let mut inv = vec![0.0; theta.len()];
        for mu in 0..theta.len() {
            let w = self.fa[mu] - theta[mu] * (self.y[mu] - s.w[mu]) / (noise + s.theta[mu]);
            s.w[mu] = w;
            inv[mu] = 1.0 / (noise + theta[mu]);
            self.g[mu] = (self.y[mu] - w) * inv[mu];
        }
        s.theta = theta;
        op.sq_adjoint(&inv, &mut s.sigma2)?;
        for x in &mut s.sigma2 {
            *x = 1.0 / *x;
        }
        op.adjoint(&self.g, &mut self.back)?;
        for i in 0..s.a.len() {
            s.r_field[i] = s.a[i] + s.sigma2[i] * self.back[i];
        }
        let b = self.b;
        for (l, &c) in self.allocation.amplitudes().iter().enumerate() {
            let sec = l * b..(l + 1) * b;
            denoise_section(&s.sigma2[sec.clone()], &s.r_field[sec.clone()], c, &mut self.a_next[sec.clone()], &mut s.v[sec])?;
        }
        Ok(())
    }

    fn step_simplified(&mut self) -> Result<()> {
        let op = self.op;
        let geo = op.geometry();
        let noise = self.noise;
        let s = &mut self.state;
        let theta = block_theta(op, &s.v);
        op.forward(&s.a, &mut self.fa)?;
        for r in 0..geo.row_blocks() {
            let onsager = theta[r] / (noise + s.theta[r]);
            let inv = 1.0 / (noise + theta[r]);
            for mu in geo.row_range(r) {
                let w = self.fa[mu] - onsager * (self.y[mu] - s.w[mu]);
                s.w[mu] = w;
                self.g[mu] = (self.y[mu] - w) * inv;
            }
        }
        for c in 0..geo.col_blocks() {
            let precision: f64 = (0..geo.row_blocks())
                .map(|r| geo.variance(r, c) * geo.height(r) as f64 / (noise + theta[r]))
                .sum();
            s.sigma2[c] = 1.0 / precision;
        }
        s.theta = theta;
        op.adjoint(&self.g, &mut self.back)?;
        self.field_and_denoise_blocks();
        Ok(())
    }

    fn step_residual(&mut self) -> Result<()> {
        let op = self.op;
        let var = op.geometry().variance(0, 0);
        let (m, n) = (op.m() as f64, op.n() as f64);
        let s = &mut self.state;
        let (theta, onsager) = if s.t == 0 {
            (var * s.v.iter().sum::<f64>(), 0.0)
        } else {
            (var * n * s.sigma2[0] * self.deriv_mean, n / m * self.deriv_mean)
        };
        op.forward(&s.a, &mut self.fa)?;
        for mu in 0..self.tau.len() {
            self.tau[mu] = self.y[mu] - self.fa[mu] + onsager * self.tau[mu];
            s.w[mu] = self.y[mu] - self.tau[mu];
        }
        s.theta[0] = theta;
        s.sigma2[0] = (self.noise + theta) / (var * m);
        op.adjoint(&self.tau, &mut self.back)?;
        let gain = 1.0 / (var * m);
        let sigma2 = s.sigma2[0];
        let b = self.b;
        let mut deriv = 0.0;
        for (l, &c) in self.allocation.amplitudes().iter().enumerate() {
            let sec = l * b..(l + 1) * b;
            for i in sec.clone() {
                s.r_field[i] = s.a[i] + gain * self.back[i];
            }
            denoise_uniform(sigma2, &s.r_field[sec.clone()], c, &mut self.a_next[sec.clone()], &mut s.v[sec.clone()]);
            deriv += self.a_next[sec].iter().map(|&a| a * (c - a) / sigma2).sum::<f64>();
        }
        self.deriv_mean = deriv / n;
        Ok(())
    }

    /// `R = a + Σ_c² Fᵀg` and the denoiser, with one variance per column block.
    fn field_and_denoise_blocks(&mut self) {
        let geo = self.op.geometry();
        let b = self.b;
        let per = geo.width() / b;
        let s = &mut self.state;
        for (l, &c) in self.allocation.amplitudes().iter().enumerate() {
            let sigma2 = s.sigma2[l / per];
            let sec = l * b..(l + 1) * b;
            for i in sec.clone() {
                s.r_field[i] = s.a[i] + sigma2 * self.back[i];
            }
            denoise_uniform(sigma2, &s.r_field[sec.clone()], c, &mut self.a_next[sec.clone()], &mut s.v[sec]);
        }
    }

    fn check_finite(&self) -> Result<()> {
        let s = &self.state;
        let t = s.t;
        let fields: [(&'static str, &[f64]); 5] = [
            ("posterior mean", &s.a),
            ("posterior variance", &s.v),
            ("codeword estimate", &s.w),
            ("theta", &s.theta),
            ("field", &s.r_field),
        ];
        for (name, xs) in fields {
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    iteration: t,
                    quantity: name,
                });
            }
        }
        if s.sigma2.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::NonFinite {
                iteration: t,
                quantity: "field variance",
            });
        }
        Ok(())
    }

    pub fn hard_decision(&self) -> Result<SparseMessage> {
        hard_decision(&self.state.a, self.b, self.allocation)
    }

    /// Iterates until `delta <= eps` or `t_max` iterations.
    pub fn run(mut self, config: &DecoderConfig, truth: Option<&SparseMessage>) -> Result<DecodeReport> {
        if !(config.eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {}", config.eps)));
        }
        let l = self.allocation.len();
        let mut trace = Vec::with_capacity(config.t_max.min(4096));
        let mut converged = false;
        while self.state.t < config.t_max {
            let delta = self.step()?;
            trace.push(trace_row(self.state.t, &self.state.a, self.b, l, delta, truth));
            if delta <= config.eps {
                converged = true;
                break;
            }
        }
        Ok(DecodeReport {
            estimate: self.hard_decision()?,
            iterations: self.state.t,
            posterior: self.state.a,
            trace,
            converged,
        })
    }
}

/// `Θ_r = Σ_c s J_rc Σ_{i in c} v_i`.
fn block_theta(op: &Operator, v: &[f64]) -> Vec<f64> {
    let g = op.geometry();
    let sums: Vec<f64> = (0..g.col_blocks())
        .map(|c| v[g.col_range(c)].iter().sum())
        .collect();
    (0..g.row_blocks())
        .map(|r| sums.iter().enumerate().map(|(c, s)| g.variance(r, c) * s).sum())
        .collect()
}
