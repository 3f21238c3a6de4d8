use super::denoiser::denoise_section;
use super::{hard_decision, trace_row, DecodeReport, DecoderConfig};
use crate::allocation::PowerAllocation;
use crate::error::{check_len, invalid, Error, Result};
use crate::message::SparseMessage;
use crate::operators::Operator;
use crate::params::CodeParams;

/// Relaxed BP keeps `O(MN)` messages, so it is limited to small codes.
pub const RBP_MAX_COMPONENTS: usize = 4096;

/// Relaxed belief propagation on a dense operator.
///
/// Messages from section `l` to factor `μ` are computed with factor `μ`
/// removed; each factor in turn removes the whole section it sends to.
pub struct RelaxedBp<'a> {
    f: &'a [f64],
    y: &'a [f64],
    noise: f64,
    allocation: &'a PowerAllocation,
    m: usize,
    n: usize,
    b: usize,
    cav_a: Vec<f64>,
    cav_v: Vec<f64>,
    a: Vec<f64>,
    v: Vec<f64>,
    sigma2: Vec<f64>,
    r_field: Vec<f64>,
    t: usize,
}

impl<'a> RelaxedBp<'a> {
    pub fn new(
        received: &'a [f64],
        op: &'a Operator,
        params: &CodeParams,
        allocation: &'a PowerAllocation,
    ) -> Result<Self> {
        op.check_params(params)?;
        check_len("received", params.m, received.len())?;
        check_len("allocation", params.l, allocation.len())?;
        let f = op
            .dense_entries()
            .ok_or_else(|| Error::Unsupported("relaxed BP needs a dense operator".into()))?;
        if params.n > RBP_MAX_COMPONENTS {
            return Err(invalid(format!(
                "relaxed BP is limited to {RBP_MAX_COMPONENTS} components, got {}",
                params.n
            )));
        }
        let (m, n, b) = (params.m, params.n, params.b);
        let prior = (b - 1) as f64 / (b * b) as f64;
        let v0: Vec<f64> = allocation
            .amplitudes()
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c * c * prior, b))
            .collect();
        let mut cav_v = Vec::with_capacity(m * n);
        for _ in 0..m {
            cav_v.extend_from_slice(&v0);
        }
        Ok(Self {
            f,
            y: received,
            noise: params.noise_variance(),
            allocation,
            m,
            n,
            b,
            cav_a: vec![0.0; m * n],
            cav_v,
            a: vec![0.0; n],
            v: v0,
            sigma2: vec![f64::INFINITY; n],
            r_field: vec![0.0; n],
            t: 0,
        })
    }

    /// Cavity means `a_{i→μ}`, row-major by factor.
    pub fn cavity_means(&self) -> &[f64] {
        &self.cav_a
    }

    pub fn posterior_mean(&self) -> &[f64] {
        &self.a
    }

    pub fn posterior_variance(&self) -> &[f64] {
        &self.v
    }

    pub fn field_variance(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn field(&self) -> &[f64] {
        &self.r_field
    }

    pub fn step(&mut self) -> Result<f64> {
        let (m, n, b) = (self.m, self.n, self.b);
        let mut big_a = vec![0.0; m * n];
        let mut big_b = vec![0.0; m * n];
        for mu in 0..m {
            let row = mu * n..(mu + 1) * n;
            let f = &self.f[row.clone()];
            let ca = &self.cav_a[row.clone()];
            let cv = &self.cav_v[row.clone()];
            let w: f64 = f.iter().zip(ca).map(|(f, a)| f * a).sum();
            let theta: f64 = f.iter().zip(cv).map(|(f, v)| f * f * v).sum();
            for l in 0..n / b {
                let sec = l * b..(l + 1) * b;
                let own_v: f64 = sec.clone().map(|i| f[i] * f[i] * cv[i]).sum();
                let own_a: f64 = sec.clone().map(|i| f[i] * ca[i]).sum();
                let denom = self.noise + theta - own_v;
                let num = self.y[mu] - w + own_a;
                for i in sec {
                    big_a[mu * n + i] = f[i] * f[i] / denom;
                    big_b[mu * n + i] = f[i] * num / denom;
                }
            }
        }
        let mut sum_a = vec![0.0; n];
        let mut sum_b = vec![0.0; n];
        for mu in 0..m {
            for i in 0..n {
                sum_a[i] += big_a[mu * n + i];
                sum_b[i] += big_b[mu * n + i];
            }
        }

        let mut sig = vec![0.0; b];
        let mut field = vec![0.0; b];
        for mu in 0..m {
            for (l, &c) in self.allocation.amplitudes().iter().enumerate() {
                for k in 0..b {
                    let idx = mu * n + l * b + k;
                    let prec = sum_a[l * b + k] - big_a[idx];
                    if prec > 0.0 {
                        sig[k] = 1.0 / prec;
                        field[k] = (sum_b[l * b + k] - big_b[idx]) / prec;
                    } else {
                        sig[k] = f64::INFINITY;
                        field[k] = 0.0;
                    }
                }
                let sec = mu * n + l * b..mu * n + (l + 1) * b;
                denoise_section(&sig, &field, c, &mut self.cav_a[sec.clone()], &mut self.cav_v[sec])?;
            }
        }

        let mut a_next = vec![0.0; n];
        for i in 0..n {
            self.sigma2[i] = if sum_a[i] > 0.0 { 1.0 / sum_a[i] } else { f64::INFINITY };
            self.r_field[i] = if sum_a[i] > 0.0 { sum_b[i] / sum_a[i] } else { 0.0 };
        }
        for (l, &c) in self.allocation.amplitudes().iter().enumerate() {
            let sec = l * b..(l + 1) * b;
            denoise_section(&self.sigma2[sec.clone()], &self.r_field[sec.clone()], c, &mut a_next[sec.clone()], &mut self.v[sec])?;
        }
        let delta = a_next
            .iter()
            .zip(&self.a)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n as f64;
        self.a = a_next;
        self.t += 1;
        if self.a.iter().chain(&self.cav_a).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                iteration: self.t,
                quantity: "relaxed BP message",
            });
        }
        Ok(delta)
    }

    pub fn run(mut self, config: &DecoderConfig, truth: Option<&SparseMessage>) -> Result<DecodeReport> {
        if !(config.eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {}", config.eps)));
        }
        let l = self.allocation.len();
        let mut trace = Vec::new();
        let mut converged = false;
        while self.t < config.t_max {
            let delta = self.step()?;
            trace.push(trace_row(self.t, &self.a, self.b, l, delta, truth));
            if delta <= config.eps {
                converged = true;
                break;
            }
        }
        Ok(DecodeReport {
            estimate: hard_decision(&self.a, self.b, self.allocation)?,
            iterations: self.t,
            posterior: self.a,
            trace,
            converged,
        })
    }
}

pub fn relaxed_bp_decode(
    received: &[f64],
    op: &Operator,
    params: &CodeParams,
    allocation: &PowerAllocation,
    config: &DecoderConfig,
    truth: Option<&SparseMessage>,
) -> Result<DecodeReport> {
    RelaxedBp::new(received, op, params, allocation)?.run(config, truth)
}
