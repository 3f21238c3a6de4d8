use crate::error::{invalid, Result};

/// Posterior mean and variance of one section under the one-hot prior.
///
/// `a_i = c softmax_i(-c (c - 2 R_i) / (2 Σ_i²))`, `v_i = a_i (c - a_i)`.
/// An infinite `Σ²` carries no information and yields the prior.
pub fn denoise_section(sigma2: &[f64], r_field: &[f64], c: f64, a: &mut [f64], v: &mut [f64]) -> Result<()> {
    if let Some(bad) = sigma2.iter().find(|&&s| !(s > 0.0)) {
        return Err(invalid(format!("field variance must be positive, got {bad}")));
    }
    let n = r_field.len();
    if sigma2.len() != n || a.len() != n || v.len() != n {
        return Err(invalid("section buffers differ in length"));
    }
    for ((e, &r), &s) in a.iter_mut().zip(r_field).zip(sigma2) {
        *e = if s.is_infinite() { 0.0 } else { c * (2.0 * r - c) / (2.0 * s) };
    }
    normalize(a, v, c);
    Ok(())
}

/// Same as [`denoise_section`] with one variance shared by the whole section.
pub(crate) fn denoise_uniform(sigma2: f64, r_field: &[f64], c: f64, a: &mut [f64], v: &mut [f64]) {
    let k = c / sigma2;
    let half = 0.5 * c;
    if sigma2.is_infinite() {
        a.fill(0.0);
    } else {
        for (e, &r) in a.iter_mut().zip(r_field) {
            *e = k * (r - half);
        }
    }
    normalize(a, v, c);
}

/// Turns exponents stored in `a` into `c`-scaled softmax weights.
fn normalize(a: &mut [f64], v: &mut [f64], c: f64) {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for e in a.iter_mut() {
        *e = (*e - max).exp();
        z += *e;
    }
    let scale = c / z;
    for (e, var) in a.iter_mut().zip(v.iter_mut()) {
        *e *= scale;
        *var = *e * (c - *e);
    }
}

/// Diagonal of the denoiser Jacobian, `∂a_i/∂R_i = a_i (c - a_i) / Σ_i²`.
pub fn denoiser_derivative(a: &[f64], sigma2: &[f64], c: f64) -> Vec<f64> {
    a.iter().zip(sigma2).map(|(&a, &s)| a * (c - a) / s).collect()
}
