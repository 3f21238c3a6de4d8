use crate::error::{check_len, invalid, Result};
use crate::message::SparseMessage;

/// Fraction of sections whose symbol differs. Sections are not weighted by power.
pub fn section_error_rate(x: &SparseMessage, x_hat: &SparseMessage) -> Result<f64> {
    check_len("section error rate", x.sections(), x_hat.sections())?;
    if x.section_size() != x_hat.section_size() {
        return Err(invalid("messages have different section sizes"));
    }
    Ok(symbol_error_rate(x.symbols(), x_hat.symbols()))
}

pub(crate) fn symbol_error_rate(x: &[usize], y: &[usize]) -> f64 {
    let wrong = x.iter().zip(y).filter(|(a, b)| a != b).count();
    wrong as f64 / x.len() as f64
}

/// `(1/L) Σ_i (x_i - a_i)^2`.
pub fn mse_per_section(x: &[f64], a: &[f64], l: usize) -> Result<f64> {
    check_len("mse", x.len(), a.len())?;
    if l == 0 || x.len() % l != 0 {
        return Err(invalid(format!("{} components do not split into {l} sections", x.len())));
    }
    Ok(x.iter().zip(a).map(|(x, a)| (x - a) * (x - a)).sum::<f64>() / l as f64)
}
