use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::replica::capacity;

/// Per-section amplitudes `c_l > 0` with unit mean square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    c: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl PowerAllocation {
    pub fn constant(l: usize) -> Self {
        Self { c: vec![1.0; l] }
    }

    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(invalid("power allocation needs at least one section"));
        }
        if let Some(bad) = c.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(invalid(format!("amplitudes must be positive, found {bad}")));
        }
        let ms = mean_square(&c);
        if (ms - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("mean square amplitude is {ms}, not 1")));
        }
        Ok(Self { c })
    }

    /// Replicates `groups.len()` amplitudes over `l / G` contiguous sections each.
    pub fn from_groups(groups: &[f64], l: usize) -> Result<Self> {
        let g = groups.len();
        if g == 0 || l % g != 0 {
            return Err(invalid(format!("{g} groups do not divide {l} sections")));
        }
        let per = l / g;
        Self::new(
            groups
                .iter()
                .flat_map(|&c| std::iter::repeat_n(c, per))
                .collect(),
        )
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.c.iter().all(|&x| x == self.c[0])
    }

    /// Mean of `c_l^2` over sections `range`.
    pub fn mean_square_over(&self, range: std::ops::Range<usize>) -> f64 {
        mean_square(&self.c[range])
    }
}

fn mean_square(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64
}

/// Group amplitudes `c_g ∝ 2^(-C g / G)`, g = 1..G, normalized to unit power.
///
/// With `q = 2^(-2C/G)` the squared amplitudes are `G (1-q) q^(g-1) / (1-q^G)`,
/// which is the closed-form normalization written without the intermediate Z.
pub fn exponential_groups(g: usize, snr: f64) -> Result<Vec<f64>> {
    if g == 0 {
        return Err(invalid("G must be at least 1"));
    }
    let c = capacity(snr)?;
    let log_q = -2.0 * c * LN_2 / g as f64;
    let one_minus_q = -log_q.exp_m1();
    let one_minus_qg = -(log_q * g as f64).exp_m1();
    let scale = g as f64 * one_minus_q / one_minus_qg;
    Ok((0..g)
        .map(|k| (scale * (log_q * k as f64).exp()).sqrt())
        .collect())
}

/// Exponential allocation over `l` sections in `g` contiguous groups.
pub fn exponential_power_allocation(g: usize, l: usize, snr: f64) -> Result<PowerAllocation> {
    if g == 0 || l % g != 0 {
        return Err(invalid(format!("G={g} must divide L={l}")));
    }
    PowerAllocation::from_groups(&exponential_groups(g, snr)?, l)
}

/// Energy left undecoded once groups `0..k` are known: `(1/G) Σ_{g>=k} c_g^2`.
pub fn residual_energy(groups: &[f64], k: usize) -> f64 {
    groups[k..].iter().map(|c| c * c).sum::<f64>() / groups.len() as f64
}

/// Whether group `g` sees an effective noise below 1/2 once all earlier groups are decoded.
pub fn decodability_condition(groups: &[f64], rate: f64, snr: f64) -> Result<Vec<bool>> {
    if groups.is_empty() {
        return Err(invalid("empty allocation"));
    }
    if !(snr > 0.0) || !(rate > 0.0) {
        return Err(invalid("rate and snr must be positive"));
    }
    Ok(decodability_ratios(groups, rate, snr)
        .into_iter()
        .map(|r| r < 0.5)
        .collect())
}

/// `R ln2 (1/snr + E_{g-1}) / c_g^2` for every group.
pub fn decodability_ratios(groups: &[f64], rate: f64, snr: f64) -> Vec<f64> {
    (0..groups.len())
        .map(|k| rate * LN_2 * (1.0 / snr + residual_energy(groups, k)) / (groups[k] * groups[k]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::{capacity, r_bp_infinity};
    use proptest::prelude::*;

    #[test]
    fn two_groups_at_unit_capacity() {
        let c = exponential_groups(2, 3.0).unwrap();
        assert!((c[0] * c[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((c[1] * c[1] - 2.0 / 3.0).abs() < 1e-12);
        // c_1 = 2^(-C/G) / Z with C = 1, G = 2
        let z2 = 0.5 / (c[0] * c[0]);
        assert!((z2 - 0.375).abs() < 1e-12);
    }

    #[test]
    fn single_group_is_unit() {
        for snr in [0.3, 1.0, 15.0, 1e4] {
            assert_eq!(exponential_groups(1, snr).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn replication_is_contiguous() {
        let a = exponential_power_allocation(4, 12, 7.0).unwrap();
        let c = a.amplitudes();
        for g in 0..4 {
            assert!(c[3 * g..3 * g + 3].iter().all(|&x| x == c[3 * g]));
        }
        assert!(c[0] > c[3]);
        assert!(exponential_power_allocation(5, 12, 7.0).is_err());
    }

    #[test]
    fn condition_examples() {
        let snr = 15.0;
        let cap = capacity(snr).unwrap();
        let groups = exponential_groups(200, snr).unwrap();
        assert!(decodability_condition(&groups, 0.9 * cap, snr).unwrap().iter().all(|&b| b));
        assert!(decodability_condition(&groups, 1.1 * cap, snr).unwrap().iter().any(|&b| !b));

        let rbp = r_bp_infinity(snr).unwrap();
        assert_eq!(decodability_condition(&[1.0], 0.99 * rbp, snr).unwrap(), vec![true]);
        assert_eq!(decodability_condition(&[1.0], 1.01 * rbp, snr).unwrap(), vec![false]);
        assert!(decodability_condition(&[], 1.0, snr).is_err());
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(PowerAllocation::new(vec![1.0, 2.0]).is_err());
        assert!(PowerAllocation::new(vec![0.0, 2f64.sqrt()]).is_err());
        assert!(PowerAllocation::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn unit_power_and_partial_sums(g in 1usize..=64, snr in 0.05f64..500.0) {
            let cap = capacity(snr).unwrap();
            let c = exponential_groups(g, snr).unwrap();
            let ms = c.iter().map(|x| x * x).sum::<f64>() / g as f64;
            prop_assert!((ms - 1.0).abs() < 1e-12);
            let mut partial = 0.0;
            for (k, ck) in c.iter().enumerate() {
                partial += ck * ck / g as f64;
                let gt = (k + 1) as f64;
                let closed = (1.0 - 2f64.powf(-2.0 * cap * gt / g as f64)) / (1.0 - 2f64.powf(-2.0 * cap));
                prop_assert!((partial - closed).abs() < 1e-12, "g~={} {} vs {}", k + 1, partial, closed);
            }
        }
    }
}
