use crate::error::{invalid, Result};

/// In-place unnormalized Walsh–Hadamard transform (natural ordering).
///
/// Applying it twice multiplies by the length.
pub fn fht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(invalid(format!("Hadamard transform needs a power-of-two length, got {n}")));
    }
    butterflies(v);
    Ok(())
}

pub fn fht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fht_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn butterflies(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Entry `(k, i)` of the natural-order Hadamard matrix.
pub fn hadamard_entry(k: usize, i: usize) -> f64 {
    if (k & i).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn small_examples() {
        assert_eq!(fht(&[1., 0., 0., 0.]).unwrap(), vec![1., 1., 1., 1.]);
        assert_eq!(fht(&[1., 1., 1., 1.]).unwrap(), vec![4., 0., 0., 0.]);
        assert!(fht(&[1., 2., 3.]).is_err());
        assert_eq!(fht(&[2.5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn matches_explicit_matrix() {
        let mut rng = from_seed(4);
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fht(&v).unwrap();
        for (k, f) in fast.iter().enumerate() {
            let slow: f64 = (0..8).map(|i| hadamard_entry(k, i) * v[i]).sum();
            assert!((f - slow).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn involution(k in 0u32..12, seed in any::<u64>()) {
            let n = 1usize << k;
            let mut rng = from_seed(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let twice = fht(&fht(&v).unwrap()).unwrap();
            let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max) * n as f64;
            for (a, b) in twice.iter().zip(&v) {
                prop_assert!((a - n as f64 * b).abs() <= 1e-10 * scale.max(1.0));
            }
        }
    }
}
