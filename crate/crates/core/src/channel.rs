use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Noise and received vector of one use of the AWGN channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub noise: Vec<f64>,
    pub received: Vec<f64>,
}

/// Adds i.i.d. `N(0, 1/snr)` noise. An infinite snr is noiseless.
pub fn transmit(codeword: &[f64], snr: f64, rng: &mut Rng) -> Result<ChannelRealization> {
    if !(snr > 0.0) {
        return Err(invalid(format!("snr must be positive, got {snr}")));
    }
    let sd = (1.0 / snr).sqrt();
    let noise: Vec<f64> = codeword
        .iter()
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect();
    let received = codeword.iter().zip(&noise).map(|(x, n)| x + n).collect();
    Ok(ChannelRealization { noise, received })
}
