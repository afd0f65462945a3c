//! Channel impairment of values sent over an inter-satellite link.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::optical::LinkSample;

/// Wire width of one transmitted value.
pub const BITS_PER_VALUE: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Corruption {
    #[default]
    None,
    /// Additive Gaussian noise with standard deviation `kappa / sqrt(γ)`.
    Awgn { kappa: f64 },
    /// Packets of `bits` bits fail independently; failed packets leave the
    /// receiver's previous values in place.
    Packet { bits: u32 },
}

impl Corruption {
    pub fn validate(&self, section: &str) -> Result<()> {
        match *self {
            Corruption::None => Ok(()),
            Corruption::Awgn { kappa } if kappa.is_finite() && kappa >= 0.0 => Ok(()),
            Corruption::Awgn { .. } => Err(Error::config(
                format!("{section}.kappa"),
                "must be finite and non-negative",
            )),
            Corruption::Packet { bits } if bits >= 1 => Ok(()),
            Corruption::Packet { .. } => {
                Err(Error::config(format!("{section}.bits"), "must be at least 1"))
            }
        }
    }
}

/// Probability that a packet of `bits` bits contains at least one error.
pub fn packet_error_probability(ber: f64, bits: u32) -> f64 {
    let ber = ber.clamp(0.0, 1.0);
    if ber >= 1.0 {
        return 1.0;
    }
    -(f64::from(bits) * (-ber).ln_1p()).exp_m1()
}

/// Independent failure draw for each of the packets covering `n_values`
/// values.
pub fn packet_failures<R: Rng + ?Sized>(n_values: usize, bits: u32, ber: f64, rng: &mut R) -> Vec<bool> {
    let total_bits = n_values as u64 * BITS_PER_VALUE;
    let n_packets = total_bits.div_ceil(u64::from(bits.max(1)));
    let p = packet_error_probability(ber, bits);
    (0..n_packets).map(|_| rng.random::<f64>() < p).collect()
}

/// Impairs `values` as received over `link`. `fallback` holds the receiver's
/// previous values and must match `values` in length.
pub fn corrupt_values<R: Rng + ?Sized>(
    values: &[f64],
    fallback: &[f64],
    link: &LinkSample,
    mode: Corruption,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if values.len() != fallback.len() {
        return Err(Error::Shape(format!(
            "{} values with {} fallback values",
            values.len(),
            fallback.len()
        )));
    }
    match mode {
        Corruption::None => Ok(values.to_vec()),
        Corruption::Awgn { kappa } => {
            let sd = kappa / link.snr_linear.sqrt();
            if !sd.is_finite() {
                // No usable signal: nothing arrives.
                return Ok(fallback.to_vec());
            }
            Ok(values
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sd * z
                })
                .collect())
        }
        Corruption::Packet { bits } => {
            let failed = packet_failures(values.len(), bits, link.ber, rng);
            let bits = u64::from(bits);
            Ok(values
                .iter()
                .zip(fallback)
                .enumerate()
                .map(|(i, (&v, &old))| {
                    let first = i as u64 * BITS_PER_VALUE / bits;
                    let last = ((i as u64 + 1) * BITS_PER_VALUE - 1) / bits;
                    let lost = (first..=last).any(|p| failed[p as usize]);
                    if lost {
                        old
                    } else {
                        v
                    }
                })
                .collect())
        }
    }
}

/// Model parameters as received over `link`.
pub fn corrupt_model<R: Rng + ?Sized>(
    w: &ModelParams,
    fallback: &ModelParams,
    link: &LinkSample,
    mode: Corruption,
    rng: &mut R,
) -> Result<ModelParams> {
    if w.arch() != fallback.arch() {
        return Err(Error::Shape("fallback model has a different architecture".into()));
    }
    if mode == Corruption::None {
        return Ok(w.clone());
    }
    let values = corrupt_values(w.as_slice(), fallback.as_slice(), link, mode, rng)?;
    ModelParams::from_flat(w.arch(), values)
}
