use rand::Rng;

use crate::signal_io::EcgRecord;
use crate::{seeding, Error, Result};

/// An electrode-motion noise recording in mV.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSource {
    pub noise: Vec<f64>,
    pub fs: f64,
}

impl NoiseSource {
    pub fn new(noise: Vec<f64>, fs: f64) -> Result<Self> {
        if noise.is_empty() {
            return Err(Error::ZeroPower("noise"));
        }
        if noise.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord("non-finite noise sample".into()));
        }
        Ok(Self { noise, fs })
    }

    /// First channel of a noise record.
    pub fn from_record(record: &EcgRecord) -> Result<Self> {
        if record.channels.is_empty() {
            return Err(Error::ZeroChannels);
        }
        Self::new(record.channel_mv(0), record.fs())
    }
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Scale applied to the noise so that `signal_power / (alpha^2 noise_power)`
/// equals the requested SNR.
pub fn noise_scale(signal_power: f64, noise_power: f64, snr_db: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(Error::ZeroPower("signal"));
    }
    if !(noise_power > 0.0) {
        return Err(Error::ZeroPower("noise"));
    }
    Ok((signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `len` samples of `noise` starting at `offset`, wrapping around.
pub fn tile_noise(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    noise
        .iter()
        .cycle()
        .skip(offset % noise.len())
        .take(len)
        .copied()
        .collect()
}

/// Seeded circular start offset into a noise record of `noise_len` samples.
pub fn noise_offset(noise_len: usize, seed: u64, tag: &str) -> usize {
    if noise_len == 0 {
        return 0;
    }
    seeding::rng(seed, tag).random_range(0..noise_len)
}

/// `signal + alpha * noise[offset..]`, with alpha chosen so the mix has the
/// requested SNR over the tiled segment.
pub fn mix_noise(
    signal: &[f64],
    noise: &NoiseSource,
    snr_db: f64,
    offset: usize,
) -> Result<Vec<f64>> {
    let segment = tile_noise(&noise.noise, signal.len(), offset);
    let alpha = noise_scale(mean_power(signal), mean_power(&segment), snr_db)?;
    Ok(signal
        .iter()
        .zip(&segment)
        .map(|(s, n)| s + alpha * n)
        .collect())
}

/// SNR in dB of `signal` against the additive component `noisy - signal`.
pub fn achieved_snr_db(signal: &[f64], noisy: &[f64]) -> f64 {
    let residual: Vec<f64> = noisy.iter().zip(signal).map(|(y, s)| y - s).collect();
    10.0 * (mean_power(signal) / mean_power(&residual)).log10()
}
