//! Denoising (baseline-wander removal, low-pass) and QRS detection.

mod filter;
mod median;
mod pan_tompkins;

pub use filter::{butterworth_highpass, butterworth_lowpass, filtfilt, lowpass, Biquad};
pub use median::{median_filter, remove_baseline, window_samples};
pub use pan_tompkins::{pan_tompkins, PanTompkinsConfig};

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub median_window_1_ms: f64,
    pub median_window_2_ms: f64,
    pub lowpass_cutoff_hz: f64,
    /// Order of the Butterworth prototype; must be even.
    pub lowpass_order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            median_window_1_ms: 200.0,
            median_window_2_ms: 600.0,
            lowpass_cutoff_hz: 35.0,
            lowpass_order: 4,
        }
    }
}

/// Baseline removal followed by the zero-phase low-pass.
pub fn denoise(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let detrended = median::remove_baseline_with(signal, fs, spec)?;
    lowpass(&detrended, fs, spec)
}
