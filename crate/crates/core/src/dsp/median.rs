use super::FilterSpec;
use crate::{Error, Result};

/// Sliding median with an odd window centered on each sample. The signal is
/// extended at both ends by repeating its first and last values, so the
/// output has the input's length.
pub fn median_filter(signal: &[f64], window_len: usize) -> Result<Vec<f64>> {
    if window_len == 0 || window_len % 2 == 0 {
        return Err(Error::InvalidWindow(window_len));
    }
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let half = window_len / 2;
    let n = signal.len();
    let at = |i: isize| -> f64 { signal[i.clamp(0, n as isize - 1) as usize] };

    // Sorted copy of the current window; insertion and removal are O(window).
    let mut sorted: Vec<f64> = (-(half as isize)..=half as isize).map(at).collect();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    out.push(sorted[half]);
    for i in 1..n as isize {
        let leaving = at(i - 1 - half as isize);
        let entering = at(i + half as isize);
        let pos = sorted
            .binary_search_by(|v| v.total_cmp(&leaving))
            .expect("leaving sample is in the window");
        sorted.remove(pos);
        let pos = sorted
            .binary_search_by(|v| v.total_cmp(&entering))
            .unwrap_or_else(|p| p);
        sorted.insert(pos, entering);
        out.push(sorted[half]);
    }
    Ok(out)
}

/// Window length in samples for a duration: `round(fs * ms / 1000)`, bumped
/// to the next odd number. 200 ms and 600 ms at 360 Hz give 73 and 217.
pub fn window_samples(fs: f64, ms: f64) -> usize {
    let w = (fs * ms / 1000.0).round().max(1.0) as usize;
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Estimates baseline wander with two cascaded medians (200 ms, then
/// 600 ms) and subtracts it.
pub fn remove_baseline(signal: &[f64], fs: f64) -> Result<Vec<f64>> {
    remove_baseline_with(signal, fs, &FilterSpec::default())
}

pub(super) fn remove_baseline_with(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    if !(fs > 0.0) {
        return Err(Error::InvalidCutoff { cutoff_hz: 0.0, fs });
    }
    let first = median_filter(signal, window_samples(fs, spec.median_window_1_ms))?;
    let baseline = median_filter(&first, window_samples(fs, spec.median_window_2_ms))?;
    Ok(signal.iter().zip(&baseline).map(|(s, b)| s - b).collect())
}
