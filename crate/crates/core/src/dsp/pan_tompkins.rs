use super::filter::{butterworth_highpass, butterworth_lowpass, filtfilt};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PanTompkinsConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub integration_ms: f64,
    pub refractory_ms: f64,
    /// Detections closer than this to the previous QRS get the T-wave slope test.
    pub t_wave_ms: f64,
    pub search_back_factor: f64,
    pub refine_ms: f64,
    pub learning_s: f64,
}

impl Default for PanTompkinsConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_ms: 150.0,
            refractory_ms: 200.0,
            t_wave_ms: 360.0,
            search_back_factor: 1.66,
            refine_ms: 50.0,
            learning_s: 2.0,
        }
    }
}

/// Signal/noise level pair with the derived adaptive thresholds.
#[derive(Debug, Clone, Copy)]
struct Levels {
    signal: f64,
    noise: f64,
    thr1: f64,
    thr2: f64,
}

impl Levels {
    fn learn(x: &[f64]) -> Self {
        let max = x.iter().copied().fold(0.0, f64::max);
        let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
        let (signal, noise) = (max / 3.0, mean / 2.0);
        let mut l = Levels {
            signal,
            noise,
            thr1: 0.0,
            thr2: 0.0,
        };
        l.update_thresholds();
        l
    }

    fn update_thresholds(&mut self) {
        self.thr1 = self.noise + 0.25 * (self.signal - self.noise).abs();
        self.thr2 = 0.5 * self.thr1;
    }

    fn signal_peak(&mut self, v: f64) {
        self.signal = 0.125 * v + 0.875 * self.signal;
    }

    fn search_back_peak(&mut self, v: f64) {
        self.signal = 0.25 * v + 0.75 * self.signal;
    }

    fn noise_peak(&mut self, v: f64) {
        self.noise = 0.125 * v + 0.875 * self.noise;
    }
}

fn ms(fs: f64, v: f64) -> usize {
    (fs * v / 1000.0).round() as usize
}

/// Indices of local maxima at least `distance` apart; when two collide the
/// taller one wins.
fn peaks_with_distance(x: &[f64], distance: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect();
    let mut by_height = cand.clone();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut keep = vec![false; x.len()];
    let mut taken: Vec<usize> = Vec::new();
    for i in by_height {
        let pos = taken.partition_point(|&t| t < i);
        let near_left = pos > 0 && i - taken[pos - 1] < distance;
        let near_right = pos < taken.len() && taken[pos] - i < distance;
        if !near_left && !near_right {
            taken.insert(pos, i);
            keep[i] = true;
        }
    }
    cand.retain(|&i| keep[i]);
    cand
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

/// Offline Pan-Tompkins QRS detector. Returns sample indices of R peaks in
/// increasing order.
pub fn pan_tompkins(signal: &[f64], fs: f64) -> Result<Vec<usize>> {
    pan_tompkins_with(signal, fs, &PanTompkinsConfig::default())
}

impl PanTompkinsConfig {
    pub fn detect(&self, signal: &[f64], fs: f64) -> Result<Vec<usize>> {
        pan_tompkins_with(signal, fs, self)
    }
}

fn pan_tompkins_with(signal: &[f64], fs: f64, cfg: &PanTompkinsConfig) -> Result<Vec<usize>> {
    let min = (cfg.learning_s * fs).ceil() as usize;
    if signal.len() < min.max(1) {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            min,
        });
    }
    let n = signal.len();

    let hp = butterworth_highpass(cfg.band_low_hz, fs, 1)?;
    let lp = butterworth_lowpass(cfg.band_high_hz, fs, 1)?;
    let bp = filtfilt(&lp, &filtfilt(&hp, signal));

    let at = |i: isize| bp[i.clamp(0, n as isize - 1) as usize];
    let deriv: Vec<f64> = (0..n as isize)
        .map(|i| (2.0 * (at(i + 1) - at(i - 1)) + at(i + 2) - at(i - 2)) * fs / 8.0)
        .collect();
    let sq: Vec<f64> = deriv.iter().map(|d| d * d).collect();

    let win = ms(fs, cfg.integration_ms).max(1);
    let half = win / 2;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + sq[i];
    }
    let mwi: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + win - half).min(n);
            (prefix[hi] - prefix[lo]) / win as f64
        })
        .collect();

    if mwi.iter().all(|&v| v <= 0.0) {
        return Ok(Vec::new());
    }

    let refractory = ms(fs, cfg.refractory_ms).max(1);
    let t_wave = ms(fs, cfg.t_wave_ms);
    let slope_win = ms(fs, 75.0).max(1);
    let bp_win = half.max(1);
    let learn = min.min(n);

    let mut int_lv = Levels::learn(&mwi[..learn]);
    let bp_abs: Vec<f64> = bp.iter().map(|v| v.abs()).collect();
    let mut bp_lv = Levels::learn(&bp_abs[..learn]);

    let max_slope = |i: usize| -> f64 {
        let lo = i.saturating_sub(slope_win).max(1);
        (lo..=i)
            .map(|j| mwi[j] - mwi[j - 1])
            .fold(f64::MIN, f64::max)
    };
    let bp_peak = |i: usize| -> f64 {
        let lo = i.saturating_sub(bp_win);
        let hi = (i + bp_win + 1).min(n);
        bp_abs[argmax(&bp_abs, lo, hi)]
    };

    let mut qrs: Vec<usize> = Vec::new();
    for loc in peaks_with_distance(&mwi, refractory) {
        let pk = mwi[loc];
        let y = bp_peak(loc);

        if qrs.len() >= 9 {
            let recent = &qrs[qrs.len() - 9..];
            let mean_rr = (recent[8] - recent[0]) as f64 / 8.0;
            let last = *qrs.last().unwrap();
            let rr = (loc - last) as f64;
            if rr <= 0.92 * mean_rr || rr >= 1.16 * mean_rr {
                int_lv.thr1 *= 0.5;
                bp_lv.thr1 *= 0.5;
            }
            if rr >= cfg.search_back_factor * mean_rr {
                let lo = last + refractory;
                let hi = loc.saturating_sub(refractory);
                if hi > lo {
                    let j = argmax(&mwi, lo, hi);
                    if mwi[j] > int_lv.thr2 {
                        let yb = bp_peak(j);
                        if yb > bp_lv.thr2 {
                            qrs.push(j);
                            int_lv.search_back_peak(mwi[j]);
                            bp_lv.search_back_peak(yb);
                        }
                    }
                }
            }
        }

        if pk >= int_lv.thr1 {
            let last = qrs.last().copied();
            let is_t_wave = match last {
                Some(l) if qrs.len() >= 3 && loc - l <= t_wave => {
                    max_slope(loc) <= 0.5 * max_slope(l)
                }
                _ => false,
            };
            if is_t_wave {
                int_lv.noise_peak(pk);
                bp_lv.noise_peak(y);
            } else {
                if y >= bp_lv.thr1 {
                    qrs.push(loc);
                    bp_lv.signal_peak(y);
                }
                int_lv.signal_peak(pk);
            }
        } else {
            int_lv.noise_peak(pk);
            bp_lv.noise_peak(y);
        }
        int_lv.update_thresholds();
        bp_lv.update_thresholds();
    }

    // Move each detection to the band-passed crest and enforce the refractory spacing.
    let refine = ms(fs, cfg.refine_ms);
    let mut refined: Vec<usize> = qrs
        .iter()
        .map(|&i| argmax(&bp, i.saturating_sub(refine), (i + refine + 1).min(n)))
        .collect();
    refined.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(refined.len());
    for i in refined {
        match out.last().copied() {
            Some(prev) if i - prev < refractory => {
                if bp[i] > bp[prev] {
                    *out.last_mut().unwrap() = i;
                }
            }
            _ => out.push(i),
        }
    }
    // Replacing a kept index can shrink the gap to its predecessor.
    out.dedup_by(|b, a| *b - *a < refractory);
    Ok(out)
}
