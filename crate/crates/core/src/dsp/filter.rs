use std::f64::consts::PI;

use super::FilterSpec;
use crate::{Error, Result};

/// One second-order section in transposed direct form II. First-order
/// sections are stored with `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Feedback coefficients `a1, a2`; `a0` is normalized to 1.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section's output settle immediately for a
    /// constant input `x`.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        let z2 = self.b[2] * x - self.a[1] * y;
        let z1 = self.b[1] * x - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b[0] * x + z[0];
            z[0] = self.b[1] * x - self.a[0] * y + z[1];
            z[1] = self.b[2] * x - self.a[1] * y;
            *v = y;
        }
    }

    /// Magnitude response at `f` Hz for sampling rate `fs`.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (
            1.0 + self.a[0] * c1 + self.a[1] * c2,
            self.a[0] * s1 + self.a[1] * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

fn check_cutoff(cutoff_hz: f64, fs: f64, order: usize) -> Result<f64> {
    if order == 0 || !(fs > 0.0) || !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(Error::InvalidCutoff { cutoff_hz, fs });
    }
    Ok((PI * cutoff_hz / fs).tan())
}

/// Section quality factors of an order-`order` Butterworth prototype, plus
/// whether a trailing first-order section is needed.
fn butterworth_qs(order: usize) -> (Vec<f64>, bool) {
    let qs = (1..=order / 2)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            -1.0 / (2.0 * theta.cos())
        })
        .collect();
    (qs, order % 2 == 1)
}

pub fn butterworth_lowpass(cutoff_hz: f64, fs: f64, order: usize) -> Result<Vec<Biquad>> {
    let k = check_cutoff(cutoff_hz, fs, order)?;
    let (qs, odd) = butterworth_qs(order);
    let mut sections: Vec<Biquad> = qs
        .into_iter()
        .map(|q| {
            let norm = 1.0 / (1.0 + k / q + k * k);
            let b0 = k * k * norm;
            Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            }
        })
        .collect();
    if odd {
        let b0 = k / (1.0 + k);
        sections.push(Biquad {
            b: [b0, b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
        });
    }
    Ok(sections)
}

pub fn butterworth_highpass(cutoff_hz: f64, fs: f64, order: usize) -> Result<Vec<Biquad>> {
    let k = check_cutoff(cutoff_hz, fs, order)?;
    let (qs, odd) = butterworth_qs(order);
    let mut sections: Vec<Biquad> = qs
        .into_iter()
        .map(|q| {
            let norm = 1.0 / (1.0 + k / q + k * k);
            Biquad {
                b: [norm, -2.0 * norm, norm],
                a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            }
        })
        .collect();
    if odd {
        let b0 = 1.0 / (1.0 + k);
        sections.push(Biquad {
            b: [b0, -b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
        });
    }
    Ok(sections)
}

fn run_cascade(sections: &[Biquad], data: &mut [f64]) {
    let mut level = data.first().copied().unwrap_or(0.0);
    for s in sections {
        s.run(data, s.steady_state(level));
        level *= s.dc_gain();
    }
}

/// Zero-phase filtering: forward pass, then a backward pass over the
/// reversed output. The signal is extended at both ends by odd reflection
/// and each pass starts from the steady state of its first sample, which
/// keeps edge transients small.
pub fn filtfilt(sections: &[Biquad], signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 || sections.is_empty() {
        return signal.to_vec();
    }
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let (first, last) = (signal[0], signal[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// The powerline low-pass: a Butterworth of `spec.lowpass_order` at
/// `spec.lowpass_cutoff_hz`, applied forward and backward.
pub fn lowpass(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let sections = butterworth_lowpass(spec.lowpass_cutoff_hz, fs, spec.lowpass_order)?;
    Ok(filtfilt(&sections, signal))
}
