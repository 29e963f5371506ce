//! Synthetic two-lead recordings with beat annotations, and synthetic
//! electrode-motion noise. Used for tests and for desk-scale experiments
//! when the MIT-BIH files are not at hand.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::NoiseSource;
use crate::signal_io::{
    mv_to_adc, Annotation, BeatClass, ChannelSpec, EcgRecord, RecordHeader, SignalFormat,
};
use crate::{seeding, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    /// Relative frequency of N, S, V, F, Q beats.
    pub class_weights: [f64; 5],
    pub heart_rate_bpm: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs: 360.0,
            duration_s: 60.0,
            class_weights: [0.70, 0.10, 0.12, 0.06, 0.02],
            heart_rate_bpm: (60.0, 90.0),
        }
    }
}

/// Gaussian bump: offset from R (s), amplitude (mV), width (s).
type Wave = (f64, f64, f64);

fn template(class: BeatClass) -> Vec<Wave> {
    match class {
        BeatClass::N => vec![
            (-0.20, 0.15, 0.025),
            (-0.03, -0.12, 0.009),
            (0.0, 1.10, 0.011),
            (0.03, -0.25, 0.010),
            (0.28, 0.30, 0.050),
        ],
        BeatClass::S => vec![
            (-0.14, -0.10, 0.022),
            (-0.03, -0.10, 0.009),
            (0.0, 1.00, 0.011),
            (0.03, -0.22, 0.010),
            (0.26, 0.28, 0.045),
        ],
        BeatClass::V => vec![
            (-0.04, -0.20, 0.020),
            (0.0, 1.30, 0.030),
            (0.07, -0.60, 0.035),
            (0.32, -0.45, 0.070),
        ],
        BeatClass::F => vec![
            (-0.20, 0.10, 0.025),
            (0.0, 1.25, 0.020),
            (0.05, -0.40, 0.022),
            (0.30, 0.05, 0.060),
        ],
        BeatClass::Q => vec![(0.0, 0.80, 0.018), (0.30, 0.15, 0.060)],
    }
}

fn symbol(class: BeatClass) -> char {
    match class {
        BeatClass::N => 'N',
        BeatClass::S => 'A',
        BeatClass::V => 'V',
        BeatClass::F => 'F',
        BeatClass::Q => 'Q',
    }
}

/// Interval preceding a beat of `class`, as a multiple of the base RR.
fn prematurity(class: BeatClass, rng: &mut ChaCha8Rng) -> f64 {
    match class {
        BeatClass::N => 1.0,
        BeatClass::S => rng.random_range(0.55..0.70),
        BeatClass::V => rng.random_range(0.60..0.75),
        BeatClass::F => rng.random_range(0.85..0.95),
        BeatClass::Q => rng.random_range(0.80..1.20),
    }
}

fn pick_class(weights: &[f64; 5], rng: &mut ChaCha8Rng) -> BeatClass {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return BeatClass::from_index(i).expect("five classes");
        }
        u -= w;
    }
    BeatClass::N
}

/// A synthetic record with MLII and V1 leads and one annotation per beat.
pub fn synth_record(name: &str, cfg: &SynthConfig, seed: u64) -> Result<EcgRecord> {
    let mut rng = seeding::rng(seed, &format!("synth/{name}"));
    let fs = cfg.fs;
    let n = (cfg.duration_s * fs).round() as usize;
    let base_rr = 60.0 / rng.random_range(cfg.heart_rate_bpm.0..=cfg.heart_rate_bpm.1);
    let amp = rng.random_range(0.7..1.3);
    let width = rng.random_range(0.85..1.15);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");

    let mut beats: Vec<(usize, BeatClass)> = Vec::new();
    let mut t = rng.random_range(0.3..0.6);
    let mut pause = 1.0;
    loop {
        let class = pick_class(&cfg.class_weights, &mut rng);
        if !beats.is_empty() {
            let resp = 1.0 + 0.03 * (2.0 * PI * t / 4.0).sin() + 0.02 * jitter.sample(&mut rng);
            t += base_rr * resp * prematurity(class, &mut rng) * pause;
        }
        if t > cfg.duration_s - 0.4 {
            break;
        }
        pause = if class == BeatClass::V {
            rng.random_range(1.25..1.40)
        } else {
            1.0
        };
        beats.push(((t * fs).round() as usize, class));
    }

    let mut mlii = vec![0.0; n];
    let mut v1 = vec![0.0; n];
    let reach = (0.6 * fs) as isize;
    for &(r, class) in &beats {
        let mut waves = template(class);
        if class == BeatClass::Q {
            waves.push((
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.5..0.5),
                0.03,
            ));
        }
        let beat_amp = amp * (1.0 + 0.05 * jitter.sample(&mut rng));
        let shift = 0.003 * jitter.sample(&mut rng);
        for i in (r as isize - reach).max(0)..(r as isize + reach).min(n as isize) {
            let dt = (i - r as isize) as f64 / fs;
            let v: f64 = waves
                .iter()
                .map(|&(mu, a, sigma)| {
                    let mu = if mu == 0.0 { 0.0 } else { mu * width + shift };
                    let z = (dt - mu) / (sigma * width);
                    a * (-0.5 * z * z).exp()
                })
                .sum();
            mlii[i as usize] += beat_amp * v;
            v1[i as usize] -= 0.4 * beat_amp * v;
        }
    }

    let phases: [f64; 3] = [
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    ];
    let white = Normal::new(0.0, 0.01).expect("valid sigma");
    for i in 0..n {
        let t = i as f64 / fs;
        let wander = 0.10 * (2.0 * PI * 0.3 * t + phases[0]).sin()
            + 0.08 * (2.0 * PI * 0.07 * t + phases[1]).sin();
        let mains = 0.02 * (2.0 * PI * 60.0 * t + phases[2]).sin();
        mlii[i] += wander + mains + white.sample(&mut rng) - 0.2;
        v1[i] += 0.5 * wander + mains + white.sample(&mut rng);
    }

    let spec = |lead: &str| ChannelSpec {
        file_name: format!("{name}.dat"),
        format: SignalFormat::Format212,
        gain: 200.0,
        adc_zero: 1024,
        lead_name: lead.to_string(),
    };
    let header = RecordHeader {
        record_name: name.to_string(),
        sampling_rate_hz: fs,
        n_samples: n,
        channels: vec![spec("MLII"), spec("V1")],
    };
    let to_adc = |x: &[f64], s: &ChannelSpec| -> Vec<i16> {
        x.iter()
            .map(|&v| mv_to_adc(v, s).clamp(-2048, 2047))
            .collect()
    };
    let channels = vec![
        to_adc(&mlii, &header.channels[0]),
        to_adc(&v1, &header.channels[1]),
    ];
    let annotations = beats
        .iter()
        .map(|&(r, c)| Annotation {
            sample_index: r,
            symbol: symbol(c),
        })
        .collect();
    EcgRecord::new(header, channels, annotations)
}

/// Records named `s000`, `s001`, ... from one corpus seed.
pub fn synth_corpus(n_records: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<EcgRecord>> {
    (0..n_records)
        .map(|i| synth_record(&format!("s{i:03}"), cfg, seed))
        .collect()
}

/// Electrode-motion-like noise: a smooth wandering baseline (doubly
/// integrated white noise, so little power reaches the QRS band), a small
/// broadband component, and sharp transients of QRS-like width at random
/// times.
pub fn synth_em_noise(n: usize, fs: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng(seed, "synth/em");
    let accel = Normal::new(0.0, 2.5e-4).expect("valid sigma");
    let fine = Normal::new(0.0, 0.0075).expect("valid sigma");
    let mut out = vec![0.0; n];
    let (mut walk, mut vel, mut ar) = (0.0, 0.0, 0.0);
    for v in out.iter_mut() {
        vel = 0.995 * vel + accel.sample(&mut rng);
        walk = 0.995 * walk + vel;
        ar = 0.9 * ar + fine.sample(&mut rng);
        *v = walk + ar;
    }
    let gap = Exp::new(0.7).expect("positive rate");
    let mut t = gap.sample(&mut rng);
    while ((t * fs) as usize) < n {
        let center = t * fs;
        let sigma = rng.random_range(0.01..0.04) * fs;
        let a = rng.random_range(0.075..0.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lo = (center - 4.0 * sigma).max(0.0) as usize;
        let hi = ((center + 4.0 * sigma) as usize).min(n);
        for (i, v) in out.iter_mut().enumerate().take(hi).skip(lo) {
            let z = (i as f64 - center) / sigma;
            *v += a * z * (0.5 - 0.5 * z * z).exp();
        }
        t += gap.sample(&mut rng);
    }
    out
}

/// Synthetic noise packaged as a two-channel record.
pub fn synth_noise_record(name: &str, n: usize, fs: f64, seed: u64) -> Result<EcgRecord> {
    let noise = synth_em_noise(n, fs, seed);
    let spec = |lead: &str| ChannelSpec {
        file_name: format!("{name}.dat"),
        format: SignalFormat::Format212,
        gain: 200.0,
        adc_zero: 0,
        lead_name: lead.to_string(),
    };
    let header = RecordHeader {
        record_name: name.to_string(),
        sampling_rate_hz: fs,
        n_samples: n,
        channels: vec![spec("noise1"), spec("noise2")],
    };
    let adc: Vec<i16> = noise
        .iter()
        .map(|&v| mv_to_adc(v, &header.channels[0]).clamp(-2048, 2047))
        .collect();
    EcgRecord::new(header, vec![adc.clone(), adc], Vec::new())
}

pub fn synth_noise_source(n: usize, fs: f64, seed: u64) -> Result<NoiseSource> {
    NoiseSource::new(synth_em_noise(n, fs, seed), fs)
}
