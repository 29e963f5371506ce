//! Beat segmentation, RR features, noise augmentation, splits and the
//! on-disk beat container.

mod container;
mod noise;
mod pipeline;
mod program;
mod split;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use container::{read_beats, write_beats};
pub use noise::{
    achieved_snr_db, mean_power, mix_noise, noise_offset, noise_scale, tile_noise, NoiseSource,
};
pub use pipeline::{
    build_dataset, is_excluded, match_peaks, prepare_record, ConditionTable, PeakMatch, PeakSource,
    PrepConfig,
};
pub use program::{build_noise_program, materialize, NoiseMode};
pub use split::{make_folds, make_split, Split, SplitSpec};

use crate::signal_io::BeatClass;
use crate::{Error, Result};

pub const WINDOW_LEN: usize = 198;
/// Samples kept before the R peak; the peak itself and `POST_R` samples follow.
pub const PRE_R: usize = 99;
pub const POST_R: usize = 98;

pub const RR_MIN_S: f64 = 0.2;
pub const RR_MAX_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCondition {
    Noiseless,
    Snr24,
    Snr10,
    Snr3,
}

impl NoiseCondition {
    pub const ALL: [NoiseCondition; 4] = [
        NoiseCondition::Noiseless,
        NoiseCondition::Snr24,
        NoiseCondition::Snr10,
        NoiseCondition::Snr3,
    ];

    pub fn snr_db(self) -> Option<f64> {
        match self {
            NoiseCondition::Noiseless => None,
            NoiseCondition::Snr24 => Some(24.0),
            NoiseCondition::Snr10 => Some(10.0),
            NoiseCondition::Snr3 => Some(3.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseCondition::Noiseless => "noiseless",
            NoiseCondition::Snr24 => "snr24",
            NoiseCondition::Snr10 => "snr10",
            NoiseCondition::Snr3 => "snr3",
        }
    }
}

impl fmt::Display for NoiseCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noiseless" | "none" | "clean" => Ok(NoiseCondition::Noiseless),
            "snr24" | "24" => Ok(NoiseCondition::Snr24),
            "snr10" | "10" => Ok(NoiseCondition::Snr10),
            "snr3" | "3" => Ok(NoiseCondition::Snr3),
            _ => Err(Error::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeatSource {
    pub record: String,
    pub sample_index: usize,
}

/// One classifier input: a window around an R peak (mV), the normalized
/// pre/post RR pair and the AAMI label.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatSample {
    pub window: Vec<f32>,
    pub rr_norm: [f32; 2],
    pub label: BeatClass,
    pub source: BeatSource,
    pub condition: NoiseCondition,
}

impl BeatSample {
    pub fn new(
        window: Vec<f32>,
        rr_norm: [f32; 2],
        label: BeatClass,
        source: BeatSource,
        condition: NoiseCondition,
    ) -> Result<Self> {
        if window.len() != WINDOW_LEN {
            return Err(Error::Shape(format!("window of {} samples", window.len())));
        }
        if rr_norm.iter().any(|v| !(-2.0..=2.0).contains(v)) {
            return Err(Error::Shape(format!("rr_norm {rr_norm:?} outside [-2, 2]")));
        }
        Ok(Self {
            window,
            rr_norm,
            label,
            source,
            condition,
        })
    }
}

/// Maps one RR interval (seconds) onto [-2, 2]: clamp to [0.2, 2.0] s, then
/// 0.2 s goes to -2 and 2.0 s to +2.
pub fn normalize_rr_one(rr_s: f64) -> Result<f64> {
    if !(rr_s > 0.0) || !rr_s.is_finite() {
        return Err(Error::NonPositiveRr(rr_s));
    }
    let rr = rr_s.clamp(RR_MIN_S, RR_MAX_S);
    Ok(4.0 * (rr - RR_MIN_S) / (RR_MAX_S - RR_MIN_S) - 2.0)
}

pub fn normalize_rr(pre_rr_s: f64, post_rr_s: f64) -> Result<[f64; 2]> {
    Ok([normalize_rr_one(pre_rr_s)?, normalize_rr_one(post_rr_s)?])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub kept: usize,
    /// Beats whose window would leave the record.
    pub dropped_bounds: usize,
    /// First and last beats, which lack an RR neighbor.
    pub dropped_edges: usize,
    /// Beats sharing a sample index with a neighbor (zero RR).
    pub dropped_zero_rr: usize,
}

impl SegmentStats {
    pub fn dropped(&self) -> usize {
        self.dropped_bounds + self.dropped_edges + self.dropped_zero_rr
    }

    pub fn merge(&mut self, other: &SegmentStats) {
        self.kept += other.kept;
        self.dropped_bounds += other.dropped_bounds;
        self.dropped_edges += other.dropped_edges;
        self.dropped_zero_rr += other.dropped_zero_rr;
    }
}

/// Cuts one window per labeled peak out of a denoised single-channel
/// signal. `beats` holds `(r_peak_index, label)` sorted by index.
pub fn segment_beats(
    signal: &[f64],
    fs: f64,
    beats: &[(usize, BeatClass)],
    record: &str,
    condition: NoiseCondition,
) -> Result<(Vec<BeatSample>, SegmentStats)> {
    if beats.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::InvalidRecord("peaks are not sorted".into()));
    }
    let mut stats = SegmentStats::default();
    let mut out = Vec::with_capacity(beats.len());
    for (i, &(r, label)) in beats.iter().enumerate() {
        if i == 0 || i + 1 == beats.len() {
            stats.dropped_edges += 1;
            continue;
        }
        if r < PRE_R || r + POST_R >= signal.len() {
            stats.dropped_bounds += 1;
            continue;
        }
        let (prev, next) = (beats[i - 1].0, beats[i + 1].0);
        if prev == r || next == r {
            stats.dropped_zero_rr += 1;
            continue;
        }
        let rr = normalize_rr((r - prev) as f64 / fs, (next - r) as f64 / fs)?;
        let window = signal[r - PRE_R..=r + POST_R]
            .iter()
            .map(|&v| v as f32)
            .collect();
        out.push(BeatSample {
            window,
            rr_norm: [rr[0] as f32, rr[1] as f32],
            label,
            source: BeatSource {
                record: record.to_string(),
                sample_index: r,
            },
            condition,
        });
        stats.kept += 1;
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_anchors() {
        assert_eq!(normalize_rr_one(0.2).unwrap(), -2.0);
        assert!(normalize_rr_one(1.1).unwrap().abs() < 1e-12);
        assert_eq!(normalize_rr_one(3.0).unwrap(), 2.0);
        assert_eq!(normalize_rr_one(0.05).unwrap(), -2.0);
        assert!(matches!(
            normalize_rr_one(0.0),
            Err(Error::NonPositiveRr(_))
        ));
        assert!(normalize_rr_one(-1.0).is_err());
        assert!(normalize_rr_one(f64::NAN).is_err());
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn window_at_lower_bound() {
        let x = ramp(300);
        let beats = [(10, BeatClass::N), (99, BeatClass::V), (250, BeatClass::N)];
        let (b, s) = segment_beats(&x, 360.0, &beats, "r", NoiseCondition::Noiseless).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].window.first(), Some(&0.0));
        assert_eq!(b[0].window.last(), Some(&197.0));
        assert_eq!(b[0].window[PRE_R], 99.0);
        assert_eq!(b[0].label, BeatClass::V);
        assert_eq!(
            s,
            SegmentStats {
                kept: 1,
                dropped_edges: 2,
                ..Default::default()
            }
        );
    }

    #[test]
    fn underflow_and_overflow_dropped() {
        let x = ramp(400);
        let beats = [
            (10, BeatClass::N),
            (50, BeatClass::N),
            (200, BeatClass::S),
            (302, BeatClass::N),
            (390, BeatClass::N),
        ];
        let (b, s) = segment_beats(&x, 360.0, &beats, "r", NoiseCondition::Noiseless).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].source.sample_index, 200);
        assert_eq!(s.dropped_bounds, 2);
        assert_eq!(s.dropped_edges, 2);
        // 301 + 98 = 399 is the last valid index; 302 overflows by one.
        let beats = [(10, BeatClass::N), (301, BeatClass::N), (390, BeatClass::N)];
        let (b, _) = segment_beats(&x, 360.0, &beats, "r", NoiseCondition::Noiseless).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn rr_pair_from_neighbors() {
        let x = vec![0.0; 2000];
        let beats = [
            (200, BeatClass::N),
            (560, BeatClass::N),
            (632, BeatClass::N),
        ];
        let (b, _) = segment_beats(&x, 360.0, &beats, "r", NoiseCondition::Noiseless).unwrap();
        assert!((b[0].rr_norm[0] - (4.0 * 0.8 / 1.8 - 2.0) as f32).abs() < 1e-6);
        assert_eq!(b[0].rr_norm[1], -2.0);
    }

    #[test]
    fn condition_parsing() {
        assert_eq!(
            "24".parse::<NoiseCondition>().unwrap(),
            NoiseCondition::Snr24
        );
        assert_eq!(
            "none".parse::<NoiseCondition>().unwrap(),
            NoiseCondition::Noiseless
        );
        assert!("7".parse::<NoiseCondition>().is_err());
    }
}
