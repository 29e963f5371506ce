use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    mix_noise, noise_offset, segment_beats, BeatSample, NoiseCondition, NoiseSource, SegmentStats,
};
use crate::dsp::{self, FilterSpec};
use crate::signal_io::{BeatClass, EcgRecord, PACED_RECORDS};
use crate::{Error, Result};

/// Where R-peak positions come from when cutting windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakSource {
    /// Reference annotations; used for training data.
    Annotations,
    /// The QRS detector, labels taken from the nearest annotation.
    PanTompkins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub filter: FilterSpec,
    pub use_denoising: bool,
    pub peaks: PeakSource,
    pub match_tolerance_ms: f64,
    /// Seeds the per-record noise offsets.
    pub seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            use_denoising: true,
            peaks: PeakSource::Annotations,
            match_tolerance_ms: 150.0,
            seed: 0,
        }
    }
}

pub fn is_excluded(record_name: &str) -> bool {
    PACED_RECORDS.contains(&record_name)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeakMatch {
    /// `(detected_idx, reference_idx)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detected: usize,
    pub unmatched_reference: usize,
}

impl PeakMatch {
    /// Fraction of reference peaks with a detection inside the tolerance.
    pub fn sensitivity(&self) -> f64 {
        let total = self.pairs.len() + self.unmatched_reference;
        if total == 0 {
            return 1.0;
        }
        self.pairs.len() as f64 / total as f64
    }
}

/// One-to-one matching of sorted detections against sorted reference peaks:
/// each reference takes the closest unused detection within `tol` samples.
pub fn match_peaks(detected: &[usize], reference: &[usize], tol: usize) -> PeakMatch {
    let mut used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    let mut start = 0;
    for (ri, &r) in reference.iter().enumerate() {
        while start < detected.len() && detected[start] + tol < r {
            start += 1;
        }
        let best = (start..detected.len())
            .take_while(|&d| detected[d] <= r + tol)
            .filter(|&d| !used[d])
            .min_by_key(|&d| detected[d].abs_diff(r));
        if let Some(d) = best {
            used[d] = true;
            pairs.push((d, ri));
        }
    }
    PeakMatch {
        unmatched_detected: detected.len() - pairs.len(),
        unmatched_reference: reference.len() - pairs.len(),
        pairs,
    }
}

/// Noise mixing (for noisy conditions), denoising and segmentation of the
/// MLII lead of one record.
pub fn prepare_record(
    record: &EcgRecord,
    condition: NoiseCondition,
    noise: Option<&NoiseSource>,
    cfg: &PrepConfig,
) -> Result<(Vec<BeatSample>, SegmentStats)> {
    let fs = record.fs();
    let mut signal = record.mlii_mv().ok_or_else(|| {
        Error::InvalidRecord(format!("record {} has no MLII lead", record.name()))
    })?;
    if let Some(snr) = condition.snr_db() {
        let noise =
            noise.ok_or_else(|| Error::Config(format!("{condition} needs a noise record")))?;
        if (noise.fs - fs).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "noise at {} Hz, record at {fs} Hz",
                noise.fs
            )));
        }
        let tag = format!("{}/{}", record.name(), condition);
        let offset = noise_offset(noise.noise.len(), cfg.seed, &tag);
        signal = mix_noise(&signal, noise, snr, offset)?;
    }
    if cfg.use_denoising {
        signal = dsp::denoise(&signal, fs, &cfg.filter)?;
    }
    let labeled = record.labeled_beats();
    let beats: Vec<(usize, BeatClass)> = match cfg.peaks {
        PeakSource::Annotations => labeled,
        PeakSource::PanTompkins => {
            let detected = dsp::pan_tompkins(&signal, fs)?;
            let reference: Vec<usize> = labeled.iter().map(|b| b.0).collect();
            let tol = (cfg.match_tolerance_ms * fs / 1000.0).round() as usize;
            let m = match_peaks(&detected, &reference, tol);
            let mut beats: Vec<(usize, BeatClass)> = m
                .pairs
                .iter()
                .map(|&(d, r)| (detected[d], labeled[r].1))
                .collect();
            beats.sort_by_key(|b| b.0);
            beats
        }
    };
    segment_beats(&signal, fs, &beats, record.name(), condition)
}

/// Beats of one dataset prepared under several noise conditions. Every
/// condition holds the same beats in the same order, so an index selects the
/// same heartbeat under any condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTable {
    entries: Vec<(NoiseCondition, Vec<BeatSample>)>,
}

impl ConditionTable {
    pub fn new(entries: Vec<(NoiseCondition, Vec<BeatSample>)>) -> Result<Self> {
        let Some((_, base)) = entries.first() else {
            return Err(Error::EmptyDataset);
        };
        for (c, beats) in &entries[1..] {
            if beats.len() != base.len()
                || beats
                    .iter()
                    .zip(base)
                    .any(|(a, b)| a.source != b.source || a.label != b.label)
            {
                return Err(Error::Shape(format!(
                    "{c} beats are not aligned with {}",
                    entries[0].0
                )));
            }
        }
        for (i, (c, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(d, _)| d == c) {
                return Err(Error::Shape(format!("{c} listed twice")));
            }
        }
        Ok(Self { entries })
    }

    /// Groups a flat beat list by condition, keeping order within each group.
    pub fn from_flat(beats: Vec<BeatSample>) -> Result<Self> {
        let mut entries: Vec<(NoiseCondition, Vec<BeatSample>)> = Vec::new();
        for c in NoiseCondition::ALL {
            let group: Vec<BeatSample> =
                beats.iter().filter(|b| b.condition == c).cloned().collect();
            if !group.is_empty() {
                entries.push((c, group));
            }
        }
        Self::new(entries)
    }

    pub fn into_flat(self) -> Vec<BeatSample> {
        self.entries.into_iter().flat_map(|(_, b)| b).collect()
    }

    pub fn conditions(&self) -> Vec<NoiseCondition> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn condition(&self, c: NoiseCondition) -> Option<&[BeatSample]> {
        self.entries
            .iter()
            .find(|e| e.0 == c)
            .map(|e| e.1.as_slice())
    }

    /// The first condition's beats (noiseless when present).
    pub fn base(&self) -> &[BeatSample] {
        &self.entries[0].1
    }

    pub fn len(&self) -> usize {
        self.entries[0].1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<BeatClass> {
        self.base().iter().map(|b| b.label).collect()
    }
}

/// Prepares every usable record under every requested condition. Paced
/// records and records without an MLII lead are skipped. Records are
/// processed in parallel; output order follows the input order.
pub fn build_dataset(
    records: &[EcgRecord],
    conditions: &[NoiseCondition],
    noise: Option<&NoiseSource>,
    cfg: &PrepConfig,
) -> Result<(ConditionTable, SegmentStats)> {
    let usable: Vec<&EcgRecord> = records
        .iter()
        .filter(|r| {
            let keep = !is_excluded(r.name()) && r.mlii_mv().is_some();
            if !keep {
                log::info!("skipping record {}", r.name());
            }
            keep
        })
        .collect();
    let mut entries = Vec::with_capacity(conditions.len());
    let mut stats = SegmentStats::default();
    for (ci, &c) in conditions.iter().enumerate() {
        let per_record: Vec<(Vec<BeatSample>, SegmentStats)> = usable
            .par_iter()
            .map(|r| prepare_record(r, c, noise, cfg))
            .collect::<Result<_>>()?;
        let mut beats = Vec::new();
        for (b, s) in per_record {
            beats.extend(b);
            if ci == 0 {
                stats.merge(&s);
            }
        }
        entries.push((c, beats));
    }
    Ok((ConditionTable::new(entries)?, stats))
}
