use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassReport, ConfusionMatrix};
use crate::dataset::{BeatSample, ConditionTable, NoiseCondition};
use crate::model::{forward, predict, ModelParams};
use crate::{Error, Result};

/// Anything that maps a beat to a class index.
pub trait Classifier: Sync {
    fn classify(&self, beat: &BeatSample) -> Result<usize>;
}

impl Classifier for ModelParams {
    fn classify(&self, beat: &BeatSample) -> Result<usize> {
        let window: Vec<f64> = beat.window.iter().map(|&v| f64::from(v)).collect();
        let rr: Vec<f64> = beat.rr_norm.iter().map(|&v| f64::from(v)).collect();
        Ok(predict(&forward(self, &window, &rr)?))
    }
}

/// Classifies every beat (in parallel, merged in input order) and reports.
pub fn evaluate<M: Classifier + ?Sized>(model: &M, beats: &[&BeatSample]) -> Result<ClassReport> {
    let preds: Vec<usize> = beats
        .par_iter()
        .map(|b| model.classify(b))
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::default();
    for (b, p) in beats.iter().zip(preds) {
        cm.add(b.label.index(), p);
    }
    Ok(ClassReport::from_confusion(cm))
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "train_condition",
    "noiseless",
    "snr24",
    "snr10",
    "snr3",
    "mix",
];

/// Test accuracy of one model under each noise condition and under the
/// balanced mix (every test beat once per condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub train_condition: String,
    pub noiseless: Option<f64>,
    pub snr24: Option<f64>,
    pub snr10: Option<f64>,
    pub snr3: Option<f64>,
    pub mix: Option<f64>,
}

impl SweepRow {
    pub fn get(&self, c: NoiseCondition) -> Option<f64> {
        match c {
            NoiseCondition::Noiseless => self.noiseless,
            NoiseCondition::Snr24 => self.snr24,
            NoiseCondition::Snr10 => self.snr10,
            NoiseCondition::Snr3 => self.snr3,
        }
    }
}

/// Evaluates `model` on the test indices of every condition in `table`.
/// Returns the row and the per-condition reports (followed by the mix).
pub fn noise_sweep<M: Classifier + ?Sized>(
    model: &M,
    table: &ConditionTable,
    test: &[usize],
    train_condition: &str,
) -> Result<(SweepRow, Vec<(String, ClassReport)>)> {
    let mut reports = Vec::new();
    let mut mix = ConfusionMatrix::default();
    let mut acc = [None; 4];
    for (slot, &c) in NoiseCondition::ALL.iter().enumerate() {
        let Some(beats) = table.condition(c) else {
            continue;
        };
        let selected: Vec<&BeatSample> = test
            .iter()
            .map(|&i| {
                beats
                    .get(i)
                    .ok_or_else(|| Error::Config(format!("test index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        let r = evaluate(model, &selected)?;
        mix.merge(&r.confusion);
        acc[slot] = r.accuracy;
        reports.push((c.as_str().to_string(), r));
    }
    let all_present = NoiseCondition::ALL
        .iter()
        .all(|&c| table.condition(c).is_some());
    let mix_report = ClassReport::from_confusion(mix);
    let row = SweepRow {
        train_condition: train_condition.to_string(),
        noiseless: acc[0],
        snr24: acc[1],
        snr10: acc[2],
        snr3: acc[3],
        mix: if all_present {
            mix_report.accuracy
        } else {
            None
        },
    };
    if all_present {
        reports.push(("mix".to_string(), mix_report));
    }
    Ok((row, reports))
}

/// CSV with one line per training condition; empty cells for conditions
/// not evaluated.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        w.write_record([
            r.train_condition.clone(),
            cell(r.noiseless),
            cell(r.snr24),
            cell(r.snr10),
            cell(r.snr3),
            cell(r.mix),
        ])?;
    }
    w.flush()?;
    Ok(())
}
