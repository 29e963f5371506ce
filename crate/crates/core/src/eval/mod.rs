//! Confusion matrices, per-class sensitivity and precision, fold
//! aggregation, JSON reports and the noise-robustness sweep.

mod sweep;

pub use sweep::{evaluate, noise_sweep, write_sweep_csv, Classifier, SweepRow, SWEEP_COLUMNS};

use serde::{Deserialize, Serialize};

use crate::signal_io::BeatClass;
use crate::{Error, Result};

const C: usize = BeatClass::COUNT;

/// Output of `git describe` for the build that produced a report.
pub const CODE_VERSION: &str = env!("ECGFORMER_GIT_DESCRIBE");

/// Rows are true classes, columns predictions, both in N, S, V, F, Q order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; C]; C],
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..C {
            for j in 0..C {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..C).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.trace(), self.total())
    }

    /// Diagonal over row sum; `None` when the class never occurs.
    pub fn sensitivity(&self, class: usize) -> Option<f64> {
        ratio(self.counts[class][class], self.row_sum(class))
    }

    /// Diagonal over column sum; `None` when the class is never predicted.
    pub fn precision(&self, class: usize) -> Option<f64> {
        ratio(self.counts[class][class], self.col_sum(class))
    }
}

/// Tallies `(label, prediction)` pairs.
pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= C || l >= C {
            return Err(Error::Shape(format!(
                "class index {} out of range",
                p.max(l)
            )));
        }
        cm.add(l, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub sensitivity: [Option<f64>; C],
    pub precision: [Option<f64>; C],
}

impl ClassReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        Self {
            accuracy: cm.accuracy(),
            sensitivity: std::array::from_fn(|c| cm.sensitivity(c)),
            precision: std::array::from_fn(|c| cm.precision(c)),
            confusion: cm,
        }
    }

    /// True when every scalar equals its recomputation from the matrix.
    pub fn is_consistent(&self) -> bool {
        *self == Self::from_confusion(self.confusion)
    }
}

/// Mean and sample standard deviation over the folds where a metric is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Folds contributing.
    pub n: usize,
}

impl MetricSummary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: None,
                std: None,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (n > 1)
            .then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self {
            mean: Some(mean),
            std,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAggregate {
    pub folds: Vec<ClassReport>,
    pub accuracy: MetricSummary,
    pub sensitivity: [MetricSummary; C],
    pub precision: [MetricSummary; C],
    /// Sum of the per-fold matrices.
    pub pooled: ConfusionMatrix,
    /// How `std` is computed.
    pub std_kind: String,
}

/// Per-fold metric means and sample deviations, plus the pooled matrix.
pub fn aggregate_folds(folds: &[ClassReport]) -> FoldAggregate {
    let mut pooled = ConfusionMatrix::default();
    for f in folds {
        pooled.merge(&f.confusion);
    }
    FoldAggregate {
        accuracy: MetricSummary::of(folds.iter().map(|f| f.accuracy)),
        sensitivity: std::array::from_fn(|c| {
            MetricSummary::of(folds.iter().map(|f| f.sensitivity[c]))
        }),
        precision: std::array::from_fn(|c| MetricSummary::of(folds.iter().map(|f| f.precision[c]))),
        folds: folds.to_vec(),
        pooled,
        std_kind: "sample".into(),
    }
}

/// A report file: metrics plus what is needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub metrics: Option<ClassReport>,
    pub aggregate: Option<FoldAggregate>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Report {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            kind: kind.into(),
            config_hash: config_hash.into(),
            seed,
            code_version: CODE_VERSION.into(),
            metrics: None,
            aggregate: None,
            extra: serde_json::Value::Null,
        }
    }

    /// Checks every emitted metric against its own confusion matrices.
    pub fn is_consistent(&self) -> bool {
        let metrics_ok = self.metrics.as_ref().is_none_or(ClassReport::is_consistent);
        let agg_ok = self.aggregate.as_ref().is_none_or(|a| {
            let again = aggregate_folds(&a.folds);
            a.folds.iter().all(ClassReport::is_consistent) && again == *a
        });
        metrics_ok && agg_ok
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
