//! Cross-entropy training with analytic gradients, Adam and a
//! reduce-on-plateau schedule; single-split and k-fold drivers.

mod backward;
mod optim;

pub use backward::{
    attention_backward, backward, embed_backward, layer_norm_backward, linear_backward,
    loss_and_grad, loss_and_grad_hooked, loss_only, softmax_cross_entropy, Example, GradientSet,
};
pub use optim::{adam_step, plateau_schedule, AdamState, PlateauConfig, PlateauState};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_noise_program, make_folds, materialize, BeatSample, ConditionTable, NoiseMode, SplitSpec,
};
use crate::eval::{aggregate_folds, evaluate, ClassReport, FoldAggregate};
use crate::model::{forward, predict, ModelConfig, ModelParams};
use crate::{seeding, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub plateau: PlateauConfig,
    pub seed: u64,
    /// Feed the RR pair to the head.
    pub use_rr: bool,
    /// Denoise records before segmentation; applied when the dataset is built.
    pub use_denoising: bool,
    /// Noise program of the training split.
    pub noise_mode: NoiseMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr0: 2e-3,
            plateau: PlateauConfig::default(),
            seed: 0,
            use_rr: true,
            use_denoising: true,
            noise_mode: NoiseMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 {} must be positive", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// The model configuration with the RR ablation applied.
    pub fn effective_model(&self, model: &ModelConfig) -> ModelConfig {
        ModelConfig {
            use_rr: model.use_rr && self.use_rr,
            ..model.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// What is being minimized: a plain float model or a quantization-aware one.
pub trait Objective {
    fn batch(&mut self, params: &ModelParams, batch: &[&Example]) -> Result<(f64, GradientSet)>;
    /// Mean loss and accuracy on `examples`.
    fn evaluate(&self, params: &ModelParams, examples: &[&Example]) -> Result<(f64, f64)>;
    /// Called whenever the current epoch becomes the best one.
    fn on_best(&mut self) {}
}

pub struct FloatObjective;

/// Mean loss and accuracy of the float model.
pub fn loss_and_accuracy(params: &ModelParams, examples: &[&Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per: Vec<(f64, bool)> = examples
        .par_iter()
        .map(|ex| {
            let logits = forward(params, &ex.window, &ex.rr)?;
            Ok((
                softmax_cross_entropy(&logits, ex.label).0,
                predict(&logits) == ex.label,
            ))
        })
        .collect::<Result<_>>()?;
    let n = examples.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

impl Objective for FloatObjective {
    fn batch(&mut self, params: &ModelParams, batch: &[&Example]) -> Result<(f64, GradientSet)> {
        loss_and_grad(params, batch)
    }

    fn evaluate(&self, params: &ModelParams, examples: &[&Example]) -> Result<(f64, f64)> {
        loss_and_accuracy(params, examples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub plateau: PlateauConfig,
    pub seed: u64,
}

impl From<&TrainConfig> for FitOptions {
    fn from(t: &TrainConfig) -> Self {
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            plateau: t.plateau.clone(),
            seed: t.seed,
        }
    }
}

/// Mini-batch Adam over `epochs`, reshuffling each epoch with a generator
/// seeded from `(seed, epoch)`. Keeps the parameters of the epoch with the
/// lowest validation loss (training loss when `valid` is empty).
pub fn fit<O: Objective>(
    mut params: ModelParams,
    objective: &mut O,
    opts: &FitOptions,
    train: &[&Example],
    valid: &[&Example],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = AdamState::new(params.len());
    let mut plateau = PlateauState::new(opts.lr0);
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut log = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..opts.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeding::rng(opts.seed, &format!("epoch-{epoch}")));
        let lr = plateau.lr;
        let mut total = 0.0;
        for (step, idx) in order.chunks(opts.batch_size.max(1)).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| train[i]).collect();
            let (loss, grads) = objective.batch(&params, &batch).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch, step },
                other => other,
            })?;
            total += loss * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, lr);
        }
        let train_loss = total / train.len() as f64;
        let (valid_loss, valid_accuracy) = if valid.is_empty() {
            (train_loss, f64::NAN)
        } else {
            objective.evaluate(&params, valid)?
        };
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: usize::MAX,
            });
        }
        if valid_loss < best.0 {
            best = (valid_loss, params.clone(), epoch);
            objective.on_best();
        }
        plateau.step(valid_loss, &opts.plateau);
        let entry = EpochLog {
            epoch,
            train_loss,
            valid_loss,
            valid_accuracy,
            lr,
        };
        log::debug!("epoch {epoch}: train {train_loss:.5} valid {valid_loss:.5} acc {valid_accuracy:.4} lr {lr:e}");
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        params: best.1,
        best_epoch: best.2,
        log,
    })
}

/// Trains a fresh float model on the given beats.
pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    train: &[&BeatSample],
    valid: &[&BeatSample],
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = cfg.effective_model(model);
    let train: Vec<Example> = train.iter().map(|b| Example::from_beat(b)).collect();
    let valid: Vec<Example> = valid.iter().map(|b| Example::from_beat(b)).collect();
    let params = ModelParams::init(&model, cfg.seed)?;
    fit(
        params,
        &mut FloatObjective,
        &FitOptions::from(cfg),
        &train.iter().collect::<Vec<_>>(),
        &valid.iter().collect::<Vec<_>>(),
        on_epoch,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub params: ModelParams,
    pub report: ClassReport,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub aggregate: FoldAggregate,
}

/// k-fold cross-validation: per fold, train under `cfg.noise_mode`
/// (validation uses the same program) and test under `test_mode`.
pub fn cross_validate(
    model: &ModelConfig,
    cfg: &TrainConfig,
    table: &ConditionTable,
    split: &SplitSpec,
    test_mode: NoiseMode,
) -> Result<CrossValidation> {
    let folds = make_folds(table.len(), split)?;
    let mut results = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let fold_seed = seeding::derive(cfg.seed, &format!("fold-{f}"));
        let fold_cfg = TrainConfig {
            seed: fold_seed,
            ..cfg.clone()
        };
        let tr = materialize(
            table,
            &build_noise_program(&fold.train, cfg.noise_mode, fold_seed),
        )?;
        let va = materialize(
            table,
            &build_noise_program(&fold.valid, cfg.noise_mode, fold_seed ^ 1),
        )?;
        let te = materialize(
            table,
            &build_noise_program(&fold.test, test_mode, fold_seed),
        )?;
        log::info!(
            "fold {f}: {} train, {} valid, {} test",
            tr.len(),
            va.len(),
            te.len()
        );
        let out = train(model, &fold_cfg, &tr, &va, |_| {})?;
        let report = evaluate(&out.params, &te)?;
        results.push(FoldResult {
            params: out.params,
            report,
            log: out.log,
        });
    }
    let aggregate = aggregate_folds(&results.iter().map(|r| r.report.clone()).collect::<Vec<_>>());
    Ok(CrossValidation {
        folds: results,
        aggregate,
    })
}
