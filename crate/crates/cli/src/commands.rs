use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ecgformer::dataset::synth::{synth_corpus, synth_noise_record};
use ecgformer::dataset::{
    build_dataset, build_noise_program, is_excluded, make_folds, make_split, match_peaks, materialize,
    read_beats, write_beats, BeatSample, ConditionTable, NoiseCondition, NoiseMode, NoiseSource, Split,
};
use ecgformer::dsp::{denoise, pan_tompkins};
use ecgformer::eval::{evaluate, noise_sweep, write_sweep_csv, Classifier, Report};
use ecgformer::model::{count_ops_and_memory, forward, load_checkpoint, predict, save_checkpoint, ModelParams};
use ecgformer::quant::{
    calibrate, load_quantized, predict_int, qat_finetune, save_quantized, QuantizedModel,
};
use ecgformer::signal_io::{
    header_path, list_records, load_record, mv_to_adc, write_record_212, write_record_csv, BeatClass, EcgRecord,
};
use ecgformer::training::{cross_validate, train, EpochLog, Example};
use serde_json::{json, Value};

use crate::{emit, require, Command, Ctx, NoiseArg, SnrArg, Subset};

pub fn run(ctx: &Ctx, command: &Command) -> Result<Value> {
    match command {
        Command::Ingest { records, out } => ingest(ctx, &records_dir(ctx, records)?, out),
        Command::Denoise { input, out } => denoise_record(ctx, input, out),
        Command::Detect { input, out } => detect(ctx, input, out),
        Command::Segment { records, out } => {
            segment(ctx, &records_dir(ctx, records)?, None, &[NoiseCondition::Noiseless], out)
        }
        Command::Augment {
            records,
            noise,
            snr,
            out,
        } => {
            let noise = noise
                .clone()
                .or_else(|| ctx.cfg.paths.noise_record.clone())
                .context("augment needs --noise or paths.noise_record")?;
            augment(ctx, &records_dir(ctx, records)?, &noise, *snr, out)
        }
        Command::Split { data, out, folds } => split(ctx, data, out, folds.is_some()),
        Command::Train { data, out, .. } => train_cmd(ctx, data, out),
        Command::Cv {
            data, noise, report, ..
        } => cv(ctx, data, *noise, report),
        Command::Quantize { ckpt, data, out, .. } => quantize(ctx, ckpt, data, out),
        Command::Eval {
            ckpt,
            data,
            int8,
            noise,
            subset,
            report,
            logits,
        } => eval(ctx, ckpt, data, *int8, *noise, *subset, report, logits.as_deref()),
        Command::Sweep {
            ckpt,
            data,
            int8,
            label,
            out,
        } => sweep(ctx, ckpt, data, *int8, label.as_deref(), out),
        Command::Count => count(ctx),
        Command::ExportCsv { input, out } => export_csv(ctx, input, out),
        Command::Synth {
            out,
            records,
            noise_samples,
        } => synth(ctx, out, *records, *noise_samples),
    }
}

fn records_dir(ctx: &Ctx, arg: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = arg
        .clone()
        .or_else(|| ctx.cfg.paths.records.clone())
        .context("no record directory: pass --records or set paths.records")?;
    require(&dir, "record directory")?;
    Ok(dir)
}

fn require_record(path: &Path) -> Result<()> {
    require(&header_path(path), "record header")
}

/// Refuses to write over an input file.
fn distinct(input: &Path, output: &Path) -> Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        bail!("output {} would overwrite an input", output.display());
    }
    Ok(())
}

fn load_records(dir: &Path) -> Result<Vec<EcgRecord>> {
    let paths = list_records(dir).with_context(|| format!("listing {}", dir.display()))?;
    if paths.is_empty() {
        bail!("missing input: no .hea records in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_record(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn class_counts(beats: impl IntoIterator<Item = BeatClass>) -> Value {
    let mut counts = [0usize; BeatClass::COUNT];
    for c in beats {
        counts[c.index()] += 1;
    }
    let mut map = serde_json::Map::new();
    for c in BeatClass::ALL {
        map.insert(c.as_char().to_string(), json!(counts[c.index()]));
    }
    Value::Object(map)
}

fn ingest(ctx: &Ctx, dir: &Path, out: &Path) -> Result<Value> {
    let records = load_records(dir)?;
    let mut entries = Vec::new();
    let mut used = Vec::new();
    for r in &records {
        let excluded = is_excluded(r.name()) || r.mlii_mv().is_none();
        let beats: Vec<BeatClass> = r.labeled_beats().into_iter().map(|b| b.1).collect();
        if !excluded {
            used.extend(beats.iter().copied());
        }
        entries.push(json!({
            "name": r.name(),
            "fs": r.fs(),
            "n_samples": r.len(),
            "leads": r.header.channels.iter().map(|c| c.lead_name.clone()).collect::<Vec<_>>(),
            "excluded": excluded,
            "beats": class_counts(beats),
        }));
    }
    let totals = class_counts(used);
    let inventory = json!({
        "meta": ctx.meta(),
        "records": entries,
        "class_totals": totals,
    });
    std::fs::write(out, serde_json::to_vec_pretty(&inventory)?)?;
    Ok(json!({ "out": out, "records": records.len(), "class_totals": totals }))
}

fn output_stem(out: &Path) -> Result<(PathBuf, String)> {
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".hea").to_string())
        .filter(|n| !n.is_empty())
        .context("--out must name a record")?;
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    Ok((dir, name))
}

fn denoise_record(ctx: &Ctx, input: &Path, out: &Path) -> Result<Value> {
    require_record(input)?;
    let record = load_record(input)?;
    let (dir, name) = output_stem(out)?;
    std::fs::create_dir_all(&dir)?;
    distinct(&header_path(input), &dir.join(format!("{name}.hea")))?;
    let filter = &ctx.cfg.prep.filter;
    let mut channels = Vec::with_capacity(record.channels.len());
    for (i, spec) in record.header.channels.iter().enumerate() {
        let clean = denoise(&record.channel_mv(i), record.fs(), filter)?;
        channels.push(
            clean
                .iter()
                .map(|&v| mv_to_adc(v, spec).clamp(-2048, 2047))
                .collect::<Vec<i16>>(),
        );
    }
    let mut header = record.header.clone();
    header.record_name = name.clone();
    let denoised = EcgRecord::new(header, channels, record.annotations.clone())?;
    write_record_212(&denoised, &dir)?;
    let stem = dir.join(&name);
    ctx.write_sidecar(&stem, json!({ "input": input, "filter": filter }))?;
    Ok(json!({ "out": stem, "channels": denoised.channels.len(), "n_samples": denoised.len() }))
}

fn detect(ctx: &Ctx, input: &Path, out: &Path) -> Result<Value> {
    require_record(input)?;
    let record = load_record(input)?;
    let fs = record.fs();
    let signal = record.mlii_mv().unwrap_or_else(|| record.channel_mv(0));
    let clean = denoise(&signal, fs, &ctx.cfg.prep.filter)?;
    let peaks = pan_tompkins(&clean, fs)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["sample_index", "time_s"])?;
    for &p in &peaks {
        w.write_record([p.to_string(), format!("{:.6}", p as f64 / fs)])?;
    }
    w.flush()?;
    let reference: Vec<usize> = record.labeled_beats().iter().map(|b| b.0).collect();
    let matching = (!reference.is_empty()).then(|| {
        let tol = (ctx.cfg.prep.match_tolerance_ms * fs / 1000.0).round() as usize;
        let m = match_peaks(&peaks, &reference, tol);
        json!({
            "annotated": reference.len(),
            "matched": m.pairs.len(),
            "sensitivity": m.sensitivity(),
            "tolerance_ms": ctx.cfg.prep.match_tolerance_ms,
        })
    });
    ctx.write_sidecar(out, json!({ "input": input, "peaks": peaks.len(), "matching": matching }))?;
    Ok(json!({ "out": out, "peaks": peaks.len(), "matching": matching }))
}

fn segment(
    ctx: &Ctx,
    dir: &Path,
    noise: Option<&NoiseSource>,
    conditions: &[NoiseCondition],
    out: &Path,
) -> Result<Value> {
    let records = load_records(dir)?;
    let (table, stats) = build_dataset(&records, conditions, noise, &ctx.cfg.prep_config())?;
    let n_beats = table.len();
    let labels = class_counts(table.labels());
    let metadata = json!({
        "meta": ctx.meta(),
        "records": records.len(),
        "conditions": conditions,
        "prep": ctx.cfg.prep_config(),
        "segment_stats": stats,
        "class_totals": labels,
    });
    write_beats(out, &table.into_flat(), metadata)?;
    Ok(json!({
        "out": out,
        "beats": n_beats,
        "conditions": conditions,
        "class_totals": labels,
        "dropped": stats.dropped(),
    }))
}

fn augment(ctx: &Ctx, dir: &Path, noise: &Path, snr: SnrArg, out: &Path) -> Result<Value> {
    require_record(noise)?;
    let source = NoiseSource::from_record(&load_record(noise)?)?;
    segment(ctx, dir, Some(&source), &snr.conditions(), out)
}

fn load_table(path: &Path) -> Result<ConditionTable> {
    require(path, "dataset")?;
    let (beats, _) = read_beats(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ConditionTable::from_flat(beats)?)
}

fn split(ctx: &Ctx, data: &Path, out: &Path, with_folds: bool) -> Result<Value> {
    let table = load_table(data)?;
    let spec = &ctx.cfg.split;
    let split = make_split(table.len(), spec)?;
    let folds = if with_folds {
        make_folds(table.len(), spec)?
    } else {
        Vec::new()
    };
    let doc = json!({
        "meta": ctx.meta(),
        "n": table.len(),
        "spec": spec,
        "split": split,
        "folds": folds,
    });
    std::fs::write(out, serde_json::to_vec(&doc)?)?;
    let (tr, va, te) = split.sizes();
    Ok(json!({ "out": out, "train": tr, "valid": va, "test": te, "folds": folds.len() }))
}

fn epoch_line(stage: &str, log: &EpochLog) {
    emit(&json!({
        "event": "epoch",
        "stage": stage,
        "epoch": log.epoch,
        "train_loss": log.train_loss,
        "valid_loss": log.valid_loss,
        "valid_accuracy": log.valid_accuracy,
        "lr": log.lr,
    }));
}

fn split_beats<'a>(table: &'a ConditionTable, idx: &[usize], mode: NoiseMode, seed: u64) -> Result<Vec<&'a BeatSample>> {
    Ok(materialize(table, &build_noise_program(idx, mode, seed))?)
}

fn train_cmd(ctx: &Ctx, data: &Path, out: &Path) -> Result<Value> {
    let table = load_table(data)?;
    distinct(data, out)?;
    let cfg = &ctx.cfg.train;
    let split = make_split(table.len(), &ctx.cfg.split)?;
    let tr = split_beats(&table, &split.train, cfg.noise_mode, cfg.seed)?;
    let va = split_beats(&table, &split.valid, cfg.noise_mode, cfg.seed ^ 1)?;
    log::info!("training on {} beats, validating on {}", tr.len(), va.len());
    let outcome = train(&ctx.cfg.model, cfg, &tr, &va, |l| epoch_line("train", l))?;
    let best = &outcome.log[outcome.best_epoch];
    let metadata = json!({
        "meta": ctx.meta(),
        "train": cfg,
        "best_epoch": outcome.best_epoch,
        "valid_accuracy": best.valid_accuracy,
        "valid_loss": best.valid_loss,
    });
    save_checkpoint(out, &outcome.params, metadata)?;
    Ok(json!({
        "out": out,
        "best_epoch": outcome.best_epoch,
        "valid_accuracy": best.valid_accuracy,
        "params": outcome.params.len(),
    }))
}

fn cv(ctx: &Ctx, data: &Path, noise: NoiseArg, report_path: &Path) -> Result<Value> {
    let table = load_table(data)?;
    let (cfg, spec) = (&ctx.cfg.train, &ctx.cfg.split);
    let result = cross_validate(&ctx.cfg.model, cfg, &table, spec, noise.mode())?;
    for (f, fold) in result.folds.iter().enumerate() {
        emit(&json!({
            "event": "fold",
            "fold": f,
            "epochs": fold.log.len(),
            "test_accuracy": fold.report.accuracy,
        }));
    }
    let mut report = Report::new("cv", &ctx.hash, ctx.seed());
    report.aggregate = Some(result.aggregate.clone());
    report.extra = json!({
        "data": data,
        "folds": spec.n_folds,
        "test_noise": noise.mode().to_string(),
        "train": cfg,
    });
    report.write(report_path)?;
    Ok(json!({
        "report": report_path,
        "accuracy_mean": result.aggregate.accuracy.mean,
        "accuracy_std": result.aggregate.accuracy.std,
    }))
}

fn examples(beats: &[&BeatSample]) -> Vec<Example> {
    beats.iter().map(|b| Example::from_beat(b)).collect()
}

fn quantize(ctx: &Ctx, ckpt: &Path, data: &Path, out: &Path) -> Result<Value> {
    require(ckpt, "checkpoint")?;
    let params = load_checkpoint(ckpt)?.params;
    let table = load_table(data)?;
    distinct(ckpt, out)?;
    let cfg = &ctx.cfg.train;
    let split = make_split(table.len(), &ctx.cfg.split)?;
    let tr = examples(&split_beats(&table, &split.train, cfg.noise_mode, cfg.seed)?);
    let va = examples(&split_beats(&table, &split.valid, cfg.noise_mode, cfg.seed ^ 1)?);
    let (tr, va): (Vec<&Example>, Vec<&Example>) = (tr.iter().collect(), va.iter().collect());
    let scales = calibrate(&params, &tr)?;
    let qat = &ctx.cfg.qat;
    let outcome = qat_finetune(params, scales, qat, cfg.lr0, &tr, &va, |l| epoch_line("qat", l))?;
    let test = split_beats(&table, &split.test, NoiseMode::default(), 0)?;
    let int_accuracy = evaluate(&outcome.model, &test)?.accuracy;
    let metadata = json!({
        "meta": ctx.meta(),
        "source_checkpoint": ckpt,
        "qat": qat,
        "best_epoch": outcome.best_epoch,
    });
    save_quantized(out, &outcome.model, metadata)?;
    Ok(json!({
        "out": out,
        "qat_epochs": outcome.log.len(),
        "best_epoch": outcome.best_epoch,
        "int8_test_accuracy": int_accuracy,
    }))
}

enum Loaded {
    Float(ModelParams),
    Int8(QuantizedModel),
}

impl Loaded {
    /// The model and the metadata stored with it.
    fn open(path: &Path, int8: bool) -> Result<(Self, Value)> {
        require(path, "checkpoint")?;
        Ok(if int8 {
            let (q, meta) = load_quantized(path)?;
            (Loaded::Int8(q), meta)
        } else {
            let ckpt = load_checkpoint(path)?;
            (Loaded::Float(ckpt.params), ckpt.metadata)
        })
    }

    fn classifier(&self) -> &dyn Classifier {
        match self {
            Loaded::Float(p) => p,
            Loaded::Int8(q) => q,
        }
    }

    /// Logits as printed in the logits file: integers for the int8 model.
    fn logits(&self, beat: &BeatSample) -> Result<(usize, Vec<String>)> {
        let ex = Example::from_beat(beat);
        Ok(match self {
            Loaded::Float(p) => {
                let l = forward(p, &ex.window, &ex.rr)?;
                (predict(&l), l.iter().map(|v| format!("{v:e}")).collect())
            }
            Loaded::Int8(q) => {
                let l = q.int_logits(&q.quantize_input(&ex.window, &ex.rr)?)?;
                (predict_int(&l), l.iter().map(i32::to_string).collect())
            }
        })
    }
}

fn subset_indices(split: &Split, subset: Subset, n: usize) -> Vec<usize> {
    match subset {
        Subset::Train => split.train.clone(),
        Subset::Valid => split.valid.clone(),
        Subset::Test => split.test.clone(),
        Subset::All => (0..n).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    ctx: &Ctx,
    ckpt: &Path,
    data: &Path,
    int8: bool,
    noise: NoiseArg,
    subset: Subset,
    report_path: &Path,
    logits_path: Option<&Path>,
) -> Result<Value> {
    let (model, _) = Loaded::open(ckpt, int8)?;
    let table = load_table(data)?;
    let split = make_split(table.len(), &ctx.cfg.split)?;
    let idx = subset_indices(&split, subset, table.len());
    let beats = split_beats(&table, &idx, noise.mode(), ctx.seed())?;
    let metrics = evaluate(model.classifier(), &beats)?;
    if let Some(path) = logits_path {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "label", "pred", "l0", "l1", "l2", "l3", "l4"])?;
        for (i, b) in beats.iter().enumerate() {
            let (pred, logits) = model.logits(b)?;
            let mut row = vec![i.to_string(), b.label.index().to_string(), pred.to_string()];
            row.extend(logits);
            w.write_record(&row)?;
        }
        w.flush()?;
        ctx.write_sidecar(path, json!({ "checkpoint": ckpt, "int8": int8 }))?;
    }
    let mut report = Report::new("eval", &ctx.hash, ctx.seed());
    report.metrics = Some(metrics.clone());
    report.extra = json!({
        "checkpoint": ckpt,
        "data": data,
        "int8": int8,
        "noise": noise.mode().to_string(),
        "subset": format!("{subset:?}").to_lowercase(),
        "beats": beats.len(),
    });
    report.write(report_path)?;
    Ok(json!({
        "report": report_path,
        "beats": beats.len(),
        "accuracy": metrics.accuracy,
        "confusion": metrics.confusion.counts,
    }))
}

fn sweep(ctx: &Ctx, ckpt: &Path, data: &Path, int8: bool, label: Option<&str>, out: &Path) -> Result<Value> {
    let (model, meta) = Loaded::open(ckpt, int8)?;
    let table = load_table(data)?;
    let split = make_split(table.len(), &ctx.cfg.split)?;
    let trained_on = meta["train"]["noise_mode"].as_str().map(str::to_string);
    let label = label
        .map(str::to_string)
        .or(trained_on)
        .unwrap_or_else(|| ctx.cfg.train.noise_mode.to_string());
    let (row, reports) = noise_sweep(model.classifier(), &table, &split.test, &label)?;
    write_sweep_csv(out, std::slice::from_ref(&row))?;
    let mut report = Report::new("sweep", &ctx.hash, ctx.seed());
    report.extra = json!({
        "checkpoint": ckpt,
        "int8": int8,
        "row": row,
        "conditions": reports.iter().map(|(c, r)| json!({ "condition": c, "metrics": r })).collect::<Vec<_>>(),
    });
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".meta.json");
    report.write(Path::new(&report_path))?;
    Ok(json!({ "out": out, "report": report_path.to_string_lossy(), "row": row }))
}

fn count(ctx: &Ctx) -> Result<Value> {
    let model = ctx.cfg.train.effective_model(&ctx.cfg.model);
    model.validate()?;
    let c = count_ops_and_memory(&model);
    Ok(json!({
        "params": c.params,
        "macs": c.macs,
        "mops": c.mops,
        "footprint_bytes": c.footprint_bytes,
    }))
}

fn export_csv(ctx: &Ctx, input: &Path, out: &Path) -> Result<Value> {
    require_record(input)?;
    let record = load_record(input)?;
    std::fs::create_dir_all(out)?;
    let path = write_record_csv(&record, out)?;
    ctx.write_sidecar(&path, json!({ "input": input }))?;
    Ok(json!({ "out": path, "n_samples": record.len() }))
}

fn synth(ctx: &Ctx, out: &Path, n_records: usize, noise_samples: usize) -> Result<Value> {
    if n_records == 0 {
        bail!("--records must be at least 1");
    }
    let noise_dir = out.join("noise");
    std::fs::create_dir_all(&noise_dir)?;
    let records = synth_corpus(n_records, &ctx.cfg.synth, ctx.seed())?;
    for r in &records {
        write_record_212(r, out)?;
    }
    let noise = synth_noise_record("em", noise_samples, ctx.cfg.synth.fs, ctx.seed() ^ 0x5eed)?;
    write_record_212(&noise, &noise_dir)?;
    ctx.write_sidecar(out, json!({ "records": n_records, "synth": ctx.cfg.synth }))?;
    Ok(json!({
        "out": out,
        "records": records.iter().map(|r| r.name().to_string()).collect::<Vec<_>>(),
        "noise_record": noise_dir.join("em"),
    }))
}
