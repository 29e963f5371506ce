//! CSV fallback: `<stem>.csv` holds `sample_index,<lead>,...` in mV,
//! `<stem>.ann.csv` holds `sample_index,symbol`, and an optional `<stem>.hea`
//! (format `csv`) supplies the sampling rate and ADC calibration.

use std::path::{Path, PathBuf};

use super::{
    header::{parse_header, write_header},
    mv_to_adc, Annotation, ChannelSpec, EcgRecord, RecordHeader, SignalFormat,
};
use crate::{Error, Result};

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Loads a CSV record. Values are converted to ADC units with the header
/// gain (200 ADC/mV and 360 Hz when no header is present).
pub fn load_record_csv(path: &Path) -> Result<EcgRecord> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if columns.len() < 2 || columns[0] != "sample_index" {
        return Err(Error::Csv(format!(
            "{}: expected columns sample_index,<lead>..., got {columns:?}",
            path.display()
        )));
    }
    let leads = &columns[1..];

    let hea = sibling(path, ".hea");
    let header = if hea.exists() {
        let h = parse_header(&std::fs::read(&hea)?)?;
        if h.n_channels() != leads.len() {
            return Err(Error::Csv(format!(
                "header declares {} channels, CSV has {}",
                h.n_channels(),
                leads.len()
            )));
        }
        h
    } else {
        RecordHeader {
            record_name: path
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
            sampling_rate_hz: 360.0,
            n_samples: 0,
            channels: leads
                .iter()
                .map(|l| ChannelSpec {
                    file_name: path
                        .file_name()
                        .unwrap_or_default()
                        .to_string_lossy()
                        .into_owned(),
                    format: SignalFormat::Csv,
                    gain: 200.0,
                    adc_zero: 0,
                    lead_name: l.clone(),
                })
                .collect(),
        }
    };

    let mut channels: Vec<Vec<i16>> = vec![Vec::new(); leads.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(Error::Csv(format!("row {row}: missing columns")));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| Error::Csv(format!("row {row}: bad sample index {:?}", &rec[0])))?;
        if idx != row {
            return Err(Error::Csv(format!(
                "row {row}: non-monotonic sample index {idx}"
            )));
        }
        for (c, (field, spec)) in rec.iter().skip(1).zip(&header.channels).enumerate() {
            let mv: f64 = field
                .parse()
                .map_err(|_| Error::Csv(format!("row {row}: bad value {field:?}")))?;
            channels[c].push(mv_to_adc(mv, spec));
        }
    }

    let ann_path = sibling(path, ".ann.csv");
    let annotations = if ann_path.exists() {
        load_annotation_csv(&ann_path)?
    } else {
        Vec::new()
    };
    EcgRecord::new(header, channels, annotations)
}

fn load_annotation_csv(path: &Path) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let cols: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if cols != ["sample_index", "symbol"] {
        return Err(Error::Csv(format!(
            "{}: expected columns sample_index,symbol",
            path.display()
        )));
    }
    let mut out: Vec<Annotation> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| Error::Csv(format!("annotation row {row}: bad index")))?;
        let mut chars = rec[1].chars();
        let symbol = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(Error::Csv(format!("annotation row {row}: bad symbol"))),
        };
        if out.last().is_some_and(|a| a.sample_index > idx) {
            return Err(Error::Csv(format!(
                "annotation row {row}: non-monotonic index"
            )));
        }
        out.push(Annotation {
            sample_index: idx,
            symbol,
        });
    }
    Ok(out)
}

/// Writes `<name>.hea`, `<name>.csv` and `<name>.ann.csv` into `dir`.
/// Re-importing with [`load_record_csv`] reproduces the ADC samples exactly.
pub fn write_record_csv(record: &EcgRecord, dir: &Path) -> Result<PathBuf> {
    let name = record.name();
    let csv_name = format!("{name}.csv");
    let mut header = record.header.clone();
    for c in &mut header.channels {
        c.format = SignalFormat::Csv;
        c.file_name = csv_name.clone();
    }
    std::fs::write(dir.join(format!("{name}.hea")), write_header(&header))?;

    let csv_path = dir.join(&csv_name);
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut cols = vec!["sample_index".to_string()];
    cols.extend(header.channels.iter().map(|c| c.lead_name.clone()));
    w.write_record(&cols)?;
    let mv: Vec<Vec<f64>> = (0..header.n_channels())
        .map(|c| record.channel_mv(c))
        .collect();
    for i in 0..record.len() {
        let mut row = vec![i.to_string()];
        row.extend(mv.iter().map(|ch| ch[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(format!("{name}.ann.csv")))?;
    w.write_record(["sample_index", "symbol"])?;
    for a in &record.annotations {
        w.write_record([a.sample_index.to_string(), a.symbol.to_string()])?;
    }
    w.flush()?;
    Ok(csv_path)
}
