//! WFDB record ingestion: text headers, format-212 signal files, MIT
//! annotation files and a CSV fallback, plus the AAMI beat-class mapping.

mod aami;
mod annotations;
mod csv_record;
mod format212;
mod header;

use std::path::{Path, PathBuf};

pub use aami::{map_symbol_to_class, BeatClass};
pub use annotations::{code_to_symbol, encode_annotations, parse_annotations, symbol_to_code};
pub use csv_record::{load_record_csv, write_record_csv};
pub use format212::{decode_format212, encode_format212};
pub use header::{parse_header, write_header};

use crate::{Error, Result};

/// MIT-BIH records that contain paced beats and are left out of every dataset.
pub const PACED_RECORDS: [&str; 4] = ["102", "104", "107", "217"];

/// Lead consumed by the classifier.
pub const MLII: &str = "MLII";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SignalFormat {
    Format212,
    Csv,
}

impl SignalFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalFormat::Format212 => "212",
            SignalFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelSpec {
    pub file_name: String,
    pub format: SignalFormat,
    /// ADC units per mV.
    pub gain: f64,
    pub adc_zero: i32,
    pub lead_name: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_rate_hz: f64,
    pub n_samples: usize,
    pub channels: Vec<ChannelSpec>,
}

impl RecordHeader {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Index of the channel whose description is `lead`.
    pub fn channel_index(&self, lead: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.lead_name == lead)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Annotation {
    pub sample_index: usize,
    pub symbol: char,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// Raw ADC samples, one vector per channel.
    pub channels: Vec<Vec<i16>>,
    pub annotations: Vec<Annotation>,
}

impl EcgRecord {
    /// Builds a record, checking channel lengths and annotation ordering.
    ///
    /// Annotation indices may repeat (real annotation files occasionally put a
    /// rhythm marker on the same sample as a beat) but never decrease.
    pub fn new(
        mut header: RecordHeader,
        channels: Vec<Vec<i16>>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if channels.len() != header.n_channels() {
            return Err(Error::InvalidRecord(format!(
                "{} channels declared, {} decoded",
                header.n_channels(),
                channels.len()
            )));
        }
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidRecord("channels differ in length".into()));
        }
        if header.n_samples == 0 {
            header.n_samples = n;
        } else if header.n_samples != n {
            return Err(Error::LengthMismatch {
                expected: header.n_samples,
                actual: n,
            });
        }
        for pair in annotations.windows(2) {
            if pair[1].sample_index < pair[0].sample_index {
                return Err(Error::InvalidRecord(format!(
                    "annotation indices decrease ({} after {})",
                    pair[1].sample_index, pair[0].sample_index
                )));
            }
        }
        if let Some(last) = annotations.last() {
            if last.sample_index >= n {
                return Err(Error::InvalidRecord(format!(
                    "annotation at {} beyond {} samples",
                    last.sample_index, n
                )));
            }
        }
        Ok(Self {
            header,
            channels,
            annotations,
        })
    }

    pub fn name(&self) -> &str {
        &self.header.record_name
    }

    pub fn fs(&self) -> f64 {
        self.header.sampling_rate_hz
    }

    pub fn len(&self) -> usize {
        self.header.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.header.n_samples == 0
    }

    /// Channel `idx` converted to mV.
    pub fn channel_mv(&self, idx: usize) -> Vec<f64> {
        let spec = &self.header.channels[idx];
        self.channels[idx]
            .iter()
            .map(|&v| (f64::from(v) - f64::from(spec.adc_zero)) / spec.gain)
            .collect()
    }

    /// The MLII channel in mV, or `None` when the record has no MLII lead.
    pub fn mlii_mv(&self) -> Option<Vec<f64>> {
        self.header.channel_index(MLII).map(|i| self.channel_mv(i))
    }

    /// Beat annotations with their AAMI class, non-beat symbols removed.
    pub fn labeled_beats(&self) -> Vec<(usize, BeatClass)> {
        self.annotations
            .iter()
            .filter_map(|a| map_symbol_to_class(a.symbol).map(|c| (a.sample_index, c)))
            .collect()
    }
}

/// Converts mV back to ADC units with the channel calibration.
pub fn mv_to_adc(mv: f64, spec: &ChannelSpec) -> i16 {
    let v = (mv * spec.gain + f64::from(spec.adc_zero)).round();
    v.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Resolves `path` (a record stem, or a path ending in `.hea`) to the header path.
pub fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "hea") {
        path.to_path_buf()
    } else {
        let mut p = path.as_os_str().to_owned();
        p.push(".hea");
        PathBuf::from(p)
    }
}

/// Loads a record given its stem (`dir/100`) or header path (`dir/100.hea`).
///
/// Format-212 records read `<file>` named in the header and `<stem>.atr`;
/// CSV records defer to [`load_record_csv`]. A missing annotation file
/// yields an empty annotation list.
pub fn load_record(path: &Path) -> Result<EcgRecord> {
    let hea = header_path(path);
    let dir = hea.parent().map(Path::to_path_buf).unwrap_or_default();
    let header = parse_header(&std::fs::read(&hea)?)?;
    match header.channels[0].format {
        SignalFormat::Csv => load_record_csv(&dir.join(&header.channels[0].file_name)),
        SignalFormat::Format212 => {
            if header
                .channels
                .iter()
                .any(|c| c.format != SignalFormat::Format212)
                || header
                    .channels
                    .iter()
                    .any(|c| c.file_name != header.channels[0].file_name)
            {
                return Err(Error::UnsupportedFormat(
                    "mixed formats or multiple signal files".into(),
                ));
            }
            let bytes = std::fs::read(dir.join(&header.channels[0].file_name))?;
            let channels = decode_format212(&bytes, &header)?;
            let atr = dir.join(format!("{}.atr", header.record_name));
            let annotations = if atr.exists() {
                parse_annotations(&std::fs::read(atr)?)?
            } else {
                Vec::new()
            };
            EcgRecord::new(header, channels, annotations)
        }
    }
}

/// Writes a format-212 record (`.hea`, `.dat`, `.atr`) into `dir`.
pub fn write_record_212(record: &EcgRecord, dir: &Path) -> Result<()> {
    let name = record.name();
    let mut header = record.header.clone();
    for c in &mut header.channels {
        c.format = SignalFormat::Format212;
        c.file_name = format!("{name}.dat");
    }
    std::fs::write(dir.join(format!("{name}.hea")), write_header(&header))?;
    std::fs::write(
        dir.join(format!("{name}.dat")),
        encode_format212(&record.channels)?,
    )?;
    std::fs::write(
        dir.join(format!("{name}.atr")),
        encode_annotations(&record.annotations)?,
    )?;
    Ok(())
}

/// Lists record stems (headers) in a directory, sorted by name.
pub fn list_records(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "hea"))
        .collect();
    out.sort();
    Ok(out)
}
