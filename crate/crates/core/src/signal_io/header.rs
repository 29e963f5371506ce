use super::{ChannelSpec, RecordHeader, SignalFormat};
use crate::{Error, Result};

const DEFAULT_FS: f64 = 250.0;
const DEFAULT_GAIN: f64 = 200.0;

fn header_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Header {
        line,
        msg: msg.into(),
    }
}

/// Leading run of `[0-9.+-eE]`, i.e. the numeric prefix of a WFDB field such
/// as `360/100(0)` or `200(0)/mV`.
fn numeric_prefix(field: &str) -> &str {
    let end = field
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(field.len());
    &field[..end]
}

fn parse_format(field: &str, line: usize) -> Result<SignalFormat> {
    if field.eq_ignore_ascii_case("csv") {
        return Ok(SignalFormat::Csv);
    }
    let digits: &str = &field[..field
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(field.len())];
    if digits.is_empty() {
        return Err(header_err(line, format!("bad format field {field:?}")));
    }
    match digits {
        "212" => Ok(SignalFormat::Format212),
        other => Err(Error::UnsupportedFormat(other.to_string())),
    }
}

/// Parses a WFDB header file.
///
/// Only the fields the pipeline needs are kept; trailing optional fields
/// (ADC resolution, initial value, checksum, block size) are ignored.
pub fn parse_header(bytes: &[u8]) -> Result<RecordHeader> {
    let text = std::str::from_utf8(bytes).map_err(|_| header_err(0, "not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lno, record_line) = lines.next().ok_or_else(|| header_err(0, "empty header"))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(header_err(
            lno,
            "record line needs a name and a channel count",
        ));
    }
    let record_name = fields[0].split('/').next().unwrap_or(fields[0]).to_string();
    let n_channels: usize = fields[1]
        .parse()
        .map_err(|_| header_err(lno, format!("bad channel count {:?}", fields[1])))?;
    if n_channels == 0 {
        return Err(Error::ZeroChannels);
    }
    let sampling_rate_hz = match fields.get(2) {
        Some(f) => numeric_prefix(f)
            .parse::<f64>()
            .map_err(|_| header_err(lno, format!("bad sampling rate {f:?}")))?,
        None => DEFAULT_FS,
    };
    if !(sampling_rate_hz > 0.0) {
        return Err(header_err(lno, "sampling rate must be positive"));
    }
    let n_samples = match fields.get(3) {
        Some(f) => f
            .parse::<usize>()
            .map_err(|_| header_err(lno, format!("bad sample count {f:?}")))?,
        None => 0,
    };

    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| header_err(lno, "fewer signal lines than declared channels"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 2 {
            return Err(header_err(
                lno,
                "signal line needs a file name and a format",
            ));
        }
        let format = parse_format(f[1], lno)?;
        let gain = match f.get(2) {
            Some(g) => {
                let v: f64 = numeric_prefix(g)
                    .parse()
                    .map_err(|_| header_err(lno, format!("bad gain {g:?}")))?;
                if v == 0.0 {
                    DEFAULT_GAIN
                } else if v < 0.0 {
                    return Err(header_err(lno, "gain must be positive"));
                } else {
                    v
                }
            }
            None => DEFAULT_GAIN,
        };
        let adc_zero = match f.get(4) {
            Some(z) => z
                .parse::<i32>()
                .map_err(|_| header_err(lno, format!("bad ADC zero {z:?}")))?,
            None => 0,
        };
        let lead_name = if f.len() > 8 {
            f[8..].join(" ")
        } else {
            String::new()
        };
        channels.push(ChannelSpec {
            file_name: f[0].to_string(),
            format,
            gain,
            adc_zero,
            lead_name,
        });
    }

    Ok(RecordHeader {
        record_name,
        sampling_rate_hz,
        n_samples,
        channels,
    })
}

/// Renders a header in WFDB text form. Initial value, checksum and block
/// size are written as zero.
pub fn write_header(header: &RecordHeader) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        header.record_name,
        header.n_channels(),
        header.sampling_rate_hz,
        header.n_samples
    );
    for c in &header.channels {
        out.push_str(&format!(
            "{} {} {} 12 {} 0 0 0 {}\n",
            c.file_name,
            c.format.as_str(),
            c.gain,
            c.adc_zero,
            c.lead_name
        ));
    }
    out
}
