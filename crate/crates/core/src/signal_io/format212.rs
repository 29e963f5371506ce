//! Format 212: pairs of 12-bit two's complement samples packed into three
//! bytes. Samples are stored frame by frame, channels interleaved.

use super::RecordHeader;
use crate::{Error, Result};

#[inline]
fn sign_extend_12(v: u16) -> i16 {
    ((v << 4) as i16) >> 4
}

/// Unpacks a byte stream into a flat, interleaved sample sequence.
///
/// A trailing two-byte group holds a single sample, as written by WFDB for an
/// odd total sample count.
pub fn unpack_212(bytes: &[u8]) -> Result<Vec<i16>> {
    let mut out = Vec::with_capacity(bytes.len() / 3 * 2 + 1);
    let mut chunks = bytes.chunks_exact(3);
    for g in &mut chunks {
        let (b0, b1, b2) = (u16::from(g[0]), u16::from(g[1]), u16::from(g[2]));
        out.push(sign_extend_12(b0 | ((b1 & 0x0F) << 8)));
        out.push(sign_extend_12(b2 | ((b1 >> 4) << 8)));
    }
    match chunks.remainder() {
        [] => {}
        [b0, b1] => out.push(sign_extend_12(
            u16::from(*b0) | ((u16::from(*b1) & 0x0F) << 8),
        )),
        _ => return Err(Error::Truncated("format-212 byte group")),
    }
    Ok(out)
}

/// Decodes a format-212 signal file into one ADC sequence per channel.
///
/// The header fixes the channel count; when it also declares a sample count
/// the byte stream must hold exactly that many frames.
pub fn decode_format212(bytes: &[u8], header: &RecordHeader) -> Result<Vec<Vec<i16>>> {
    let n_ch = header.n_channels();
    if n_ch == 0 {
        return Err(Error::ZeroChannels);
    }
    let flat = unpack_212(bytes)?;
    if header.n_samples > 0 {
        let needed = header.n_samples * n_ch;
        if flat.len() < needed {
            return Err(Error::Truncated("format-212 signal"));
        }
        // An odd sample total leaves one padding sample in the last group.
        let padding_ok = flat.len() == needed || (needed % 2 == 1 && flat.len() == needed + 1);
        if !padding_ok {
            return Err(Error::LengthMismatch {
                expected: header.n_samples,
                actual: flat.len() / n_ch,
            });
        }
    } else if flat.len() % n_ch != 0 {
        return Err(Error::Truncated("format-212 frame"));
    }
    let n = if header.n_samples > 0 {
        header.n_samples
    } else {
        flat.len() / n_ch
    };
    let mut channels = vec![Vec::with_capacity(n); n_ch];
    for frame in flat[..n * n_ch].chunks_exact(n_ch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Ok(channels)
}

fn packed_len(n_samples: usize) -> usize {
    n_samples / 2 * 3 + if n_samples % 2 == 1 { 2 } else { 0 }
}

/// Packs equal-length channels into format 212. Samples must fit in 12 bits.
pub fn encode_format212(channels: &[Vec<i16>]) -> Result<Vec<u8>> {
    let n = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidRecord("channels differ in length".into()));
    }
    let mut flat = Vec::with_capacity(n * channels.len());
    for i in 0..n {
        for c in channels {
            let v = c[i];
            if !(-2048..=2047).contains(&v) {
                return Err(Error::InvalidRecord(format!("sample {v} exceeds 12 bits")));
            }
            flat.push((v as u16) & 0x0FFF);
        }
    }
    let mut out = Vec::with_capacity(packed_len(flat.len()));
    let mut pairs = flat.chunks_exact(2);
    for p in &mut pairs {
        out.push((p[0] & 0xFF) as u8);
        out.push(((p[0] >> 8) | ((p[1] >> 8) << 4)) as u8);
        out.push((p[1] & 0xFF) as u8);
    }
    if let [last] = pairs.remainder() {
        out.push((last & 0xFF) as u8);
        out.push((last >> 8) as u8);
    }
    Ok(out)
}
