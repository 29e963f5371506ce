//! MIT annotation format.
//!
//! The stream is a sequence of little-endian 16-bit words: the upper 6 bits
//! hold an annotation code `A`, the lower 10 bits a field `I`. For ordinary
//! codes `I` is the sample delta from the previous annotation. Pseudo-codes
//! carry bookkeeping: `SKIP` (a 32-bit delta follows, high word first),
//! `NUM`, `SUB`, `CHN` (set a field of the next annotation) and `AUX`
//! (`I` bytes of text follow, padded to an even length). `A = 0, I = 0`
//! terminates the stream.

use super::Annotation;
use crate::{Error, Result};

const SKIP: u16 = 59;
const NUM: u16 = 60;
const SUB: u16 = 61;
const CHN: u16 = 62;
const AUX: u16 = 63;

/// Symbols for annotation codes 0..=49 (`' '` marks unassigned codes).
const SYMBOLS: [char; 50] = [
    ' ', 'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', // 0-9
    'E', 'j', '/', 'Q', '~', ' ', '|', ' ', 's', 'T', // 10-19
    '*', 'D', '"', '=', 'p', 'B', '^', 't', '+', 'u', // 20-29
    '?', '!', '[', ']', 'e', 'n', '@', 'x', 'f', '(', // 30-39
    ')', 'r', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' ', // 40-49
];

pub fn code_to_symbol(code: u8) -> Option<char> {
    SYMBOLS
        .get(usize::from(code))
        .copied()
        .filter(|&c| c != ' ')
}

pub fn symbol_to_code(symbol: char) -> Option<u8> {
    if symbol == ' ' {
        return None;
    }
    SYMBOLS.iter().position(|&c| c == symbol).map(|p| p as u8)
}

/// Parses an annotation stream, emitting one [`Annotation`] per ordinary
/// code. Pseudo-codes are consumed without being emitted. Parsing stops at
/// the terminator; bytes after it are never read.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut time: i64 = 0;
    let mut pos = 0usize;
    let word_at = |pos: usize| -> Result<u16> {
        bytes
            .get(pos..pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or(Error::Truncated("annotation stream"))
    };
    loop {
        let word = word_at(pos)?;
        let at = pos;
        pos += 2;
        let code = word >> 10;
        let field = word & 0x03FF;
        match code {
            0 if field == 0 => return Ok(out),
            SKIP => {
                let hi = word_at(pos)?;
                let lo = word_at(pos + 2)?;
                pos += 4;
                let skip = ((u32::from(hi) << 16) | u32::from(lo)) as i32;
                time = time
                    .checked_add(i64::from(skip))
                    .ok_or(Error::AnnotationOverflow(at))?;
            }
            NUM | SUB | CHN => {}
            AUX => {
                let len = usize::from(field);
                let padded = len + (len & 1);
                if bytes.len() < pos + padded {
                    return Err(Error::Truncated("annotation aux string"));
                }
                pos += padded;
            }
            _ => {
                time = time
                    .checked_add(i64::from(field))
                    .ok_or(Error::AnnotationOverflow(at))?;
                if time < 0 || time > i64::from(u32::MAX) {
                    return Err(Error::AnnotationOverflow(at));
                }
                // Codes 50..=58 are unassigned; keep them as non-beat markers.
                let symbol = code_to_symbol(code as u8).unwrap_or('?');
                out.push(Annotation {
                    sample_index: time as usize,
                    symbol,
                });
            }
        }
    }
}

/// Encodes annotations (non-decreasing indices) into an MIT annotation
/// stream, inserting `SKIP` words for deltas that do not fit in 10 bits.
pub fn encode_annotations(annotations: &[Annotation]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(annotations.len() * 2 + 2);
    let mut prev = 0usize;
    for a in annotations {
        let code = symbol_to_code(a.symbol).ok_or_else(|| {
            Error::InvalidRecord(format!("no annotation code for symbol {:?}", a.symbol))
        })?;
        let delta = a
            .sample_index
            .checked_sub(prev)
            .ok_or_else(|| Error::InvalidRecord("annotation indices decrease".into()))?;
        let field = if delta > 0x03FF {
            let d = i32::try_from(delta)
                .map_err(|_| Error::InvalidRecord("annotation delta exceeds 31 bits".into()))?
                as u32;
            out.extend_from_slice(&(SKIP << 10).to_le_bytes());
            out.extend_from_slice(&((d >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((d & 0xFFFF) as u16).to_le_bytes());
            0
        } else {
            delta as u16
        };
        out.extend_from_slice(&((u16::from(code) << 10) | field).to_le_bytes());
        prev = a.sample_index;
    }
    out.extend_from_slice(&[0, 0]);
    Ok(out)
}
