//! Beat container layout:
//!
//! ```text
//! 8 bytes   magic "ECGBEAT1"
//! u64 LE    length L of the JSON index
//! L bytes   JSON index {"window_len", "count", "metadata", "beats": [{record, sample, label, condition}]}
//! count * (window_len + 2) f32 LE: each beat's window followed by its two RR values
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BeatSample, BeatSource, NoiseCondition, WINDOW_LEN};
use crate::signal_io::BeatClass;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ECGBEAT1";

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    record: String,
    sample: usize,
    label: BeatClass,
    condition: NoiseCondition,
}

#[derive(Serialize, Deserialize)]
struct Index {
    window_len: usize,
    count: usize,
    #[serde(default)]
    metadata: serde_json::Value,
    beats: Vec<IndexEntry>,
}

pub fn write_beats(path: &Path, beats: &[BeatSample], metadata: serde_json::Value) -> Result<()> {
    let index = Index {
        window_len: WINDOW_LEN,
        count: beats.len(),
        metadata,
        beats: beats
            .iter()
            .map(|b| IndexEntry {
                record: b.source.record.clone(),
                sample: b.source.sample_index,
                label: b.label,
                condition: b.condition,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&index)?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for b in beats {
        for v in b.window.iter().chain(&b.rr_norm) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_beats(path: &Path) -> Result<(Vec<BeatSample>, serde_json::Value)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::UnsupportedFormat("not a beat container".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or(Error::Truncated("beat index"))?;
    let index: Index = serde_json::from_slice(json)?;
    if index.window_len != WINDOW_LEN || index.count != index.beats.len() {
        return Err(Error::Shape(format!(
            "container holds {} beats of {} samples",
            index.count, index.window_len
        )));
    }
    let stride = WINDOW_LEN + 2;
    let blob = &bytes[16 + len..];
    if blob.len() != index.count * stride * 4 {
        return Err(Error::LengthMismatch {
            expected: index.count * stride * 4,
            actual: blob.len(),
        });
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let beats = index
        .beats
        .into_iter()
        .zip(floats.chunks_exact(stride))
        .map(|(e, f)| {
            BeatSample::new(
                f[..WINDOW_LEN].to_vec(),
                [f[WINDOW_LEN], f[WINDOW_LEN + 1]],
                e.label,
                BeatSource {
                    record: e.record,
                    sample_index: e.sample,
                },
                e.condition,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((beats, index.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("beats.bin");
        let beats: Vec<BeatSample> = (0..5)
            .map(|i| {
                BeatSample::new(
                    (0..WINDOW_LEN)
                        .map(|j| (i * 1000 + j) as f32 * 0.001)
                        .collect(),
                    [-2.0, 0.5 * i as f32 - 1.0],
                    BeatClass::from_index(i).unwrap(),
                    BeatSource {
                        record: format!("r{i}"),
                        sample_index: 100 + i,
                    },
                    NoiseCondition::ALL[i % 4],
                )
                .unwrap()
            })
            .collect();
        let meta = serde_json::json!({"seed": 7});
        write_beats(&path, &beats, meta.clone()).unwrap();
        let (back, m) = read_beats(&path).unwrap();
        assert_eq!(back, beats);
        assert_eq!(m, meta);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"hello").unwrap();
        assert!(read_beats(&path).is_err());
        let beats = vec![BeatSample::new(
            vec![0.0; WINDOW_LEN],
            [0.0, 0.0],
            BeatClass::N,
            BeatSource {
                record: "a".into(),
                sample_index: 1,
            },
            NoiseCondition::Noiseless,
        )
        .unwrap()];
        write_beats(&path, &beats, serde_json::Value::Null).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_beats(&path),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
