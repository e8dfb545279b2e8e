//! Versioned binary files for trained models.
//!
//! Layout: magic `PRFK`, little-endian `u32` format version, `u32` length of
//! the kind tag, the UTF-8 kind tag (`gppl`, `directranker` or `stack`), then
//! the bincode-encoded model.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::corpus::{read_file, write_file};
use crate::directranker::RankerModel;
use crate::error::{Error, Result};
use crate::gppl::GpplPosterior;
use crate::stacking::StackModel;

const MAGIC: &[u8; 4] = b"PRFK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum SavedModel {
    Gppl(GpplPosterior),
    DirectRanker(RankerModel),
    Stack(StackModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Gppl(_) => "gppl",
            SavedModel::DirectRanker(_) => "directranker",
            SavedModel::Stack(_) => "stack",
        }
    }
}

fn encode<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    bincode::serialize(v).map_err(|e| Error::ModelFile(format!("encoding failed: {e}")))
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| Error::ModelFile(format!("corrupt model payload: {e}")))
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let payload = match model {
        SavedModel::Gppl(m) => encode(m)?,
        SavedModel::DirectRanker(m) => encode(m)?,
        SavedModel::Stack(m) => encode(m)?,
    };
    let kind = model.kind().as_bytes();
    let mut out = Vec::with_capacity(12 + kind.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(&payload);
    write_file(path.as_ref(), &out)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let bytes = read_file(path.as_ref())?;
    let header = |range: std::ops::Range<usize>| {
        bytes
            .get(range)
            .ok_or_else(|| Error::ModelFile("truncated model header".into()))
    };
    if header(0..4)? != MAGIC {
        return Err(Error::ModelFile(format!(
            "{} is not a model file",
            path.as_ref().display()
        )));
    }
    let word = |at: usize| -> Result<u32> {
        let b = header(at..at + 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let version = word(4)?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind_len = word(8)? as usize;
    let kind = std::str::from_utf8(header(12..12 + kind_len)?)
        .map_err(|_| Error::ModelFile("model kind is not UTF-8".into()))?;
    let payload = &bytes[12 + kind_len..];
    match kind {
        "gppl" => Ok(SavedModel::Gppl(decode(payload)?)),
        "directranker" => Ok(SavedModel::DirectRanker(decode(payload)?)),
        "stack" => Ok(SavedModel::Stack(decode(payload)?)),
        other => Err(Error::ModelFile(format!("unknown model kind {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directranker::RankerConfig;

    #[test]
    fn ranker_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RankerConfig {
            hidden_dims: vec![5, 2],
            ..RankerConfig::default()
        };
        let m = RankerModel::init(3, None, &cfg).unwrap();
        let p = dir.path().join("m.bin");
        save_model(&SavedModel::DirectRanker(m.clone()), &p).unwrap();
        match load_model(&p).unwrap() {
            SavedModel::DirectRanker(back) => assert_eq!(back, m),
            other => panic!("wrong kind {}", other.kind()),
        }
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"hello world, not a model").unwrap();
        assert!(matches!(load_model(&p), Err(Error::ModelFile(_))));
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&99u32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        let err = load_model(&p).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
        std::fs::write(&p, b"PR").unwrap();
        assert!(load_model(&p).is_err());
    }
}
