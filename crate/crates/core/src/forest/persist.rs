//! Binary model artifact: magic, format version, schema digest, payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cohort::Schema;
use crate::error::{Error, Result};

use super::CausalForestModel;

const MAGIC: &[u8; 4] = b"IMPF";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &CausalForestModel, mut writer: W) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    let digest = model.schema_digest().as_bytes();
    writer.write_all(&(digest.len() as u32).to_le_bytes())?;
    writer.write_all(digest)?;
    bincode::serialize_into(&mut writer, model)
        .map_err(|e| Error::Artifact(format!("cannot encode model: {e}")))?;
    writer.flush()?;
    Ok(())
}

/// Decode a model. When `expected` is given, its digest must match the
/// model's training schema.
pub fn read_model<R: Read>(mut reader: R, expected: Option<&Schema>) -> Result<CausalForestModel> {
    let mut head = [0u8; 8];
    reader
        .read_exact(&mut head)
        .map_err(|_| Error::Artifact("truncated model header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Artifact("not a model artifact".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported model format version {version}"
        )));
    }
    let mut len = [0u8; 4];
    reader
        .read_exact(&mut len)
        .map_err(|_| Error::Artifact("truncated model header".into()))?;
    let mut digest = vec![0u8; u32::from_le_bytes(len) as usize];
    reader
        .read_exact(&mut digest)
        .map_err(|_| Error::Artifact("truncated model header".into()))?;
    let digest = String::from_utf8(digest).map_err(|_| Error::Artifact("bad schema digest".into()))?;
    if let Some(schema) = expected {
        if schema.digest() != digest {
            return Err(Error::Schema(
                "model was trained on a different feature schema".into(),
            ));
        }
    }
    let model: CausalForestModel = bincode::deserialize_from(reader)
        .map_err(|e| Error::Artifact(format!("cannot decode model: {e}")))?;
    if model.schema_digest() != digest || model.schema().digest() != digest {
        return Err(Error::Artifact("schema digest does not match model payload".into()));
    }
    Ok(model)
}

pub fn save_model(model: &CausalForestModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>, expected: Option<&Schema>) -> Result<CausalForestModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    read_model(BufReader::new(File::open(path)?), expected)
}
