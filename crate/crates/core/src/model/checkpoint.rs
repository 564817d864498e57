//! Checkpoint format: the magic line `ZOLE-CHECKPOINT v1`, one line of JSON
//! holding the [`Layout`], then the parameters as raw little-endian f64.

use std::path::Path;

use super::{Layout, ModelParams};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "ZOLE-CHECKPOINT v1";

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let mut out = format!("{CHECKPOINT_MAGIC}\n").into_bytes();
    out.extend(serde_json::to_vec(params.layout())?);
    out.push(b'\n');
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let bad = |reason: String| Error::format("checkpoint", path, reason);
    let magic = format!("{CHECKPOINT_MAGIC}\n");
    let rest = bytes
        .strip_prefix(magic.as_bytes())
        .ok_or_else(|| bad("missing magic line".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing layout line".into()))?;
    let layout: Layout = serde_json::from_slice(&rest[..nl]).map_err(|e| bad(format!("layout: {e}")))?;
    let payload = &rest[nl + 1..];
    if payload.len() != layout.len() * 8 {
        return Err(bad(format!(
            "payload has {} bytes, layout needs {}",
            payload.len(),
            layout.len() * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    ModelParams::new(layout, values)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
