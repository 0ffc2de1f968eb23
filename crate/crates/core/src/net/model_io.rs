//! Binary model files: magic "BWNN", version, JSON header, then every
//! parameter as little-endian f64 in canonical flat order. Round trips
//! are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forward::check_params;
use super::{NetError, NetworkArchitecture, ParameterSet};

pub const MODEL_MAGIC: &[u8; 4] = b"BWNN";
pub const MODEL_VERSION: u16 = 1;

/// Pointer to a sidecar file plus its content hash, so a loaded model can
/// verify it is paired with the exact artifact it was trained against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub architecture: NetworkArchitecture,
    /// Channel names in tensor order, recorded so a model is
    /// self-describing about its input layout.
    pub channel_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<StatsRef>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn save_model(
    path: &Path,
    header: &ModelHeader,
    params: &ParameterSet,
) -> Result<(), NetError> {
    check_params(&header.architecture, params)?;
    let header_json = serde_json::to_vec(header)?;
    if header_json.len() > u32::MAX as usize {
        return Err(NetError::Model("header too large".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    w.write_all(&(params.flat_len() as u64).to_le_bytes())?;
    let mut fail = Ok(());
    params.visit_flat(|_, v| {
        if fail.is_ok() {
            fail = w.write_all(&v.to_bits().to_le_bytes());
        }
    });
    fail?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ModelHeader, ParameterSet), NetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NetError::Model("file too short for magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(NetError::Model(format!("bad magic {magic:?}")));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)
        .map_err(|_| NetError::Model("file too short for version".into()))?;
    let version = u16::from_le_bytes(buf2);
    if version != MODEL_VERSION {
        return Err(NetError::Model(format!(
            "unsupported version {version} (expected {MODEL_VERSION})"
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| NetError::Model("file too short for header length".into()))?;
    let header_len = u32::from_le_bytes(buf4) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)
        .map_err(|_| NetError::Model("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(&header_json)?;

    let template = ParameterSet::zeros(&header.architecture)?;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)
        .map_err(|_| NetError::Model("file too short for parameter count".into()))?;
    let count = u64::from_le_bytes(buf8) as usize;
    if count != template.flat_len() {
        return Err(NetError::Model(format!(
            "parameter count {count} does not match architecture ({})",
            template.flat_len()
        )));
    }
    let mut flat = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf8)
            .map_err(|_| NetError::Model("truncated parameter blob".into()))?;
        flat.push(f64::from_bits(u64::from_le_bytes(buf8)));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(NetError::Model("trailing bytes after parameter blob".into()));
    }
    let params = ParameterSet::from_flat(&template, &flat)?;
    Ok((header, params))
}
