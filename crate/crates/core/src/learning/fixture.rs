//! Flat binary fixture format for client datasets.
//!
//! ```text
//! magic   b"SGFD"
//! version u32 (1)
//! n       u32   clients
//! m       u32   samples per client
//! p       u32   features
//! then per client: m*p feature values, then m labels
//! ```
//!
//! All integers and values are little-endian; values are 32-bit floats.
//! Class labels are stored as exact float integers. Generation parameters
//! travel in a JSON sidecar.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::data::{ClientData, DataSpec, FederatedData, Labels};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SGFD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Classes,
    Targets,
}

pub fn encode_clients(clients: &[ClientData]) -> Result<Vec<u8>> {
    let first = clients.first().ok_or_else(|| Error::Format("no clients to encode".into()))?;
    let (m, p) = (first.len(), first.num_features);
    if clients.iter().any(|c| c.len() != m || c.num_features != p) {
        return Err(Error::Format("all clients must share sample count and feature width".into()));
    }
    let mut out = Vec::with_capacity(20 + clients.len() * m * (p + 1) * 4);
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, clients.len() as u32, m as u32, p as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in clients {
        for &x in &c.features {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        match &c.labels {
            Labels::Classes(ys) => ys.iter().for_each(|&y| out.extend_from_slice(&(y as f32).to_le_bytes())),
            Labels::Targets(ys) => ys.iter().for_each(|&y| out.extend_from_slice(&(y as f32).to_le_bytes())),
        }
    }
    Ok(out)
}

pub fn decode_clients(mut bytes: &[u8], kind: LabelKind, first_id: u32) -> Result<Vec<ClientData>> {
    let mut word = [0u8; 4];
    let mut read_u32 = |b: &mut &[u8]| -> Result<u32> {
        b.read_exact(&mut word).map_err(|_| Error::Format("truncated header".into()))?;
        Ok(u32::from_le_bytes(word))
    };
    let mut magic = [0u8; 4];
    bytes.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut bytes)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut bytes)? as usize;
    let m = read_u32(&mut bytes)? as usize;
    let p = read_u32(&mut bytes)? as usize;
    let expected = n * m * (p + 1) * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!("payload is {} bytes, header implies {expected}", bytes.len())));
    }
    let mut values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut clients = Vec::with_capacity(n);
    for i in 0..n {
        let features: Vec<f64> = values.by_ref().take(m * p).collect();
        let raw: Vec<f64> = values.by_ref().take(m).collect();
        let labels = match kind {
            LabelKind::Targets => Labels::Targets(raw),
            LabelKind::Classes => Labels::Classes(
                raw.into_iter()
                    .map(|y| {
                        if y >= 0.0 && y.fract() == 0.0 {
                            Ok(y as u32)
                        } else {
                            Err(Error::Format(format!("invalid class label {y}")))
                        }
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        clients.push(ClientData {
            client_id: first_id.wrapping_add(i as u32),
            features,
            num_features: p,
            labels,
        });
    }
    Ok(clients)
}

fn label_kind(spec: &DataSpec) -> LabelKind {
    if spec.kind == super::TaskKind::Quadratic {
        LabelKind::Targets
    } else {
        LabelKind::Classes
    }
}

/// Writes `train.bin`, `test.bin`, optional `client_test.bin` and the
/// `meta.json` sidecar into `dir`.
pub fn save_dataset(dir: &Path, spec: &DataSpec, data: &FederatedData) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join("train.bin"))?.write_all(&encode_clients(&data.clients)?)?;
    fs::File::create(dir.join("test.bin"))?.write_all(&encode_clients(std::slice::from_ref(&data.test))?)?;
    if let Some(shards) = &data.client_tests {
        fs::File::create(dir.join("client_test.bin"))?.write_all(&encode_clients(shards)?)?;
    }
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(DataSpec, FederatedData)> {
    let spec: DataSpec = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let kind = label_kind(&spec);
    let clients = decode_clients(&fs::read(dir.join("train.bin"))?, kind, 0)?;
    let test = decode_clients(&fs::read(dir.join("test.bin"))?, kind, super::data::TEST_SET_ID)?
        .pop()
        .ok_or_else(|| Error::Format("empty test file".into()))?;
    let shards = dir.join("client_test.bin");
    let client_tests = if shards.exists() {
        Some(decode_clients(&fs::read(shards)?, kind, 0)?)
    } else {
        None
    };
    Ok((spec, FederatedData { clients, test, client_tests }))
}
