//! Model files: magic `VFMD`, little-endian.
//!
//! ```text
//! magic[4] version:u32
//! directions octaves grid_resolution grid_channels hidden view_channels head_depth : u32
//! loss weights (visibility transfer occupancy albedo) : f64
//! seed:u64  provenance_len:u32 provenance[utf-8]  param_count:u64  params : f64
//! ```

use std::path::Path;

use super::train::LossWeights;
use super::{Architecture, FieldModel, Layout, HEAD_DEPTH};
use crate::oracle::Reader;
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"VFMD";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &FieldModel) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::with_capacity(96 + model.provenance.len() + 8 * model.params.len());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [a.directions, a.octaves, a.grid_resolution, a.grid_channels, a.hidden, a.view_channels, HEAD_DEPTH] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for w in model.loss_weights.as_array() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(model.provenance.len() as u32).to_le_bytes());
    out.extend_from_slice(model.provenance.as_bytes());
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<FieldModel> {
    let mut r = Reader { data: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: MODEL_MAGIC,
            found: magic,
        });
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let arch = Architecture {
        directions: dims[0],
        octaves: dims[1],
        grid_resolution: dims[2],
        grid_channels: dims[3],
        hidden: dims[4],
        view_channels: dims[5],
    };
    if dims[6] != HEAD_DEPTH {
        return Err(Error::Config(format!("model has {}-layer heads, expected {HEAD_DEPTH}", dims[6])));
    }
    arch.validate()?;
    let loss_weights = LossWeights {
        visibility: r.f64()?,
        transfer: r.f64()?,
        occupancy: r.f64()?,
        albedo: r.f64()?,
    };
    let seed = r.u64()?;
    let len = r.u32()? as usize;
    let at = r.pos;
    let provenance = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::parse_byte(at, "provenance is not UTF-8"))?;
    let layout = Layout::new(&arch);
    let at = r.pos;
    let count = r.u64()?;
    if count != layout.total as u64 {
        return Err(Error::Config(format!(
            "header declares {count} parameters but the architecture needs {} (byte offset {at})",
            layout.total
        )));
    }
    let raw = r.take(layout.total * 8)?;
    let params = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    if r.pos != bytes.len() {
        return Err(Error::parse_byte(r.pos, "trailing bytes after the parameters"));
    }
    Ok(FieldModel {
        arch,
        layout,
        params,
        seed,
        loss_weights,
        provenance,
    })
}

pub fn save_model(model: &FieldModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

/// Loads a model; with `directions` set, also checks it predicts that many directions.
pub fn load_model(path: impl AsRef<Path>, directions: Option<usize>) -> Result<FieldModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = decode_model(&bytes)?;
    if let Some(n) = directions {
        model.check_directions(n)?;
    }
    Ok(model)
}
