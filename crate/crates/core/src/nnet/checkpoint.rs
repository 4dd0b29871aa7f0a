//! Binary model checkpoints.
//!
//! Layout: magic `WSCK`, format version (u32 LE), header length (u32 LE),
//! a JSON-encoded [`ModelConfig`] of exactly that length, then every
//! parameter as f32 LE in [`Model::flatten_params`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Model, ModelConfig};

const MAGIC: &[u8; 4] = b"WSCK";
const VERSION: u32 = 1;

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&model.config)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for v in model.flatten_params() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model<f32>> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    r.read_exact(&mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let config: ModelConfig = serde_json::from_slice(&header)?;

    let mut model = Model::<f32>::zeros(config)?;
    let n = model.num_params();
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != n * 4 {
        return Err(Error::Data(format!(
            "{}: parameter blob is {} bytes, model needs {}",
            path.display(),
            blob.len(),
            n * 4
        )));
    }
    let flat: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    model.load_flat_params(&flat)?;
    Ok(model)
}
