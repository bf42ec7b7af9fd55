//! Binary checkpoint: magic, format version, activation, layer widths and the
//! parameter vector, all little-endian.

use std::io::{Read, Write};

use super::{Activation, OccupancyModel};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NEEDROP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &OccupancyModel, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let (tag, beta) = match model.activation() {
        Activation::Softplus { beta } => (0u8, beta),
        Activation::Tanh => (1u8, 0.0),
    };
    w.write_all(&[tag])?;
    w.write_all(&beta.to_le_bytes())?;
    w.write_all(&(model.widths().len() as u32).to_le_bytes())?;
    for &width in model.widths() {
        w.write_all(&(width as u64).to_le_bytes())?;
    }
    w.write_all(&(model.num_params() as u64).to_le_bytes())?;
    for p in model.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<OccupancyModel> {
    if &take::<8, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let [tag] = take::<1, _>(&mut r)?;
    let beta = f64::from_le_bytes(take(&mut r)?);
    let activation = match tag {
        0 => Activation::Softplus { beta },
        1 => Activation::Tanh,
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let layers = u32::from_le_bytes(take(&mut r)?) as usize;
    if layers > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let widths = (0..layers)
        .map(|_| Ok(u64::from_le_bytes(take(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {count} parameters, found {} bytes",
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    OccupancyModel::from_parts(widths, activation, params).map_err(|e| Error::Checkpoint(e.to_string()))
}
