//! Binary checkpoint: magic `MCL1`, `u32` version, `u64` parameter count,
//! then per parameter a `u32` name length, UTF-8 name bytes, `u64` rows,
//! `u64` cols and row-major `f64` data. All integers little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::scalar::Scalar;

use super::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MCL1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("parameter name is not UTF-8")]
    BadName,
    #[error("implausible tensor shape {rows}x{cols}")]
    BadShape { rows: u64, cols: u64 },
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ParamStore<T>, mut out: W) -> Result<(), CheckpointError> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rows() as u64).to_le_bytes())?;
        out.write_all(&(t.cols() as u64).to_le_bytes())?;
        for &x in t.data() {
            out.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<ParamStore<T>, CheckpointError> {
    let magic = read_array::<4>(&mut input)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = u64::from_le_bytes(read_array(&mut input)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::BadName)?;
        let rows = u64::from_le_bytes(read_array(&mut input)?);
        let cols = u64::from_le_bytes(read_array(&mut input)?);
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n < (1 << 34))
            .ok_or(CheckpointError::BadShape { rows, cols })?;
        let mut data = Vec::with_capacity(n as usize);
        for _ in 0..n {
            data.push(T::of(f64::from_le_bytes(read_array(&mut input)?)));
        }
        let t = Tensor::from_vec(rows as usize, cols as usize, data)
            .map_err(|_| CheckpointError::BadShape { rows, cols })?;
        store.insert(name, t);
    }
    Ok(store)
}
