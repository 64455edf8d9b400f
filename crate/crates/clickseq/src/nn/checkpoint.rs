//! Versioned binary checkpoint container for `f32` parameter stores.
//!
//! Layout (all little-endian):
//!   magic "CSQ1" | u32 version | u64 config_digest | u64 step |
//!   u32 n_params | n_params × record
//! record:
//!   u32 name_len | name bytes | u32 rows | u32 cols |
//!   rows·cols f32 value | rows·cols f32 adam_m | rows·cols f32 adam_v

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::params::ParameterStore;
use crate::ClickseqError;

const MAGIC: &[u8; 4] = b"CSQ1";
const VERSION: u32 = 1;

/// Digest used to tie a checkpoint to the config that produced it.
pub fn config_digest(config_json: &str) -> u64 {
    crate::murmur3::murmur3_x64_128(config_json.as_bytes(), 0) as u64
}

pub fn save(
    store: &ParameterStore<f32>,
    digest: u64,
    path: &Path,
) -> Result<(), ClickseqError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&digest.to_le_bytes())?;
    w.write_all(&store.step().to_le_bytes())?;
    let names: Vec<&str> = store.names().collect();
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for name in names {
        let value = store.get(name);
        let (m, v) = store.moments(name);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.nrows() as u32).to_le_bytes())?;
        w.write_all(&(value.ncols() as u32).to_le_bytes())?;
        for arr in [value, m, v] {
            for x in arr.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint, returning the store and its config digest.
pub fn load(path: &Path) -> Result<(ParameterStore<f32>, u64), ClickseqError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ClickseqError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ClickseqError::Checkpoint(format!("unsupported version {version}")));
    }
    let digest = read_u64(&mut r)?;
    let step = read_u64(&mut r)?;
    let n_params = read_u32(&mut r)? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..n_params {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| ClickseqError::Checkpoint("non-utf8 parameter name".into()))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut data = vec![0f32; rows * cols];
            let mut buf = [0u8; 4];
            for x in data.iter_mut() {
                r.read_exact(&mut buf)?;
                *x = f32::from_le_bytes(buf);
            }
            arrays.push(
                Array2::from_shape_vec((rows, cols), data)
                    .map_err(|e| ClickseqError::Checkpoint(e.to_string()))?,
            );
        }
        let v = arrays.pop().unwrap();
        let m = arrays.pop().unwrap();
        let value = arrays.pop().unwrap();
        store.set_entry(&name, value, m, v);
    }
    store.set_step(step);
    Ok((store, digest))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ClickseqError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ClickseqError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
