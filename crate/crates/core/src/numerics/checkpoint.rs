//! Flat binary checkpoint format.
//!
//! Layout: magic `"SIDF"`, version u32, then one record per parameter:
//! name length (u32), name bytes, shape rank (u32), dims (u32 each), raw
//! f32 data. All integers and floats little-endian. Records run to EOF.

use super::param::ParamStore;
use super::tensor::Tensor;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"SIDF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic (not a SIDF checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameter set mismatch: {0}")]
    NameMismatch(String),
}

/// Writes every parameter of `store`, in insertion order.
pub fn save(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let t = store.value(id);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads all records as (name, tensor) pairs in file order.
pub fn load_entries(path: &Path) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut entries = Vec::new();
    loop {
        let name_len = match read_u32_opt(&mut r)? {
            Some(n) => n as usize,
            None => break,
        };
        if name_len > 4096 {
            return Err(CheckpointError::Corrupt(format!("name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| CheckpointError::Corrupt("truncated name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Corrupt("non-utf8 name".into()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("rank {rank} for {name}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut buf = vec![0u8; numel * 4];
        r.read_exact(&mut buf)
            .map_err(|_| CheckpointError::Corrupt(format!("truncated data for {name}")))?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, Tensor::new(shape, data)));
    }
    Ok(entries)
}

/// Loads a checkpoint into a fresh store (names in file order).
pub fn load(path: &Path) -> Result<ParamStore, CheckpointError> {
    let mut store = ParamStore::new();
    for (name, t) in load_entries(path)? {
        store.add(&name, t);
    }
    Ok(store)
}

/// Copies checkpoint values into an existing store by name.
///
/// Every store parameter must be present in the file with a matching shape;
/// extra file entries are an error too, so layout drift is caught early.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let entries = load_entries(path)?;
    if entries.len() != store.len() {
        return Err(CheckpointError::NameMismatch(format!(
            "checkpoint has {} parameters, store expects {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, t) in entries {
        let id = store
            .id(&name)
            .ok_or_else(|| CheckpointError::NameMismatch(format!("unexpected parameter {name}")))?;
        if store.value(id).shape() != t.shape() {
            return Err(CheckpointError::NameMismatch(format!(
                "shape mismatch for {name}: {:?} vs {:?}",
                store.value(id).shape(),
                t.shape()
            )));
        }
        *store.value_mut(id) = t;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| CheckpointError::Corrupt("truncated u32".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u32_opt<R: Read>(r: &mut R) -> Result<Option<u32>, CheckpointError> {
    let mut buf = [0u8; 4];
    match r.read_exact(&mut buf) {
        Ok(()) => Ok(Some(u32::from_le_bytes(buf))),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}
