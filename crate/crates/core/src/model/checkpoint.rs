//! Checkpoint file format.
//!
//! Layout (all integers little-endian):
//! ```text
//! "VAPB" | u32 version | u32 config_len | config JSON |
//! u32 n_tensors | { u16 name_len | name | u8 ndim=2 | u32 rows | u32 cols | f32 data } *
//! ```
//! Parameters are written in registration order and stored as exact f32
//! bits, so a load reproduces forward outputs bit-identically.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{ModelConfig, ModelError, VapModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VAPB";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn store_checkpoint(model: &VapModel<f32>, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let config =
        serde_json::to_vec(model.config()).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&(model.params().len() as u32).to_le_bytes())?;
    for (name, value) in model.params().iter() {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[2u8])?;
        w.write_all(&(value.nrows() as u32).to_le_bytes())?;
        w.write_all(&(value.ncols() as u32).to_le_bytes())?;
        for &v in value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VapModel<f32>, ModelError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or_magic(&mut r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch(version));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_buf = vec![0u8; config_len];
    r.read_exact(&mut config_buf).map_err(truncated)?;
    let config: ModelConfig = serde_json::from_slice(&config_buf)
        .map_err(|e| ModelError::InvalidConfig(format!("checkpoint config: {e}")))?;
    let mut model = VapModel::<f32>::zeroed(config)?;

    let n_tensors = read_u32(&mut r)? as usize;
    let mut filled = vec![false; model.params().len()];
    for _ in 0..n_tensors {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(truncated)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| ModelError::TensorShape("non-utf8 tensor name".into()))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim).map_err(truncated)?;
        if ndim[0] != 2 {
            return Err(ModelError::TensorShape(format!("{name}: ndim {}", ndim[0])));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0f32; rows * cols];
        let mut buf = [0u8; 4];
        for slot in data.iter_mut() {
            r.read_exact(&mut buf).map_err(truncated)?;
            *slot = f32::from_le_bytes(buf);
        }
        let pid = model
            .params()
            .lookup(&name)
            .ok_or_else(|| ModelError::UnexpectedTensor(name.clone()))?;
        let expect = model.params().value(pid).dim();
        if expect != (rows, cols) {
            return Err(ModelError::TensorShape(format!(
                "{name}: {rows}x{cols}, expected {}x{}",
                expect.0, expect.1
            )));
        }
        *model.params_mut().value_mut(pid) =
            Array2::from_shape_vec((rows, cols), data).expect("shape checked");
        filled[pid] = true;
    }
    if let Some(pid) = filled.iter().position(|&f| !f) {
        return Err(ModelError::MissingTensor(model.params().name(pid).to_string()));
    }
    Ok(model)
}

/// Load a checkpoint and require a backchannel head compatible with `task`
/// (2 classes for timing, 3 for type).
pub fn load_for_task(path: &Path, bc_classes: usize) -> Result<VapModel<f32>, ModelError> {
    let model = load_checkpoint(path)?;
    if model.config().bc_classes != bc_classes {
        return Err(ModelError::ConfigMismatch(format!(
            "checkpoint has bc_classes={}, task needs {bc_classes}",
            model.config().bc_classes
        )));
    }
    Ok(model)
}

fn truncated(e: std::io::Error) -> ModelError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        ModelError::MissingTensor("file truncated".into())
    } else {
        ModelError::Io(e)
    }
}

fn read_exact_or_magic(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ModelError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelError::BadMagic
        } else {
            ModelError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(r: &mut impl Read) -> Result<u16, ModelError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u16::from_le_bytes(buf))
}
