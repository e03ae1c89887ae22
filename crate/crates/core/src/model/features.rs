//! External per-channel feature files (precomputed encoder outputs).
//!
//! Layout: `"VAPF" | u32 T | u32 D | u32 frame_rate | row-major f32 LE`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::ModelError;

const MAGIC: &[u8; 4] = b"VAPF";

pub fn write_feature_file(
    path: &Path,
    feats: &Array2<f32>,
    frame_rate: u32,
) -> Result<(), ModelError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(feats.nrows() as u32).to_le_bytes())?;
    w.write_all(&(feats.ncols() as u32).to_le_bytes())?;
    w.write_all(&frame_rate.to_le_bytes())?;
    for &v in feats.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<(Array2<f32>, u32), ModelError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| ModelError::BadMagic)?;
    if &magic != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut buf = [0u8; 4];
    let mut word = |r: &mut BufReader<std::fs::File>| -> Result<u32, ModelError> {
        r.read_exact(&mut buf)
            .map_err(|_| ModelError::MissingTensor("feature header truncated".into()))?;
        Ok(u32::from_le_bytes(buf))
    };
    let t = word(&mut r)? as usize;
    let d = word(&mut r)? as usize;
    let frame_rate = word(&mut r)?;
    let mut data = vec![0f32; t * d];
    let mut fbuf = [0u8; 4];
    for slot in data.iter_mut() {
        r.read_exact(&mut fbuf)
            .map_err(|_| ModelError::MissingTensor("feature data truncated".into()))?;
        *slot = f32::from_le_bytes(fbuf);
    }
    Ok((Array2::from_shape_vec((t, d), data).expect("header shape"), frame_rate))
}
