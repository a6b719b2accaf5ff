//! Parameter checkpoints: a JSON config header followed by length-prefixed
//! named matrix blocks of little-endian f64. Loading rejects any config
//! mismatch so weights can never be silently applied to the wrong
//! architecture.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HgError, Result};
use crate::models::{Model, ModelConfig};
use crate::tensor::{Matrix, ParamSet};

const MAGIC: &[u8; 8] = b"HACKPT01";

#[derive(Serialize, Deserialize, PartialEq)]
struct Header {
    config: ModelConfig,
    in_dim: usize,
    out_dim: usize,
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    let header = Header {
        config: model.config.clone(),
        in_dim: model.in_dim,
        out_dim: model.out_dim,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| HgError::data(format!("config serialization failed: {e}")))?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for (name, m) in model.params.iter() {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads parameters for the expected config; errors when the stored header
/// disagrees on the architecture or dimensions.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
    in_dim: usize,
    out_dim: usize,
) -> Result<Model> {
    let file = File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HgError::data("not a checkpoint file".to_string()));
    }
    let json_len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| HgError::data(format!("corrupt checkpoint header: {e}")))?;
    let wanted = Header {
        config: expected.clone(),
        in_dim,
        out_dim,
    };
    if header != wanted {
        return Err(HgError::config(
            "checkpoint config does not match the requested model".to_string(),
        ));
    }
    let num_blocks = read_u32(&mut r)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..num_blocks {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| HgError::data("checkpoint block name is not UTF-8".to_string()))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0.0; rows * cols];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        params.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    Ok(Model {
        config: header.config,
        in_dim: header.in_dim,
        out_dim: header.out_dim,
        params,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Arch, ModelConfig};
    use crate::rng::stream;

    #[test]
    fn round_trip_and_mismatch_rejection() {
        let mut rng = stream(1, "ckpt");
        let cfg = ModelConfig {
            arch: Arch::Ghc,
            depth: 1,
            hidden: 4,
            mixing: 3,
            ..Default::default()
        };
        let model = Model::init(cfg.clone(), 5, 3, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();

        let back = load_checkpoint(&path, &cfg, 5, 3).unwrap();
        assert_eq!(back.params.len(), model.params.len());
        for (name, m) in model.params.iter() {
            assert_eq!(back.params.get(name).unwrap().data(), m.data());
        }

        let other = ModelConfig {
            hidden: 8,
            ..cfg.clone()
        };
        assert!(load_checkpoint(&path, &other, 5, 3).is_err());
        assert!(load_checkpoint(&path, &cfg, 6, 3).is_err());
    }
}
