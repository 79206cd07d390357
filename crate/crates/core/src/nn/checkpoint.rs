//! Versioned binary checkpoint: config echo, parameters, optimizer state and
//! RNG state. Round trips are bitwise-lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, AdamState};
use super::model::{ModelConfig, SegModel};
use super::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSEGCKP\x01";

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Serializable training-resume state around a model.
pub struct Checkpoint<R: Real> {
    pub model: SegModel<R>,
    pub adam: AdamState<R>,
    pub rng: ChaCha8Rng,
    /// Opaque run-config echo (JSON) stored for reproducibility.
    pub config_echo: String,
}

fn write_array<R: Real>(w: &mut impl Write, a: &Array2<R>) -> Result<()> {
    w.write_u64::<LittleEndian>(a.nrows() as u64)?;
    w.write_u64::<LittleEndian>(a.ncols() as u64)?;
    match R::TAG {
        64 => {
            for &v in a.as_standard_layout().iter() {
                w.write_f64::<LittleEndian>(v.to_f64())?;
            }
        }
        _ => {
            for &v in a.as_standard_layout().iter() {
                w.write_f32::<LittleEndian>(v.to_f64() as f32)?;
            }
        }
    }
    Ok(())
}

fn read_array<R: Real>(r: &mut impl Read) -> Result<Array2<R>> {
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    match R::TAG {
        64 => {
            for _ in 0..rows * cols {
                data.push(R::from_f64(r.read_f64::<LittleEndian>()?));
            }
        }
        _ => {
            for _ in 0..rows * cols {
                data.push(R::from_f64(r.read_f32::<LittleEndian>()? as f64));
            }
        }
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| err(e.to_string()))
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| err(e.to_string()))
}

pub fn save<R: Real>(path: &Path, ckpt: &Checkpoint<R>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u8(R::TAG)?;
    write_string(&mut w, &serde_json::to_string(&ckpt.model.config).map_err(|e| err(e.to_string()))?)?;
    write_string(&mut w, &ckpt.config_echo)?;
    let params = ckpt.model.params();
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (name, p) in ckpt.model.param_names().iter().zip(&params) {
        write_string(&mut w, name)?;
        write_array(&mut w, p)?;
    }
    // Optimizer state.
    write_string(&mut w, &serde_json::to_string(&ckpt.adam.config).map_err(|e| err(e.to_string()))?)?;
    w.write_u64::<LittleEndian>(ckpt.adam.step)?;
    for m in &ckpt.adam.m {
        write_array(&mut w, m)?;
    }
    for v in &ckpt.adam.v {
        write_array(&mut w, v)?;
    }
    // RNG state: seed plus stream position.
    w.write_all(&ckpt.rng.get_seed())?;
    w.write_u128::<LittleEndian>(ckpt.rng.get_word_pos())?;
    w.flush()?;
    Ok(())
}

/// Reads the precision tag without loading the full checkpoint.
pub fn peek_precision(path: &Path) -> Result<u8> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(err("bad magic; not a checkpoint file"));
    }
    Ok(r.read_u8()?)
}

pub fn load<R: Real>(path: &Path) -> Result<Checkpoint<R>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(err("bad magic; not a checkpoint file"));
    }
    let tag = r.read_u8()?;
    if tag != R::TAG {
        return Err(err(format!("precision mismatch: file has f{tag}, expected f{}", R::TAG)));
    }
    let model_cfg: ModelConfig =
        serde_json::from_str(&read_string(&mut r)?).map_err(|e| err(e.to_string()))?;
    let config_echo = read_string(&mut r)?;
    let mut model = SegModel::<R>::new(model_cfg, 0)?;
    let n_params = r.read_u32::<LittleEndian>()? as usize;
    let names = model.param_names();
    if n_params != names.len() {
        return Err(err(format!("expected {} parameters, file has {n_params}", names.len())));
    }
    let mut shapes = Vec::with_capacity(n_params);
    {
        let mut params = model.params_mut();
        for (i, name) in names.iter().enumerate() {
            let got = read_string(&mut r)?;
            if &got != name {
                return Err(err(format!("parameter order mismatch: {got} vs {name}")));
            }
            let a = read_array::<R>(&mut r)?;
            if a.dim() != params[i].dim() {
                return Err(err(format!("shape mismatch for {name}")));
            }
            shapes.push(a.dim());
            *params[i] = a;
        }
    }
    let adam_cfg: AdamConfig =
        serde_json::from_str(&read_string(&mut r)?).map_err(|e| err(e.to_string()))?;
    let mut adam = AdamState::<R>::new(adam_cfg, &shapes);
    adam.step = r.read_u64::<LittleEndian>()?;
    for m in adam.m.iter_mut() {
        *m = read_array(&mut r)?;
    }
    for v in adam.v.iter_mut() {
        *v = read_array(&mut r)?;
    }
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let word_pos = r.read_u128::<LittleEndian>()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(word_pos);
    Ok(Checkpoint { model, adam, rng, config_echo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};

    #[test]
    fn round_trip_is_bitwise_lossless_in_f64() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut cfg = ModelConfig::full(4);
        cfg.mlp_widths = vec![4, 8];
        cfg.gcn_hidden = vec![6];
        let model = SegModel::<f64>::new(cfg, 9).unwrap();
        let shapes: Vec<_> = model.params().iter().map(|p| p.dim()).collect();
        let mut adam = AdamState::new(AdamConfig::default(), &shapes);
        adam.step = 17;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let _ = rng.next_u64(); // advance the stream
        let ckpt = Checkpoint { model, adam, rng: rng.clone(), config_echo: "{\"x\":1}".into() };
        save(&path, &ckpt).unwrap();
        let loaded = load::<f64>(&path).unwrap();
        assert_eq!(loaded.config_echo, ckpt.config_echo);
        assert_eq!(loaded.adam.step, 17);
        for (a, b) in ckpt.model.params().iter().zip(loaded.model.params().iter()) {
            assert_eq!(a.as_slice().unwrap(), b.as_slice().unwrap());
        }
        // RNG resumes at the identical stream position.
        let mut r1 = rng;
        let mut r2 = loaded.rng.clone();
        for _ in 0..8 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
        // Saving the loaded state reproduces the file byte for byte.
        let path2 = dir.path().join("model2.ckpt");
        save(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn precision_tag_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut cfg = ModelConfig::gcn_only(3);
        cfg.gcn_hidden = vec![4];
        let model = SegModel::<f32>::new(cfg, 1).unwrap();
        let shapes: Vec<_> = model.params().iter().map(|p| p.dim()).collect();
        let ckpt = Checkpoint {
            model,
            adam: AdamState::new(AdamConfig::default(), &shapes),
            rng: ChaCha8Rng::seed_from_u64(0),
            config_echo: String::new(),
        };
        save(&path, &ckpt).unwrap();
        assert_eq!(peek_precision(&path).unwrap(), 32);
        assert!(load::<f64>(&path).is_err());
        assert!(load::<f32>(&path).is_ok());
    }
}
